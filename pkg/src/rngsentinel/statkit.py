"""Probability kernels shared by the health tests and the entropy estimators.

Binomial probabilities use Loader's saddle-point expansion (the same scheme
as R's ``dbinom``), which keeps the relative error near machine precision
for every ``n`` of interest instead of losing digits to cancellation
between large ``lgamma`` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

_LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Stirling series coefficients for the remainder of log(n!).
_S0 = 1.0 / 12
_S1 = 1.0 / 360
_S2 = 1.0 / 1260
_S3 = 1.0 / 1680
_S4 = 1.0 / 1188


def _stirlerr(n: int) -> float:
    """log(n!) - log(sqrt(2 pi n) (n/e)^n) for integer n >= 1."""
    if n <= 15:
        return math.lgamma(n + 1.0) - (n + 0.5) * math.log(n) + n - _LN_SQRT_2PI
    nn = float(n) * n
    if n > 500:
        return (_S0 - _S1 / nn) / n
    if n > 80:
        return (_S0 - (_S1 - _S2 / nn) / nn) / n
    if n > 35:
        return (_S0 - (_S1 - (_S2 - _S3 / nn) / nn) / nn) / n
    return (_S0 - (_S1 - (_S2 - (_S3 - _S4 / nn) / nn) / nn) / nn) / n


def _bd0(x: float, np_: float) -> float:
    """Deviance term x log(x/np) + np - x, evaluated without cancellation."""
    if abs(x - np_) < 0.1 * (x + np_):
        v = (x - np_) / (x + np_)
        s = (x - np_) * v
        ej = 2.0 * x * v
        v2 = v * v
        j = 1
        while True:
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return x * math.log(x / np_) + np_ - x


def _check_domain(k: int, n: int, p: float) -> None:
    if n < 0 or not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")


def binom_pmf(k: int, n: int, p: float) -> float:
    """P(X = k) for X ~ Bin(n, p)."""
    _check_domain(k, n, p)
    q = 1.0 - p
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if q == 0.0:
        return 1.0 if k == n else 0.0
    if k == 0:
        if n == 0:
            return 1.0
        return math.exp(n * math.log1p(-p)) if p > 0.1 else math.exp(-_bd0(n, n * q) - n * p)
    if k == n:
        return math.exp(n * math.log(p)) if q > 0.1 else math.exp(-_bd0(n, n * p) - n * q)
    lc = _stirlerr(n) - _stirlerr(k) - _stirlerr(n - k) - _bd0(k, n * p) - _bd0(n - k, n * q)
    lf = math.log(2.0 * math.pi) + math.log(k) + math.log1p(-k / n)
    return math.exp(lc - 0.5 * lf)


def _tail_sum(ks: range, n: int, p: float) -> float:
    # Terms decay geometrically away from the mode; stop once they no longer
    # affect the sum.
    total = []
    acc = 0.0
    for i in ks:
        t = binom_pmf(i, n, p)
        total.append(t)
        acc += t
        if t < acc * 1e-18 and not _toward_mode(i, ks, n, p):
            break
    return math.fsum(total)


def _toward_mode(i: int, ks: range, n: int, p: float) -> bool:
    mode = (n + 1) * p
    return (ks.step > 0 and i < mode) or (ks.step < 0 and i > mode)


def binom_cdf(k: int, n: int, p: float) -> float:
    """P(X <= k) for X ~ Bin(n, p)."""
    _check_domain(k, n, p)
    if k == n:
        return 1.0
    if k < n * p:
        return _tail_sum(range(k, -1, -1), n, p)
    return 1.0 - binom_sf(k, n, p)


def binom_sf(k: int, n: int, p: float) -> float:
    """P(X > k) for X ~ Bin(n, p); accurate in the far upper tail."""
    if k < 0:
        return 1.0
    _check_domain(k, n, p)
    if k == n:
        return 0.0
    if k + 1 > n * p:
        return _tail_sum(range(k + 1, n + 1), n, p)
    return 1.0 - binom_cdf(k, n, p)


def gauss_two_tail(k: float) -> float:
    """P(|Z| >= k) for a standard normal Z."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return math.erfc(k / math.sqrt(2.0))


def gauss_upper_tail(z: float) -> float:
    """P(Z >= z) for a standard normal Z."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


@dataclass(frozen=True)
class GeometricFit:
    p_hat: float
    stderr: float
    n_obs: int

    @property
    def mean(self) -> float:
        return 1.0 / self.p_hat


@dataclass(frozen=True)
class ExponentialFit:
    rate_hat: float
    stderr: float
    n_obs: int

    @property
    def mean(self) -> float:
        return 1.0 / self.rate_hat


def fit_geometric(gaps: Sequence[int]) -> GeometricFit:
    """Maximum-likelihood fit of P(X = x) = p (1 - p)^(x - 1), x >= 1.

    The standard error comes from the Fisher information,
    ``p * sqrt((1 - p) / n)``.
    """
    n = len(gaps)
    if n == 0:
        raise ValueError("cannot fit a geometric law to zero gaps")
    mean = math.fsum(float(g) for g in gaps) / n
    if mean < 1.0:
        raise ValueError("geometric gaps must be >= 1")
    p = 1.0 / mean
    return GeometricFit(p_hat=p, stderr=p * math.sqrt((1.0 - p) / n), n_obs=n)


def fit_exponential(gaps: Sequence[float]) -> ExponentialFit:
    """Maximum-likelihood exponential rate with stderr rate/sqrt(n)."""
    n = len(gaps)
    if n == 0:
        raise ValueError("cannot fit an exponential law to zero gaps")
    mean = math.fsum(float(g) for g in gaps) / n
    if mean <= 0.0:
        raise ValueError("exponential gaps must be positive")
    rate = 1.0 / mean
    return ExponentialFit(rate_hat=rate, stderr=rate / math.sqrt(n), n_obs=n)

