"""Retrospective failure-gap analysis and entropy estimates from failure rates.

RCT: with a fixed cutoff C, the mean inter-failure gap ISN gives a measured
failure rate 1/ISN, which is put back into the cutoff relation
C = (log2(m - 1) - log2(alpha)) / H and solved for H (no ceiling). Shifting
ISN down by three standard errors gives the largest failure rate still
compatible with the data, hence a lower bound on H.

APT: the observed window-failure rate is matched to the exact failure
probability of the test as a function of the first symbol's probability p,
giving H = -log2(p).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .health_tests import AptConfig, apt_fail_prob
from .statkit import (
    ExponentialFit,
    GeometricFit,
    binom_cdf,
    binom_sf,
    fit_exponential,
    fit_geometric,
    gauss_two_tail,
)

MIN_RCT_FAILS = 30
MIN_CONFORMANCE_FAILS = 10


class InsufficientFailures(ValueError):
    def __init__(self, have: int, need: int, what: str = "failures") -> None:
        super().__init__(f"{have} {what} observed, at least {need} required")
        self.have = have
        self.need = need


@dataclass(frozen=True)
class IsnHistogram:
    """Inter-failure gaps expressed in units of ``scale`` raw positions.

    Raw gaps have ``scale == 1``. :meth:`scaled` divides by an expected ISN,
    as done for the RCT, without changing the raw mean.
    """

    gaps: np.ndarray
    scale: float = 1.0

    @classmethod
    def from_positions(cls, positions) -> "IsnHistogram":
        return cls(np.diff(np.asarray(positions, dtype=np.int64)))

    @classmethod
    def from_gaps(cls, gaps) -> "IsnHistogram":
        return cls(np.asarray(gaps))

    @property
    def n_fails(self) -> int:
        return int(self.gaps.size)

    @property
    def mean_isn(self) -> float:
        if self.gaps.size == 0:
            raise InsufficientFailures(0, 1, "gaps")
        return float(np.mean(self.gaps, dtype=float)) * self.scale

    @property
    def raw_gaps(self) -> np.ndarray:
        return self.gaps * self.scale if self.scale != 1.0 else self.gaps

    def scaled(self, expected_isn: float) -> "IsnHistogram":
        return IsnHistogram(self.gaps / expected_isn, self.scale * expected_isn)

    def summary(self) -> dict:
        out = {"n_fails": self.n_fails, "scale": self.scale}
        if self.n_fails:
            out["mean_isn"] = self.mean_isn
            out["sigma_mean_isn"] = self.mean_isn / math.sqrt(self.n_fails)
        return out


@dataclass(frozen=True)
class EntropyEstimate:
    method: str
    h_measured: float
    sigma_h: float
    h_lower_bound: float
    confidence: float
    cutoff: int
    n_fails: int
    sigma_h_plus: float | None = None
    sigma_h_minus: float | None = None
    p_hat: float | None = None
    p_stderr: float | None = None
    note: str = ""

    def record(self) -> dict:
        return {"type": "entropy", **{k: v for k, v in self.__dict__.items()}}


def expected_isn_rct(m: int, h: float, cutoff: int) -> float:
    """Mean symbols between RCT failures at the bound (m - 1) 2^(-H C)."""
    return 1.0 / ((m - 1) * 2.0 ** (-h * cutoff))


def rct_failure_rate(probs: Sequence[float], cutoff: int) -> float:
    """Exact per-symbol RCT failure rate sum_i (1 - p_i) p_i^C."""
    return math.fsum((1.0 - p) * p**cutoff for p in probs)


def rct_entropy_from_rate(rate: float, m: int, cutoff: int) -> float:
    return (math.log2(m - 1) - math.log2(rate)) / cutoff


def entropy_from_rct(
    hist: IsnHistogram, cutoff: int, m: int, n_sigma: float = 3.0, min_fails: int = MIN_RCT_FAILS
) -> EntropyEstimate:
    n = hist.n_fails
    if n < min_fails:
        raise InsufficientFailures(n, min_fails)
    isn = hist.mean_isn
    # stderr of an exponential mean; the rate shares its relative error
    sigma_isn = isn / math.sqrt(n)
    h = rct_entropy_from_rate(1.0 / isn, m, cutoff)
    sigma_h = 1.0 / (cutoff * math.log(2) * math.sqrt(n))
    isn_low = isn - n_sigma * sigma_isn
    if isn_low <= 0:
        raise ValueError(f"ISN - {n_sigma} sigma is not positive; collect more failures")
    h_low = rct_entropy_from_rate(1.0 / isn_low, m, cutoff)
    return EntropyEstimate(
        "rct", h, sigma_h, h_low, 1.0 - gauss_two_tail(n_sigma), cutoff, n,
        sigma_h_plus=sigma_h, sigma_h_minus=sigma_h,
    )


def _apt_min(config: AptConfig) -> tuple[float, float]:
    """Location and value of the minimum of the two-sided failure probability."""
    lo, hi = 1e-9, 1.0 - 1e-9
    res = optimize.minimize_scalar(
        lambda t: apt_fail_prob(1.0 / (1.0 + math.exp(-t)), config),
        bounds=(math.log(lo / (1 - lo)), math.log(hi / (1 - hi))),
        method="bounded",
        options={"xatol": 1e-10},
    )
    p = 1.0 / (1.0 + math.exp(-res.x))
    # the bounded search can stop short on the flat floor; refine on the p grid
    grid = np.linspace(max(p - 0.01, 1e-9), min(p + 0.01, 1 - 1e-9), 201)
    vals = [apt_fail_prob(float(g), config) for g in grid]
    i = int(np.argmin(vals))
    return float(grid[i]), float(vals[i])


def apt_invert(rate: float, config: AptConfig) -> float | None:
    """p on the rising branch with P_fail(p) = rate; None below the minimum."""
    p_min, f_min = _apt_min(config)
    if rate <= f_min:
        return None
    if rate >= 1.0:
        return 1.0
    target = math.log(rate)

    def g(p: float) -> float:
        return math.log(max(apt_fail_prob(p, config), 1e-300)) - target

    top = 1.0 - 1e-12
    if g(top) < 0:
        return None
    return optimize.brentq(g, p_min, top, xtol=1e-15, rtol=1e-13, maxiter=500)


def entropy_from_apt(
    n_fails_observed: int, n_windows: int, config: AptConfig, n_sigma: float = 3.0
) -> EntropyEstimate:
    if n_windows <= 0:
        raise ValueError("n_windows must be positive")
    if not 0 <= n_fails_observed <= n_windows:
        raise ValueError("failure count outside [0, n_windows]")
    r = n_fails_observed / n_windows
    # binomial spread of the count; a zero count still gets one count of slack
    sigma_n = max(math.sqrt(n_windows * r * (1.0 - r)), 1.0)
    m = config.m

    def p_of(count: float) -> float | None:
        return apt_invert(min(max(count, 0.0), n_windows) / n_windows, config)

    p_hat = p_of(n_fails_observed)
    if p_hat is None:
        return EntropyEstimate(
            "apt", math.log2(m), 0.0, -math.log2(p_of(n_fails_observed + n_sigma * sigma_n) or 1.0 / m),
            1.0 - gauss_two_tail(n_sigma), config.upper, n_fails_observed, p_hat=1.0 / m,
            note="observed rate below the minimum of the failure curve; fixed point p = 1/m reported",
        )
    p_up = p_of(n_fails_observed + sigma_n) or p_hat
    p_dn = p_of(n_fails_observed - sigma_n) or _apt_min(config)[0]
    p_bound = p_of(n_fails_observed + n_sigma * sigma_n) or p_up
    h = -math.log2(p_hat)
    plus = -math.log2(p_dn) - h
    minus = h + math.log2(p_up)
    return EntropyEstimate(
        "apt", h, 0.5 * (plus + minus), -math.log2(p_bound), 1.0 - gauss_two_tail(n_sigma),
        config.upper, n_fails_observed, sigma_h_plus=plus, sigma_h_minus=minus,
        p_hat=p_hat, p_stderr=0.5 * (p_up - p_dn),
    )


def apt_scan(counts: np.ndarray, config: AptConfig, uppers: Sequence[int] = (),
             lowers: Sequence[int] = (), n_sigma: float = 3.0) -> list[dict]:
    """Measured vs predicted single-tail failure fractions over a range of cutoffs.

    An upper cutoff C fails windows with count >= C, a lower one windows
    with count <= C; predictions are exact for the ideal source p = 1/m.
    """
    total = counts.size
    if total == 0:
        raise InsufficientFailures(0, 1, "complete windows")
    p = 1.0 / config.m
    n = config.window - 1
    rows = []
    for side, cutoffs in (("upper", uppers), ("lower", lowers)):
        for c in cutoffs:
            if side == "upper":
                predicted = binom_sf(c - 2, n, p)
                measured = np.count_nonzero(counts >= c) / total
            else:
                predicted = binom_cdf(c - 1, n, p) if c >= 1 else 0.0
                measured = np.count_nonzero(counts <= c) / total
            sigma = math.sqrt(predicted * (1.0 - predicted) / total)
            rows.append({
                "type": "apt_scan", "side": side, "cutoff": int(c), "measured": float(measured),
                "predicted": predicted, "sigma": sigma,
                "within": bool(abs(measured - predicted) <= n_sigma * sigma),
            })
    return rows


@dataclass
class ConformanceReport:
    law: str
    fit: GeometricFit | ExponentialFit
    expected: float | None
    within: bool | None
    chi2: float
    dof: int
    p_value: float
    conforms: bool = field(init=False)

    def __post_init__(self) -> None:
        gof_ok = self.p_value >= gauss_two_tail(3.0)
        self.conforms = gof_ok and self.within is not False

    @property
    def parameter(self) -> float:
        return self.fit.p_hat if self.law == "geometric" else self.fit.rate_hat

    def record(self) -> dict:
        return {
            "type": "conformance",
            "law": self.law,
            "fitted": self.parameter,
            "stderr": self.fit.stderr,
            "n_obs": self.fit.n_obs,
            "expected": self.expected,
            "within_3sigma": self.within,
            "chi2": self.chi2,
            "dof": self.dof,
            "p_value": self.p_value,
            "conforms": self.conforms,
        }


def _chi2(observed: np.ndarray, expected: np.ndarray, fitted_params: int) -> tuple[float, int, float]:
    stat = float(np.sum((observed - expected) ** 2 / expected))
    dof = max(observed.size - 1 - fitted_params, 1)
    return stat, dof, float(stats.chi2.sf(stat, dof))


def _geometric_bins(gaps: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    n = gaps.size
    obs, exp = [], []
    x = 1
    surv = 1.0
    while True:
        px = p * (1 - p) ** (x - 1)
        if n * (surv - px) < 5 or n * px < 5:
            break
        obs.append(np.count_nonzero(gaps == x))
        exp.append(n * px)
        surv -= px
        x += 1
    obs.append(np.count_nonzero(gaps >= x))
    exp.append(n * surv)
    return np.array(obs, dtype=float), np.array(exp, dtype=float)


def rct_gap_survival(m: int, cutoff: int, upto: int) -> np.ndarray:
    """P(gap >= x) for x = 0..upto between RCT failures of a uniform m-ary source.

    Run-length chain: states 1..C-1 have not fired yet, state C is a run that
    already fired. The chain starts in state C right after a failure.
    """
    p = 1.0 / m
    c = cutoff
    state = np.zeros(c + 1)
    state[c] = 1.0
    surv = np.empty(upto + 1)
    surv[0] = surv[1] = 1.0
    alive = 1.0
    for x in range(1, upto):
        nxt = np.zeros(c + 1)
        nxt[1] = (1.0 - p) * alive
        nxt[2:c] = p * state[1 : c - 1]
        nxt[c] = p * state[c]
        alive -= p * state[c - 1]  # runs reaching C at this step fire
        state = nxt
        surv[x + 1] = alive
    return surv


def _exponential_bins(gaps: np.ndarray, rate: float, scale: float = 1.0,
                      survival: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    n = gaps.size
    k = int(min(20, max(2, n // 5)))
    edges = -np.log1p(-np.arange(1, k) / k) / rate
    obs = np.bincount(np.searchsorted(edges, gaps, side="right"), minlength=k).astype(float)
    if survival is None:
        return obs, np.full(k, n / k)
    # integer raw gaps: a bin holds raw values ceil(lo*s) .. ceil(hi*s) - 1
    first = np.concatenate(([1], np.maximum(np.ceil(edges * scale - 1e-9), 1).astype(np.int64)))
    surv = np.append(survival[first], 0.0)
    return obs, n * (surv[:-1] - surv[1:])


def isn_conformance(
    hist: IsnHistogram, law: str = "geometric", expected: float | None = None,
    n_sigma: float = 3.0, min_fails: int = MIN_CONFORMANCE_FAILS,
    survival=None,
) -> ConformanceReport:
    """Fit the gap law and test it against ``expected`` (p or rate).

    Geometric fits use raw gaps; exponential fits use the gaps as stored,
    so a histogram scaled by its expected ISN should give a rate near 1.
    ``survival(upto)`` optionally supplies the exact P(raw gap >= x) of the
    reference source; the goodness-of-fit bins then use it in place of the
    continuous law, which matters when gaps have a dead time.
    """
    if hist.n_fails < min_fails:
        raise InsufficientFailures(hist.n_fails, min_fails)
    if law == "geometric":
        gaps = np.rint(hist.raw_gaps).astype(np.int64)
        fit = fit_geometric(gaps)
        ref = fit.p_hat if expected is None else expected
        obs, exp = _geometric_bins(gaps, ref)
        param = fit.p_hat
    elif law == "exponential":
        gaps = np.asarray(hist.gaps, dtype=float)
        fit = fit_exponential(gaps)
        ref = fit.rate_hat if expected is None else expected
        table = None
        if survival is not None:
            table = survival(int(math.ceil(-math.log(1e-3) / ref * hist.scale)) + 2)
        obs, exp = _exponential_bins(gaps, ref, hist.scale, table)
        param = fit.rate_hat
    else:
        raise ValueError(f"unknown law {law!r}")
    chi2, dof, pv = _chi2(obs, exp, 1 if expected is None else 0)
    within = None if expected is None else abs(param - expected) <= n_sigma * fit.stderr
    return ConformanceReport(law, fit, expected, within, chi2, dof, pv)


def weighted_average(values: Sequence[float], sigmas: Sequence[float]) -> tuple[float, float]:
    """Inverse-variance weighted mean and its standard error."""
    v = np.asarray(values, dtype=float)
    w = 1.0 / np.asarray(sigmas, dtype=float) ** 2
    return float(np.sum(w * v) / np.sum(w)), float(1.0 / math.sqrt(np.sum(w)))
