"""Detection power of the Monobit and RUNS procedures under planted bias.

Pulls follow the usual convention: the shift of an estimator's mean over
``trials`` simulated series, divided by the standard error of that mean
under the unbiased hypothesis. The unbiased spread is measured from an
unbiased simulation of the same size.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .health_tests import monobit_rows, monobit_threshold, runs_expectation
from .statkit import binom_cdf, binom_sf

TRIAL_BLOCK = 1024


@dataclass(frozen=True)
class PowerPoint:
    j: int
    f: int
    k: float
    n: int
    N: int
    tpp: float
    fpp: float
    pull_shift: float
    pull_tail: float
    trials: int

    def record(self) -> dict:
        return asdict(self)


def monobit_single_seq_power(n: int, k: float, j: int) -> tuple[float, float]:
    """(TPP, FPP) of the single-sequence Monobit test with ``j`` forced ones.

    A sequence fails when n1 >= (n + t)/2 or n1 <= (n - t)/2 where t is the
    integer alarm level; with j bits forced, n1 = j + Bin(n - j, 1/2).
    """
    if not 0 <= j <= n:
        raise ValueError("need 0 <= j <= n")
    t = monobit_threshold(n, k)
    up = -(-(n + t) // 2)
    low = (n - t) // 2

    def tail(shift: int) -> float:
        m = n - shift
        hi = 1.0 if up - shift <= 0 else (binom_sf(up - shift - 1, m, 0.5) if up - shift <= m else 0.0)
        lo = 0.0 if low - shift < 0 else binom_cdf(min(low - shift, m), m, 0.5)
        return min(1.0, hi + lo)

    return tail(j), tail(0)


def _series_estimators(rng: np.random.Generator, trials: int, n: int, N: int, j: int, f: int,
                       first_seq: int, t: int) -> tuple[np.ndarray, np.ndarray]:
    raw = rng.integers(0, 256, size=(trials * N, (n + 7) // 8), dtype=np.uint8)
    bits = np.unpackbits(raw, axis=1, bitorder="little")[:, :n]
    if j:
        idx = first_seq + np.arange(trials * N)
        bits[idx % f == 0, :j] = 1
    s = monobit_rows(bits).reshape(trials, N)
    return s.mean(axis=1), (np.abs(s) >= t).mean(axis=1)


def _simulate(seed_seq: np.random.SeedSequence, trials: int, n: int, N: int, j: int, f: int,
              t: int) -> tuple[np.ndarray, np.ndarray]:
    blocks = math.ceil(trials / TRIAL_BLOCK)
    children = seed_seq.spawn(blocks)
    shifts, tails = [], []
    for b, child in enumerate(children):
        size = min(TRIAL_BLOCK, trials - b * TRIAL_BLOCK)
        rng = np.random.Generator(np.random.PCG64(child))
        # sequence numbering continues across trials so the tamper phase
        # does not restart in every series
        sh, tl = _series_estimators(rng, size, n, N, j, f, b * TRIAL_BLOCK * N, t)
        shifts.append(sh)
        tails.append(tl)
    return np.concatenate(shifts), np.concatenate(tails)


def pull_comparison(n: int, N: int, j: int, f: int, k: float, trials: int = 10_000,
                    seed: int = 0) -> tuple[float, float]:
    """(pull_shift, pull_tail) for ``trials`` series with j bits forced every f sequences."""
    if trials < 2:
        raise ValueError("need at least two trials")
    t = monobit_threshold(n, k)
    root = np.random.SeedSequence(seed)
    biased_ss, null_ss = root.spawn(2)
    b_shift, b_tail = _simulate(biased_ss, trials, n, N, j, f, t)
    u_shift, u_tail = _simulate(null_ss, trials, n, N, 0, 1, t)
    _, fpp = monobit_single_seq_power(n, k, 0)
    se_shift = u_shift.std(ddof=1) / math.sqrt(trials)
    se_tail = u_tail.std(ddof=1) / math.sqrt(trials)
    return float(b_shift.mean() / se_shift), float((b_tail.mean() - fpp) / se_tail)


def power_point(n: int, N: int, j: int, f: int, k: float, trials: int = 10_000,
                seed: int = 0) -> PowerPoint:
    tpp, fpp = monobit_single_seq_power(n, k, j)
    ps, pt = pull_comparison(n, N, j, f, k, trials, seed)
    return PowerPoint(j, f, k, n, N, tpp, fpp, ps, pt, trials)


def power_curve(n: int, N: int, js, fs, k: float, trials: int = 10_000,
                seed: int = 0) -> list[PowerPoint]:
    """One PowerPoint per (j, f); each pair draws from its own seed stream."""
    rows = []
    for j in js:
        for f in fs:
            sub = int(np.random.SeedSequence([seed, j, f]).generate_state(1, np.uint64)[0])
            rows.append(power_point(n, N, j, f, k, trials, sub))
    return rows


@dataclass(frozen=True)
class Detectability:
    detectable: bool
    margin: float
    zbar_shift: float
    sigma_zbar: float
    threshold: float


def runs_detectability(n: int, N: int, k: float, delta_r: float, f: int = 1) -> Detectability:
    """Whether a mean run-count change ``delta_r`` in one of every f sequences is visible.

    Each tampered sequence moves its z-score by delta_r / sigma_R (sigma_R
    at pi = 1/2); the series mean moves by that over f, against a standard
    error 1/sqrt(N). ``margin`` is the resulting shift in standard errors.
    """
    if n < 4 or N < 2 or f < 1:
        raise ValueError("need n >= 4, N >= 2, f >= 1")
    _, sigma_r = runs_expectation(n, n // 2)
    shift = delta_r / sigma_r / f
    sigma = 1.0 / math.sqrt(N)
    margin = abs(shift) / sigma
    return Detectability(margin >= k and delta_r != 0, margin, shift, sigma, k)


def inject_runs_bias(sequence, delta_r: int) -> np.ndarray:
    """Add ``delta_r`` runs by flipping bits, leftmost candidates first.

    Flipping an interior bit of a block of three equal bits adds two runs;
    flipping the last bit when it equals its neighbour adds one.
    """
    bits = np.array(sequence, dtype=np.uint8)
    need = int(delta_r)
    i = 1
    while need >= 2 and i < bits.size - 1:
        if bits[i - 1] == bits[i] == bits[i + 1]:
            bits[i] ^= 1
            need -= 2
            i += 2
        else:
            i += 1
    if need and bits.size >= 2 and bits[-1] == bits[-2]:
        bits[-1] ^= 1
        need -= 1
    if need and bits.size >= 2 and bits[0] == bits[1]:
        bits[0] ^= 1
        need -= 1
    if need:
        raise ValueError(f"could not add {delta_r} runs to this sequence")
    return bits
