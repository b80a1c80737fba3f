"""Series-level anomaly detection.

Per-sequence statistics are averaged over series of N sequences. A series
raises a warning when its mean departs from the ideal-source expectation by
``k_warn`` standard errors; ``consecutive_alarm`` warnings in a row raise an
alarm. RCT and APT are folded into the same scheme by treating their
failure count per series as the statistic (expected value and spread from
the Poisson approximation).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .bitstream import BiasModel, BitSource, apply_bias_rows, bits_to_symbols
from .health_tests import (
    AdaptiveProportionTest,
    AptConfig,
    RctConfig,
    RepetitionCountTest,
    RunsConfig,
    SequenceStat,
    apt_fail_prob,
    monobit_rows,
    monobit_threshold,
    runs_fail_rows,
    runs_rows,
    runs_zscore_rows,
)

TESTS = ("monobit", "runs", "rct", "apt")


@dataclass(frozen=True)
class SeriesConfig:
    N: int = 2**17
    k_warn: float = 3.0
    consecutive_alarm: int = 2

    def __post_init__(self) -> None:
        if self.N < 2:
            raise ValueError("a series needs N >= 2 sequences")
        if self.consecutive_alarm < 1:
            raise ValueError("consecutive_alarm must be >= 1")


@dataclass
class SeriesReport:
    series_index: int
    test: str
    mean_stat: float
    expected: float
    stderr: float
    tail_fraction: float
    warning: bool
    alarm: bool = False
    count: int = 0
    failed: int = 0
    degenerate: int = 0

    def record(self) -> dict:
        return {"type": "series", **asdict(self)}


def _is_warning(mean: float, expected: float, stderr: float, k_warn: float) -> bool:
    return abs(mean - expected) >= k_warn * stderr


def aggregate_monobit(
    s_values: Sequence[int], n: int, config: SeriesConfig, series_index: int = 0
) -> SeriesReport:
    s = np.asarray(s_values, dtype=np.int64)
    mean = float(s.mean())
    stderr = math.sqrt(n) / math.sqrt(s.size)
    failed = int(np.count_nonzero(np.abs(s) >= monobit_threshold(n, config.k_warn)))
    return SeriesReport(
        series_index, "monobit", mean, 0.0, stderr, failed / s.size,
        _is_warning(mean, 0.0, stderr, config.k_warn), count=int(s.size), failed=failed,
    )


def aggregate_runs(
    z_values: Sequence[float], config: SeriesConfig, series_index: int = 0, failed: int = 0,
    degenerate: int = 0,
) -> SeriesReport:
    z = np.asarray(z_values, dtype=float)
    if z.size == 0:
        raise ValueError("no valid z-scores in series")
    mean = float(z.mean())
    stderr = 1.0 / math.sqrt(z.size)
    tail = float(np.count_nonzero(np.abs(z) >= config.k_warn)) / z.size
    return SeriesReport(
        series_index, "runs", mean, 0.0, stderr, tail,
        _is_warning(mean, 0.0, stderr, config.k_warn),
        count=int(z.size), failed=failed, degenerate=degenerate,
    )


def aggregate_failures(
    test: str, failures: int, units: int, rate: float, config: SeriesConfig, series_index: int = 0
) -> SeriesReport:
    """Failure count against its expectation ``units * rate``, spread sqrt(lambda)."""
    lam = units * rate
    stderr = math.sqrt(lam)
    frac = failures / units if units else 0.0
    return SeriesReport(
        series_index, test, float(failures), lam, stderr, frac,
        _is_warning(failures, lam, stderr, config.k_warn) if units else False,
        count=units, failed=failures,
    )


class WarningMachine:
    """Turns per-series warnings into alarms."""

    def __init__(self, consecutive_alarm: int = 2) -> None:
        self.consecutive_alarm = consecutive_alarm
        self.streak = 0
        self.alarms = 0

    def update(self, report: SeriesReport) -> bool:
        """Record one series; return True when this series starts an alarm."""
        self.streak = self.streak + 1 if report.warning else 0
        report.alarm = self.streak >= self.consecutive_alarm
        if self.streak == self.consecutive_alarm:
            self.alarms += 1
            return True
        return False


def warning_machine(reports: Iterable[SeriesReport], config: SeriesConfig) -> Iterator[SeriesReport]:
    """Yield the reports that raise an alarm."""
    machine = WarningMachine(config.consecutive_alarm)
    for rep in reports:
        if machine.update(rep):
            yield rep


def gaps_from_positions(positions) -> np.ndarray:
    """Gaps between consecutive failure positions; adjacent failures give 1."""
    pos = np.asarray(positions, dtype=np.int64)
    return np.diff(pos)


def isn_extract(stats: Iterable[SequenceStat]) -> list[int]:
    """Inter-failure sequence numbers from an ordered stream of outcomes.

    The stretch before the first failure has no left edge and is dropped.
    """
    return gaps_from_positions([s.index for s in stats if s.failed]).tolist()


@dataclass
class MonitorSettings:
    n: int = 32
    series: SeriesConfig = field(default_factory=SeriesConfig)
    tests: tuple[str, ...] = ("monobit", "runs")
    symbol_bits: int = 4
    window: int = 512
    alpha: float = 2.0**-20
    cutoff: int | None = None
    bias: BiasModel | None = None

    def __post_init__(self) -> None:
        unknown = set(self.tests) - set(TESTS)
        if unknown:
            raise ValueError(f"unknown tests: {sorted(unknown)}")
        if not self.tests:
            raise ValueError("select at least one test")
        if "runs" in self.tests and self.n < 2:
            raise ValueError("RUNS needs n >= 2")
        if self.bias is not None and self.bias.sequence_length != self.n:
            raise ValueError("bias sequence length must equal n")

    def rct_config(self) -> RctConfig:
        m = 1 << self.symbol_bits
        return RctConfig(m=m, h=float(self.symbol_bits), alpha=self.alpha, cutoff=self.cutoff)

    def apt_config(self) -> AptConfig:
        m = 1 << self.symbol_bits
        return AptConfig(m=m, window=self.window, alpha=self.alpha, c_hi=self.cutoff)

    def echo(self) -> dict:
        return {
            "n": self.n,
            "N": self.series.N,
            "k_warn": self.series.k_warn,
            "consecutive_alarm": self.series.consecutive_alarm,
            "tests": list(self.tests),
            "symbol_bits": self.symbol_bits,
            "window": self.window,
            "alpha": self.alpha,
            "cutoff": self.cutoff,
            "inject": None if self.bias is None else [self.bias.forced_ones, self.bias.tamper_period],
        }


class Monitor:
    """On-line pipeline: bits -> per-test evaluators -> series reports.

    Input is consumed one series (N * n bits) at a time. A trailing partial
    series is not reported. All tests see the same (optionally biased) bits.
    """

    def __init__(self, settings: MonitorSettings) -> None:
        self.settings = settings
        s = settings
        self.machines = {t: WarningMachine(s.series.consecutive_alarm) for t in s.tests}
        self.rct = RepetitionCountTest(s.rct_config()) if "rct" in s.tests else None
        self.apt = AdaptiveProportionTest(s.apt_config()) if "apt" in s.tests else None
        self._runs_cfg = RunsConfig(s.n, s.series.k_warn) if "runs" in s.tests else None
        self._sym_carry = np.empty(0, dtype=np.uint8)
        self.series_done = 0
        self.bits_used = 0
        self.trailing_bits = 0
        self.warnings = {t: 0 for t in s.tests}
        if self.rct is not None:
            m = 1 << s.symbol_bits
            self._rct_rate = (m - 1) * 2.0 ** (-s.symbol_bits * self.rct.cutoff)
        if self.apt is not None:
            self._apt_rate = apt_fail_prob(1.0 / self.apt.config.m, self.apt.config)

    @property
    def alarms(self) -> dict[str, int]:
        return {t: m.alarms for t, m in self.machines.items()}

    def run(self, source: BitSource) -> Iterator[SeriesReport]:
        s = self.settings
        per_series = s.n * s.series.N
        while True:
            bits = source.read_bits(per_series)
            if bits.size < per_series:
                self.trailing_bits = int(bits.size)
                return
            yield from self.process_series(bits)

    def process_series(self, bits: np.ndarray) -> list[SeriesReport]:
        s = self.settings
        idx = self.series_done
        rows = bits.reshape(s.series.N, s.n)
        if s.bias is not None:
            rows = apply_bias_rows(rows.copy(), s.bias, idx * s.series.N)
        out = []
        s_vals = symbols = None
        if "monobit" in s.tests or "runs" in s.tests:
            s_vals = monobit_rows(rows)
        if self.rct is not None or self.apt is not None:
            symbols = self._symbols(rows.ravel())
        for test in s.tests:
            if test == "monobit":
                rep = aggregate_monobit(s_vals, s.n, s.series, idx)
            elif test == "runs":
                r = runs_rows(rows)
                n1 = ((s_vals + s.n) // 2).astype(np.int64)
                z, deg = runs_zscore_rows(r, n1, s.n)
                failed = int(np.count_nonzero(runs_fail_rows(r, n1, self._runs_cfg)))
                ndeg = int(np.count_nonzero(deg))
                if ndeg == z.size:
                    # stuck source: nothing to average, Monobit carries the signal
                    rep = SeriesReport(idx, "runs", 0.0, 0.0, 0.0, 0.0, False,
                                       failed=failed, degenerate=ndeg)
                else:
                    rep = aggregate_runs(z[~deg], s.series, idx, failed=failed, degenerate=ndeg)
            elif test == "rct":
                fails = self.rct.feed(symbols)
                rep = aggregate_failures("rct", int(fails.size), int(symbols.size),
                                         self._rct_rate, s.series, idx)
            else:
                counts = self.apt.feed_counts(symbols)
                nf = int(np.count_nonzero(self.apt.judge_counts(counts)))
                rep = aggregate_failures("apt", nf, int(counts.size), self._apt_rate,
                                         s.series, idx)
            self.machines[test].update(rep)
            self.warnings[test] += rep.warning
            out.append(rep)
        self.series_done += 1
        self.bits_used += bits.size
        return out

    def _symbols(self, flat_bits: np.ndarray) -> np.ndarray:
        b = self.settings.symbol_bits
        bits = np.concatenate([self._sym_carry, flat_bits])
        usable = bits.size - bits.size % b
        self._sym_carry = bits[usable:]
        return bits_to_symbols(bits[:usable], b)

