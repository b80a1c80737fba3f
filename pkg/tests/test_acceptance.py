"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Seeds are fixed once here and never re-picked after seeing results.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from oracles import (
    all_sequences,
    enumerate_monobit_runs,
    exact_binom_cdf,
    exact_binom_tail,
    naive_monobit,
    naive_runs,
)
from rngsentinel.bitstream import SeededSource, SymbolStream
from rngsentinel.cli import main, render_tables, table_one, table_two
from rngsentinel.health_tests import (
    AptConfig,
    MonobitConfig,
    RctConfig,
    RepetitionCountTest,
    RunsConfig,
    AdaptiveProportionTest,
    apt_cutoffs,
    monobit_judge,
    monobit_rows,
    runs_fail_rows,
    runs_moments_exact,
    runs_rows,
)
from rngsentinel.isn_entropy import (
    IsnHistogram,
    apt_scan,
    entropy_from_rct,
    expected_isn_rct,
    isn_conformance,
    rct_gap_survival,
)
from rngsentinel.sensitivity import monobit_single_seq_power, pull_comparison
from rngsentinel.series_monitor import Monitor, MonitorSettings, SeriesConfig
from rngsentinel.statkit import fit_geometric, gauss_two_tail

SEED_C3 = 20240301
SEED_C4 = 20240302
SEED_C5 = 20240303
SEED_C6 = 20240304
SEED_C8 = 20240305


@pytest.fixture
def verdict(capsys):
    def emit(number, title, checks):
        ok = all(passed for passed, _ in checks)
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}")
            for passed, text in checks:
                print(f"    {'ok ' if passed else 'BAD'} {text}")
        assert ok, f"criterion {number} failed"

    return emit


def test_criterion_1_tables(verdict):
    start = time.perf_counter()
    t1 = table_one([1.0, 3.0, 5.0, 7.0])
    t2 = table_two(16, [2.0, 4.0], [2.0**-20, 2.0**-40])
    render_tables(t1, t2, 16, "text")
    elapsed = time.perf_counter() - start
    printed = [("0.317", "3.15", "{:.3f}", "{:.2f}"), ("2.7e-03", "370.4", "{:.1e}", "{:.1f}"),
               ("5.7e-07", "1.7e+06", "{:.1e}", "{:.1e}"), ("2.56e-12", "3.9e+11", "{:.2e}", "{:.1e}")]
    checks = []
    for row, (prob, isn, fp, fi) in zip(t1, printed):
        got = (fp.format(row["two_tailed"]), fi.format(row["expected_isn"]))
        checks.append((got == (prob, isn), f"k={row['k']:g}: {got} vs {(prob, isn)}"))
    cutoffs = [r["C"] for r in t2]
    checks.append((cutoffs == [12, 22, 6, 11], f"cutoffs {cutoffs} vs [12, 22, 6, 11]"))
    checks.append((elapsed < 1.0, f"runtime {elapsed:.3f} s < 1 s"))
    verdict(1, "table reproduction", checks)


def test_criterion_2_apt_cutoffs(verdict):
    start = time.perf_counter()
    lo, hi = apt_cutoffs(16, 512, 2.0**-20)
    alpha, p = Fraction(1, 2**20), Fraction(1, 16)
    up_hit, up_prev = exact_binom_tail(hi, 512, p), exact_binom_tail(hi - 1, 512, p)
    lo_hit, lo_next = exact_binom_cdf(lo, 512, p), exact_binom_cdf(lo + 1, 512, p)
    # tail masses of the inclusive statistic 1 + Bin(511, p) at the same pair
    incl_up, incl_lo = exact_binom_tail(hi - 1, 511, p), exact_binom_cdf(lo - 1, 511, p)
    elapsed = time.perf_counter() - start
    checks = [
        ((lo, hi) == (8, 62), f"apt_cutoffs(16, 512, 2^-20) = {(lo, hi)}"),
        (up_hit <= alpha < up_prev, f"exact P(Y>={hi}) = {float(up_hit):.3e} <= alpha < P(Y>={hi - 1}) = {float(up_prev):.3e}"),
        (lo_hit <= alpha < lo_next, f"exact P(Y<={lo}) = {float(lo_hit):.3e} <= alpha < P(Y<={lo + 1}) = {float(lo_next):.3e}"),
        (True, f"inclusive count tails: P(count>={hi}) = {float(incl_up):.3e}, P(count<={lo}) = {float(incl_lo):.3e}"),
        (elapsed < 10.0, f"runtime {elapsed:.2f} s < 10 s"),
    ]
    verdict(2, "APT cutoffs certified by exact oracle", checks)


def test_criterion_3_unbiased_conformance(verdict):
    start = time.perf_counter()
    n, N = 32, 2**17
    total_bits = 10**8
    src = SeededSource(SEED_C3)
    monitor = Monitor(MonitorSettings(n=n, series=SeriesConfig(N=N), tests=("monobit", "runs")))
    fails_k3 = 0
    seqs = 0
    k1_positions = []
    per = n * N
    while seqs * n + per <= total_bits:
        bits = src.next_bits(per)
        monitor.process_series(bits)
        s = monobit_rows(bits.reshape(N, n))
        fails_k3 += int(np.count_nonzero(np.abs(s) >= 17))
        k1_positions.append(seqs + np.flatnonzero(np.abs(s) >= 6))
        seqs += N
    # remaining whole sequences outside complete series
    rest = src.next_bits(total_bits - seqs * n).reshape(-1, n)
    s = monobit_rows(rest)
    fails_k3 += int(np.count_nonzero(np.abs(s) >= 17))
    k1_positions.append(seqs + np.flatnonzero(np.abs(s) >= 6))
    seqs += rest.shape[0]
    elapsed = time.perf_counter() - start

    p3 = gauss_two_tail(3.0)
    sigma3 = math.sqrt(seqs * p3 * (1 - p3))
    exact3 = monobit_single_seq_power(n, 3.0, 0)[1]
    fit = fit_geometric(np.diff(np.concatenate(k1_positions)))
    exact1 = monobit_single_seq_power(n, 1.0, 0)[1]
    series = monitor.series_done
    warn = monitor.warnings["runs"]
    sigma_w = math.sqrt(series * p3 * (1 - p3))
    checks = [
        (abs(fails_k3 - seqs * p3) <= 3 * sigma3,
         f"Monobit k=3 failures {fails_k3} vs {seqs * p3:.0f} +- {3 * sigma3:.0f} (3 sigma) "
         f"over {seqs} sequences; exact binomial expectation {seqs * exact3:.0f}"),
        (abs(fit.p_hat - 0.317) <= 3 * fit.stderr,
         f"Monobit k=1 geometric p_hat {fit.p_hat:.4f} +- {3 * fit.stderr:.4f} vs 0.317; "
         f"exact binomial p = {exact1:.4f}"),
        (abs(warn - series * p3) <= 3 * sigma_w,
         f"RUNS warnings {warn} in {series} series vs {series * p3:.2f} +- {3 * sigma_w:.2f}"),
        (elapsed < 60, f"runtime {elapsed:.1f} s < 60 s"),
    ]
    verdict(3, "unbiased conformance at n=32 (10^8 bits)", checks)


def test_criterion_4_rct_entropy(verdict):
    m, cutoff, symbols = 16, 3, 10**7
    stream = SymbolStream(SeededSource(SEED_C4), 4)
    rct = RepetitionCountTest(RctConfig(m=m, h=4.0, cutoff=cutoff))
    positions = np.concatenate([rct.feed(stream.next_symbols(10**6)) for _ in range(symbols // 10**6)])
    hist = IsnHistogram.from_positions(positions)
    scale = expected_isn_rct(m, 4.0, cutoff)
    fit = isn_conformance(hist.scaled(scale), "exponential", 1.0,
                          survival=lambda u: rct_gap_survival(m, cutoff, u))
    est = entropy_from_rct(hist, cutoff, m)
    checks = [
        (bool(fit.within), f"scaled-ISN exponential rate {fit.parameter:.4f} +- {3 * fit.fit.stderr:.4f} vs 1"),
        (abs(est.h_measured - 4.0) <= 3 * est.sigma_h,
         f"H = {est.h_measured:.4f} +- {3 * est.sigma_h:.4f} (3 sigma_H) vs 4, from {est.n_fails} gaps"),
        (est.h_lower_bound < est.h_measured, f"lower bound {est.h_lower_bound:.4f} < H"),
    ]
    verdict(4, "RCT entropy at C=3 (10^7 symbols)", checks)


def test_criterion_5_apt_scan(verdict):
    windows = 10**5
    cfg = AptConfig()
    stream = SymbolStream(SeededSource(SEED_C5), 4)
    apt = AdaptiveProportionTest(cfg)
    counts = np.concatenate([apt.feed_counts(stream.next_symbols(512 * 10**4)) for _ in range(windows // 10**4)])
    rows = apt_scan(counts, cfg, range(36, 63), range(8, 29))
    bad = [r for r in rows if not r["within"]]
    worst = max(rows, key=lambda r: abs(r["measured"] - r["predicted"]) / max(r["sigma"], 1e-300))
    checks = [
        (counts.size == windows, f"{counts.size} windows of 512"),
        (not bad, f"{len(rows) - len(bad)}/{len(rows)} cutoffs within 3 sigma "
                  f"(upper 36..62, lower 8..28); worst {worst['side']} C={worst['cutoff']}: "
                  f"{worst['measured']:.3e} vs {worst['predicted']:.3e} +- {worst['sigma']:.1e}"),
    ]
    verdict(5, "APT cutoff scan (10^5 windows)", checks)


def test_criterion_6_sensitivity(verdict):
    start = time.perf_counter()
    trials = 10**5
    checks = []
    table = {}
    for f in (1, 10, 100):
        for j in range(1, 11):
            table[j, f] = pull_comparison(32, 32, j, f, 3.0, trials=trials, seed=SEED_C6 + 1000 * f + j)
    worse = [(j, f) for (j, f), (ps, pt) in table.items() if not ps > pt]
    checks.append((not worse, f"pull_shift > pull_tail for all 30 (j, f); exceptions {worse}"))
    for f in (1, 10):
        ps = table[1, f][0]
        checks.append((ps >= 3, f"j=1, f={f}: pull_shift {ps:.1f} >= 3"))
    ps = table[5, 100][0]
    checks.append((ps >= 3, f"j=5, f=100: pull_shift {ps:.1f} >= 3"))
    elapsed = time.perf_counter() - start
    checks.append((elapsed < 300, f"runtime {elapsed:.1f} s < 300 s at {trials} trials"))
    verdict(6, "sensitivity at n=32, N=32, k=3", checks)


def test_criterion_7_oracle_equivalence(verdict):
    mismatches = 0
    moment_mismatches = 0
    cases = 0
    for n in range(1, 13):
        seqs = np.array(list(all_sequences(n)), dtype=np.uint8)
        s = monobit_rows(seqs)
        r = runs_rows(seqs)
        rep = enumerate_monobit_runs(n)
        moments = {n1: rep.conditional_run_moments(n1) for n1 in range(n + 1)} if n >= 2 else {}
        for k in (0.0, 1.0, 2.0, 3.0):
            k2 = Fraction(k) ** 2
            rf = runs_fail_rows(r, (s + n) // 2, RunsConfig(n, k)) if n >= 2 else None
            cfg = MonobitConfig(n, k)
            for i, bits in enumerate(seqs.tolist()):
                cases += 1
                ref_s, ref_r = naive_monobit(bits), naive_runs(bits)
                ok = s[i] == ref_s and r[i] == ref_r
                ok &= monobit_judge(ref_s, cfg).failed == (ref_s * ref_s >= k2 * n)
                if n >= 2:
                    mean, var = moments[sum(bits)]
                    ok &= bool(rf[i]) == ((ref_r - mean) ** 2 >= k2 * var)
                mismatches += not ok
        for n1 in moments:
            moment_mismatches += moments[n1] != runs_moments_exact(n, n1)
    checks = [
        (mismatches == 0, f"{cases} (sequence, k) cases for n=1..12, {mismatches} mismatches"),
        (moment_mismatches == 0, f"conditional run mean/variance exact for all (n, n1), {moment_mismatches} mismatches"),
    ]
    verdict(7, "exhaustive oracle equivalence n <= 12", checks)


def test_criterion_8_determinism(verdict, tmp_path):
    data = np.random.default_rng(SEED_C8).integers(0, 256, 64 * 1024 + 5, dtype=np.uint8).tobytes()
    src = tmp_path / "input.bin"
    src.write_bytes(data)
    outputs = {}
    codes = set()
    for label, size in (("1B", 1), ("4KiB", 4096), ("1MiB", 1 << 20), ("1MiB-again", 1 << 20)):
        out = tmp_path / f"{label}.jsonl"
        codes.add(main(["monitor", "--input", str(src), "--N", "1024", "--tests", "monobit,runs,rct,apt",
                        "--buffer-size", str(size), "--out", str(out)]))
        outputs[label] = out.read_bytes()
    ref = outputs["1MiB"]
    checks = [(codes <= {0, 2}, f"exit codes {sorted(codes)}")]
    for label, blob in outputs.items():
        checks.append((blob == ref, f"{label}: {len(blob)} bytes, identical={blob == ref}"))
    verdict(8, "byte-identical monitor output", checks)
