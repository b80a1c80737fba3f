import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_runs
from rngsentinel.sensitivity import (
    inject_runs_bias,
    monobit_single_seq_power,
    power_curve,
    pull_comparison,
    runs_detectability,
)
from rngsentinel.statkit import gauss_two_tail


def test_null_and_full_bias():
    tpp, fpp = monobit_single_seq_power(32, 3.0, 0)
    assert tpp == fpp
    assert monobit_single_seq_power(32, 3.0, 32)[0] == 1.0
    with pytest.raises(ValueError):
        monobit_single_seq_power(32, 3.0, 33)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 200), st.floats(0.0, 4.0))
def test_tpp_monotone_in_j(n, k):
    tpps = [monobit_single_seq_power(n, k, j)[0] for j in range(n + 1)]
    assert all(b >= a - 1e-12 for a, b in zip(tpps, tpps[1:]))


def test_single_sequence_power_stays_low_for_few_bits():
    tpps = [monobit_single_seq_power(32, 3.0, j)[0] for j in range(1, 11)]
    assert max(tpps) < 0.5
    assert monobit_single_seq_power(32, 3.0, 17)[0] >= 0.5


@pytest.mark.parametrize("k", [1.0, 2.0])
def test_fpp_close_to_gaussian_at_large_n(k):
    _, fpp = monobit_single_seq_power(1024, k, 0)
    assert abs(fpp / gauss_two_tail(k) - 1) < 0.10


def test_fpp_discrepancy_shrinks_with_n():
    gaps = [abs(monobit_single_seq_power(n, 3.0, 0)[1] / gauss_two_tail(3.0) - 1) for n in (256, 1024, 4096, 16384)]
    assert gaps[-1] < 0.10
    assert gaps[-1] < gaps[0]


def test_pull_null_bias():
    shift, tail = pull_comparison(32, 32, 0, 1, 3.0, trials=5000, seed=3)
    assert abs(shift) <= 3 and abs(tail) <= 3


def test_shift_beats_tail():
    shift, tail = pull_comparison(32, 32, 1, 1, 3.0, trials=5000, seed=4)
    assert shift > tail and shift >= 3


def test_power_curve_deterministic():
    a = power_curve(32, 32, [1, 2], [1, 10], 3.0, trials=500, seed=9)
    b = power_curve(32, 32, [1, 2], [1, 10], 3.0, trials=500, seed=9)
    assert a == b and len(a) == 4
    assert power_curve(32, 32, [1], [1], 3.0, trials=500, seed=10) != a[:1]


def test_runs_detectability():
    zero = runs_detectability(32, 2**17, 3.0, 0)
    assert not zero.detectable and zero.margin == 0
    assert runs_detectability(32, 2**17, 5.0, 1, f=10).detectable
    assert runs_detectability(128, 2**17, 5.0, 1, f=10).margin >= 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**40 - 1), st.integers(0, 4))
def test_inject_runs_bias_adds_runs(seed, delta):
    bits = np.random.default_rng(seed).integers(0, 2, 40).astype(np.uint8)
    try:
        out = inject_runs_bias(bits, delta)
    except ValueError:
        return
    assert naive_runs(out.tolist()) == naive_runs(bits.tolist()) + delta


def test_inject_runs_bias_on_constant_sequence():
    out = inject_runs_bias(np.zeros(32, np.uint8), 5)
    assert naive_runs(out.tolist()) == 6
