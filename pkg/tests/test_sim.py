import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_reference, random_stable_loop, random_step
from isoidfrit.discretize import tustin
from isoidfrit.errors import (AlgebraicLoopSingular, BadData, ControllerNotInvertible,
                              NotSettled, SingularLeadingSample)
from isoidfrit.poly_tf import DiscreteTF, RationalTF
from isoidfrit.sim import (ExperimentData, Signal, closed_loop_sim, closed_loop_tf,
                           fictitious_reference, impulse_response, lfilter, step_metrics,
                           toeplitz_mul, toeplitz_solve)


def long_division(num, den, n):
    """Series of num/den in powers of z^-1 by polynomial long division."""
    den = np.asarray(den, dtype=float)
    b = np.concatenate([np.zeros(den.size - len(num)), num, np.zeros(n + 1)])
    h = np.zeros(n + 1)
    for k in range(n + 1):
        acc = b[k]
        for i in range(1, min(k, den.size - 1) + 1):
            acc -= den[i] * h[k - i]
        h[k] = acc / den[0]
    return h


def dense_toeplitz(col):
    n = len(col)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            m[i, j] = col[i - j]
    return m


def test_signal_rejects_nan_and_empty():
    with pytest.raises(BadData):
        Signal([1.0, math.nan])
    with pytest.raises(BadData):
        Signal([])


def test_experiment_data_invariants():
    with pytest.raises(BadData, match="r_0 != 0"):
        ExperimentData.from_arrays([0, 1], [1, 1], [1, 1], 0.1)
    with pytest.raises(BadData):
        ExperimentData.from_arrays([1, 1, 1], [1, 1], [1, 1], 0.1)
    with pytest.raises(BadData):
        ExperimentData(Signal([1.0], 0.1), Signal([1.0], 0.2), Signal([1.0], 0.1))


def test_impulse_response_trivial():
    assert np.array_equal(impulse_response(DiscreteTF([1.0], [1.0], 1.0), 4).samples,
                          [1, 0, 0, 0, 0])
    a = 0.7
    h = impulse_response(DiscreteTF([1.0], [1.0, -a], 1.0), 6).samples
    assert np.allclose(h, [0, 1, a, a ** 2, a ** 3, a ** 4, a ** 5], rtol=1e-14)


def test_impulse_response_long_division(rng):
    for _ in range(10):
        p, _ = random_stable_loop(rng)
        want = long_division(p.num.coeffs, p.den.coeffs, 64)
        got = impulse_response(p, 64).samples
        assert np.max(np.abs(got - want)) <= 1e-10 * max(1.0, np.max(np.abs(want)))


def test_lfilter_trivial():
    u = Signal([1.0, -2.0, 3.0])
    assert np.array_equal(lfilter(DiscreteTF([1.0], [1.0], 1.0), u).samples, u.samples)
    ramp = lfilter(DiscreteTF([1.0], [1.0, -1.0], 1.0), Signal(np.ones(6))).samples
    assert np.allclose(ramp, np.arange(6))


def test_lfilter_equals_toeplitz_of_impulse(rng):
    for _ in range(10):
        g, _ = random_stable_loop(rng)
        u = Signal(rng.standard_normal(41))
        want = toeplitz_mul(impulse_response(g, 40), u).samples
        assert np.allclose(lfilter(g, u).samples, want, rtol=0, atol=1e-10)


def test_lfilter_time_invariant(rng):
    g, _ = random_stable_loop(rng)
    u = rng.standard_normal(50)
    y = lfilter(g, Signal(u)).samples
    ys = lfilter(g, Signal(np.concatenate([np.zeros(7), u[:-7]]))).samples
    assert np.allclose(ys[7:], y[:-7], atol=1e-12) and np.all(ys[:7] == 0)


def test_strictly_proper_first_sample_is_zero(rng):
    g = DiscreteTF([0.3, 0.1], [1.0, -0.5, 0.2], 1.0)
    assert lfilter(g, Signal(rng.standard_normal(10) + 5)).samples[0] == 0.0


def test_toeplitz_mul_trivial():
    v = Signal([3.0, 1.0, 4.0])
    assert np.array_equal(toeplitz_mul(Signal([1.0, 0, 0]), v).samples, v.samples)
    assert np.array_equal(toeplitz_mul([1.0, 1.0], [1.0, 1.0]), [1.0, 2.0])


def test_toeplitz_mul_dense_oracle(rng):
    a, v = rng.standard_normal(30), rng.standard_normal(30)
    assert np.allclose(toeplitz_mul(a, v), dense_toeplitz(a) @ v, rtol=0, atol=1e-12)


def test_toeplitz_solve_trivial():
    y = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(toeplitz_solve([1.0, 0, 0], y), y)
    assert np.allclose(toeplitz_solve([2.0, 1.0], [2.0, 3.0]), [1.0, 1.0])


def test_toeplitz_solve_round_trip(rng):
    f = 0.5 ** np.arange(101) * rng.uniform(0.5, 1.0, 101)
    f[0] = 1.0
    v = rng.standard_normal(101)
    x = toeplitz_solve(f, v)
    assert np.linalg.norm(toeplitz_mul(f, x) - v) <= 1e-8 * np.linalg.norm(v)
    assert np.allclose(x, np.linalg.solve(dense_toeplitz(f), v), atol=1e-8)


def test_toeplitz_solve_singular():
    with pytest.raises(SingularLeadingSample):
        toeplitz_solve([0.0, 1.0], [1.0, 1.0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8),
       st.lists(st.floats(-3, 3), min_size=8, max_size=8),
       st.lists(st.floats(-3, 3), min_size=8, max_size=8))
def test_toeplitz_commutes(a, b, v):
    lhs = toeplitz_mul(a, toeplitz_mul(b, v))
    rhs = toeplitz_mul(b, toeplitz_mul(a, v))
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-10)


def test_fictitious_reference_unit_controller(rng):
    data = ExperimentData.from_arrays([1, 1, 1], rng.standard_normal(3), rng.standard_normal(3), 1)
    r = fictitious_reference(DiscreteTF([1.0], [1.0], 1.0), data)
    assert np.allclose(r.samples, data.u.samples + data.y.samples)


def test_fictitious_reference_consistent_with_loop(rng):
    for _ in range(5):
        p, c = random_stable_loop(rng)
        r = random_reference(rng, 200)
        u, y = closed_loop_sim(p, c, r)
        rt = fictitious_reference(c, ExperimentData(r, u, y))
        assert np.max(np.abs(rt.samples - r.samples)) <= 1e-8


def test_fictitious_reference_needs_biproper():
    data = ExperimentData.from_arrays([1, 1], [1, 1], [1, 1], 1)
    with pytest.raises(ControllerNotInvertible):
        fictitious_reference(DiscreteTF([1.0], [1.0, 0.5], 1.0), data)


def test_lemma_identity_other_controller(rng):
    for _ in range(5):
        p, c = random_stable_loop(rng)
        _, c2 = random_stable_loop(rng)
        r = random_reference(rng, 150)
        u, y = closed_loop_sim(p, c, r)
        rt = fictitious_reference(c2, ExperimentData(r, u, y))
        yy = lfilter(closed_loop_tf(p, c2), rt).samples
        assert np.linalg.norm(yy - y.samples) <= 1e-7 * np.linalg.norm(y.samples)


def test_closed_loop_zero_plant(rng):
    c = DiscreteTF.from_zpk([0.3], [0.5], 2.0, 1.0)
    r = Signal(rng.standard_normal(20) + 2)
    u, y = closed_loop_sim(DiscreteTF([0.0], [1.0], 1.0), c, r)
    assert np.all(y.samples == 0)
    assert np.allclose(u.samples, lfilter(c, r).samples, atol=1e-13)


def test_closed_loop_matches_tf_path(rng):
    for _ in range(10):
        p, c = random_stable_loop(rng)
        r = random_reference(rng, 100)
        _, y = closed_loop_sim(p, c, r)
        want = lfilter(closed_loop_tf(p, c), r).samples
        assert np.allclose(y.samples, want, rtol=0, atol=1e-9 * max(1, np.max(np.abs(want))))


def test_closed_loop_algebraic_singular():
    one = DiscreteTF([1.0], [1.0], 1.0)
    with pytest.raises(AlgebraicLoopSingular):
        closed_loop_sim(one, -1.0 * one, Signal([1.0, 1.0]))


def test_deconvolution_restores_impulse_response(rng):
    for _ in range(10):
        p, c = random_stable_loop(rng)
        r = random_step(rng, 300)
        u, y = closed_loop_sim(p, c, r)
        rt = fictitious_reference(c, ExperimentData(r, u, y))
        t = toeplitz_solve(rt, y).samples
        want = impulse_response(closed_loop_tf(p, c), 300).samples
        assert np.linalg.norm(t - want) <= 1e-6 * np.linalg.norm(want)


def test_step_metrics_first_order():
    y = 1 - 0.95 ** np.arange(400)
    m = step_metrics(y, 1.0, 0.1)
    assert m.overshoot_percent == 0.0
    assert m.steady_state == pytest.approx(1.0, abs=1e-6)


def test_step_metrics_second_order_overshoot():
    zeta = 0.5
    g = tustin(RationalTF([1.0], [1.0, 2 * zeta, 1.0]), 0.01)
    y = lfilter(g, Signal(np.ones(3001), 0.01))
    want = 100 * math.exp(-zeta * math.pi / math.sqrt(1 - zeta ** 2))
    assert step_metrics(y, 1.0).overshoot_percent == pytest.approx(want, abs=0.5)


def test_step_metrics_constant():
    m = step_metrics(np.full(50, 2.0), 2.0, 0.1)
    assert m.overshoot_percent == 0.0 and m.settling_time == 0.0 and m.steady_state == 2.0


def test_step_metrics_not_settled():
    with pytest.warns(NotSettled):
        step_metrics(np.linspace(0, 1, 100), 1.0)


def test_step_metrics_settling_time():
    y = np.ones(100)
    y[:10] = 0.5
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert step_metrics(y, 1.0, 0.5).settling_time == pytest.approx(5.0)


def test_lfilter_resolves_near_cancelling_loop(rng):
    # closed loop with poles within 1e-8 of zeros: compare with the feedback recursion
    base = rng.uniform(0.90, 0.999, 8)
    L = DiscreteTF.from_zpk(np.concatenate([base + 1e-8, [-1.0]]),
                            np.concatenate([base, [0.999, 0.3]]), 0.05, 0.01)
    r = Signal(np.ones(800), 0.01)
    _, y = closed_loop_sim(L, DiscreteTF([1.0], [1.0], 0.01), r)
    yy = lfilter(closed_loop_tf(L, DiscreteTF([1.0], [1.0], 0.01)), r).samples
    assert np.linalg.norm(yy - y.samples) <= 1e-9 * np.linalg.norm(y.samples)
