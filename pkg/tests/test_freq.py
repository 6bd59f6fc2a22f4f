import math

import numpy as np
import pytest

from isoidfrit.config import preset
from isoidfrit.discretize import tustin
from isoidfrit.errors import NoCrossing
from isoidfrit.frac import OustaloupSettings, ReferenceModelSpec, reference_open_loop
from isoidfrit.freq import (bode, bode_arrays, estimated_loop_margins, flatness_metric,
                            gain_crossover, loop_margins, phase_margin, spectral_loss_check)
from isoidfrit.poly_tf import DiscreteTF, RationalTF, tf_eval
from isoidfrit.sim import closed_loop_tf, impulse_response
from isoidfrit.tuning import build_controller

T_S = 0.01
INTEGRATOR = tustin(RationalTF([1.0], [1.0, 0.0]), T_S)
FO_STAR = (1.3239, 1.0370, 1.1010, 0.23253, 1.5465)
IO_STAR = (0.80397, 1.2125, 0.33528)


def example1_loops():
    fo, io = preset("example1-fo"), preset("example1-io")
    p = tustin(fo.plant, fo.t_s)
    return (p * build_controller(fo.controller.with_theta(FO_STAR)),
            p * build_controller(io.controller.with_theta(IO_STAR)))


def test_bode_unity():
    for pt in bode(DiscreteTF([1.0], [1.0], T_S), [0.1, 1, 100]):
        assert pt.magnitude_db == pytest.approx(0.0, abs=1e-12)
        assert pt.phase_deg == pytest.approx(0.0, abs=1e-12)


def test_bode_integrator_warp():
    for pt in bode(INTEGRATOR, np.geomspace(0.1, 300, 10)):
        want = 1 / ((2 / T_S) * math.tan(pt.omega * T_S / 2))
        assert 10 ** (pt.magnitude_db / 20) == pytest.approx(want, rel=1e-12)
        assert pt.phase_deg == pytest.approx(-90.0, abs=1e-9)


def test_bode_plant_matches_warped_continuous():
    cfg = preset("example1-fo")
    pd = tustin(cfg.plant, cfg.t_s)
    mag = 10 ** (bode(pd, [1.0])[0].magnitude_db / 20)
    wa = 2 / cfg.t_s * math.tan(cfg.t_s / 2)
    assert mag == pytest.approx(abs(tf_eval(cfg.plant, 1j * wa)), rel=1e-9)


def test_bode_rejects_nyquist():
    with pytest.raises(ValueError):
        bode(INTEGRATOR, [math.pi / T_S])


def test_bode_product_adds(rng):
    a = DiscreteTF.from_zpk([0.3], [0.9, 0.5], 2.0, T_S)
    b = DiscreteTF.from_zpk([-0.2, 0.7], [0.95 + 0.1j, 0.95 - 0.1j], 0.5, T_S)
    w = np.geomspace(0.1, 300, 40)
    _, ma, pa = bode_arrays(a, w)
    _, mb, pb = bode_arrays(b, w)
    _, mab, pab = bode_arrays(a * b, w)
    assert np.allclose(mab, ma + mb, atol=1e-9) and np.allclose(pab, pa + pb, atol=1e-9)


def test_crossover_static_gain_raises():
    with pytest.raises(NoCrossing):
        gain_crossover(DiscreteTF([2.0], [1.0], T_S))


def test_crossover_integrator():
    wc = gain_crossover(INTEGRATOR)
    assert (2 / T_S) * math.tan(wc * T_S / 2) == pytest.approx(1.0, rel=1e-9)
    assert wc == pytest.approx(1.0, rel=1e-4)
    assert phase_margin(INTEGRATOR) == pytest.approx(90.0, abs=1e-6)


def test_crossover_unit_magnitude():
    fo, io = example1_loops()
    for l in (fo, io):
        wc = gain_crossover(l)
        assert abs(tf_eval(l, np.exp(1j * wc * T_S))) == pytest.approx(1.0, abs=1e-6)


def test_example1_fo_margins():
    wc, pm = loop_margins(example1_loops()[0])
    assert wc == pytest.approx(1.0135, rel=0.05)
    assert pm == pytest.approx(79.4165, abs=2.0)


def test_example2_margins():
    cfg = preset("example2")
    l = tustin(cfg.plant, cfg.t_s) * build_controller(
        cfg.controller.with_theta(cfg.baselines["benchmark"]))
    assert phase_margin(l) == pytest.approx(60.1370, abs=2.0)


def test_flatness_bitf():
    l = reference_open_loop(ReferenceModelSpec(80, 1, T_S, OustaloupSettings(5, 1e-4, 1e4)))
    assert abs(flatness_metric(l, gain_crossover(l))) <= 3.0


def test_flatness_double_integrator():
    assert flatness_metric(INTEGRATOR * INTEGRATOR, 1.0) == pytest.approx(0.0, abs=1e-9)


def test_flatness_fo_beats_io():
    fo, io = example1_loops()
    assert abs(flatness_metric(fo, gain_crossover(fo))) < abs(flatness_metric(io, gain_crossover(io)))


def test_phase_unwrap_no_jumps():
    l = example1_loops()[0]
    _, _, ph = bode_arrays(l, np.geomspace(1e-2, 0.99 * math.pi / T_S, 400))
    assert np.max(np.abs(np.diff(ph))) < 180


def test_estimated_margins_match_plant_based():
    cfg = preset("example1-io")
    p = tustin(cfg.plant, cfg.t_s)
    l = p * build_controller(cfg.controller.with_theta(IO_STAR))
    t = impulse_response(closed_loop_tf(p, build_controller(cfg.controller.with_theta(IO_STAR))),
                         4000)
    wc, pm = estimated_loop_margins(t, cfg.t_s)
    wc0, pm0 = loop_margins(l)
    assert wc == pytest.approx(wc0, rel=1e-3) and pm == pytest.approx(pm0, abs=0.1)


def test_estimated_margin_on_principal_branch():
    # fractional integrator of order above one: the restored phase used to land a turn high
    cfg = preset("example2")
    p = tustin(cfg.plant, cfg.t_s)
    c = build_controller(cfg.controller.with_theta((2.2538, 14.339, 1.1567)))
    t = impulse_response(closed_loop_tf(p, c), cfg.samples())
    wc, pm = estimated_loop_margins(t, cfg.t_s)
    wc0, pm0 = loop_margins(p * c)
    assert -180 < pm <= 180
    assert wc == pytest.approx(wc0, rel=1e-3) and pm == pytest.approx(pm0, abs=0.5)

def test_spectral_identical_sequences():
    x = 0.9 ** np.arange(64)
    chk = spectral_loss_check(x, x, np.ones(64))
    assert chk.time_J == 0 and chk.freq_J == 0


def test_spectral_impulse_reference(rng):
    t, m = 0.8 ** np.arange(100), rng.standard_normal(100) * 0.7 ** np.arange(100)
    r = np.zeros(100)
    r[0] = 1
    chk = spectral_loss_check(t, m, r)
    assert chk.time_J == pytest.approx(np.sum((t - m) ** 2), rel=1e-12)
    assert chk.freq_J == pytest.approx(chk.time_J, rel=1e-6)


def decaying(rng, n=513):
    k = np.arange(n)
    s = np.zeros(n)
    for _ in range(3):
        s += rng.standard_normal() * rng.uniform(0.5, 0.95) ** k * np.cos(rng.uniform(0, 1) * k)
    return s


def test_spectral_step_reference(rng):
    chk = spectral_loss_check(decaying(rng), decaying(rng), np.ones(513))
    assert chk.relative_gap <= 0.02


def test_spectral_tail_accounts_for_gap(rng):
    # matched DC gains: the post-horizon spill of a step equals the in-window energy
    t = decaying(rng)
    m = t.copy()
    m[:5] += [0.3, -0.1, -0.1, -0.05, -0.05]
    chk = spectral_loss_check(t, m, np.ones(513))
    assert chk.freq_J == pytest.approx(chk.time_J + chk.tail_J, rel=1e-10)
    assert chk.relative_gap == pytest.approx(0.5, abs=1e-6)


def test_spectral_decayed_reference(rng):
    r = 0.99 ** np.arange(513)
    for _ in range(20):
        assert spectral_loss_check(decaying(rng), decaying(rng), r).relative_gap <= 0.02
