import numpy as np
import pytest

from isoidfrit.config import preset
from isoidfrit.discretize import tustin
from isoidfrit.frac import build_reference_model
from isoidfrit.poly_tf import DiscreteTF
from isoidfrit.sim import (ExperimentData, Signal, closed_loop_sim, closed_loop_tf,
                           impulse_response)
from isoidfrit.tuning import build_controller


def random_roots(rng, n, radius):
    """Conjugate-closed set of ``n`` roots with modulus below ``radius``."""
    roots = []
    while len(roots) < n:
        if n - len(roots) >= 2 and rng.random() < 0.5:
            q = rng.uniform(0.05, radius) * np.exp(1j * rng.uniform(0.1, np.pi - 0.1))
            roots += [q, np.conj(q)]
        else:
            roots.append(rng.uniform(-radius, radius))
    return np.array(roots, dtype=complex)


def random_stable_loop(rng, t_s=1.0, max_order=5, radius=0.97):
    """Random plant (order <= max_order) and biproper controller with a stable loop."""
    while True:
        n = int(rng.integers(1, max_order + 1))
        nz = int(rng.integers(0, n + 1))
        p = DiscreteTF.from_zpk(random_roots(rng, nz, 0.9), random_roots(rng, n, 0.95),
                                rng.uniform(0.05, 1.0), t_s)
        m = int(rng.integers(0, 3))
        c = DiscreteTF.from_zpk(random_roots(rng, m, 0.9), random_roots(rng, m, 0.9),
                                rng.uniform(0.3, 2.0), t_s)
        t = closed_loop_tf(p, c)
        if np.max(np.abs(t.poles), initial=0.0) < radius:
            return p, c


def random_reference(rng, n, t_s=1.0):
    """Noisy excitation; fine for forward checks, ill-conditioned for deconvolution."""
    r = np.ones(n + 1) + 0.3 * rng.standard_normal(n + 1)
    r[0] = 1.0
    return Signal(r, t_s)


def random_step(rng, n, t_s=1.0):
    """Step of random amplitude, the excitation the deconvolution is meant for."""
    return Signal(np.full(n + 1, rng.uniform(0.5, 2.0)), t_s)


def collect(cfg, theta=None):
    p = tustin(cfg.plant, cfg.t_s)
    spec = cfg.controller if theta is None else cfg.controller.with_theta(theta)
    n = cfg.samples()
    r = Signal(np.full(n + 1, cfg.amplitude), cfg.t_s)
    u, y = closed_loop_sim(p, build_controller(spec), r)
    return p, ExperimentData(r, u, y)


@pytest.fixture(scope="session")
def example1():
    cfg = preset("example1-fo")
    p, data = collect(cfg)
    m_ref = impulse_response(build_reference_model(cfg.reference), data.N)
    return cfg, p, data, m_ref


@pytest.fixture(scope="session")
def example2():
    cfg = preset("example2")
    p, data = collect(cfg)
    m_ref = impulse_response(build_reference_model(cfg.reference), data.N)
    return cfg, p, data, m_ref


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
