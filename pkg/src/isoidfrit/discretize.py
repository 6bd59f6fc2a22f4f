"""Bilinear (Tustin) discretization of continuous transfer functions."""
from __future__ import annotations

import numpy as np

from .errors import DegenerateDenominator, NonProperResult
from .frac import FracTF, OustaloupSettings, f2i
from .poly_tf import DiscreteTF, RationalTF

_INF_TOL = 1e-14


def _map_factors(roots, a):
    """Map factors ``(s - q)`` through ``s = a (z-1)/(z+1)``.

    Each factor becomes ``(a - q)(z - (a+q)/(a-q)) / (z + 1)``, or the constant
    ``-2a / (z + 1)`` when ``q == a`` (the root is sent to infinity).
    """
    mapped, scale = [], 1.0 + 0j
    for q in roots:
        d = a - q
        if abs(d) <= _INF_TOL * max(a, abs(q)):
            scale *= -2.0 * a
        else:
            mapped.append((a + q) / d)
            scale *= d
    return np.asarray(mapped, dtype=complex), scale


def tustin(g: RationalTF, t_s: float) -> DiscreteTF:
    """Substitute ``s = (2/t_s)(z-1)/(z+1)`` in a proper continuous transfer function."""
    if not t_s > 0:
        raise ValueError("sampling time must be positive")
    if not g.is_proper:
        raise NonProperResult("Tustin needs a proper continuous transfer function")
    if g.is_zero:
        return DiscreteTF.from_zpk([], [], 0.0, t_s)
    a = 2.0 / t_s
    zeros, kz = _map_factors(g.zeros, a)
    poles, kp = _map_factors(g.poles, a)
    if kp == 0:
        raise DegenerateDenominator("substituted denominator vanished")
    # (z + 1)^(n_p - n_z) from clearing the substituted denominators
    extra = len(g.poles) - len(g.zeros)
    zeros = np.concatenate([zeros, -np.ones(extra)])
    gain = g.gain * kz / kp
    # a pole at s = 2/t_s leaves the result improper; DiscreteTF rejects it
    return DiscreteTF.from_zpk(zeros, poles, float(np.real(gain)), t_s)


def c2d_f2i(g: FracTF, s: OustaloupSettings, t_s: float) -> DiscreteTF:
    return tustin(f2i(g, s), t_s)
