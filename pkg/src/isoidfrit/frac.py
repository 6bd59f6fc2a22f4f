"""Fractional-order transfer functions and their integer-order approximation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AlphaOutOfRange, ReferenceModelUnstable
from .poly_tf import RationalTF, tf_add, tf_inverse, tf_mul

STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class OustaloupSettings:
    """Recursive-filter settings: ``order`` zero/pole pairs per side, band (omega_b, omega_h)."""

    order: int = 5
    omega_b: float = 1e-4
    omega_h: float = 1e4

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError("Oustaloup order must be a positive integer")
        if not 0 < self.omega_b < self.omega_h:
            raise ValueError("Oustaloup band must satisfy 0 < omega_b < omega_h")
        object.__setattr__(self, "order", int(self.order))


def _merge(terms):
    merged = {}
    for coef, expo in terms:
        coef, expo = float(coef), float(expo)
        if not (math.isfinite(coef) and math.isfinite(expo)):
            raise ValueError("fractional terms must be finite")
        merged[expo] = merged.get(expo, 0.0) + coef
    return tuple(sorted(((c, e) for e, c in merged.items() if c != 0.0), key=lambda t: -t[1]))


@dataclass(frozen=True)
class FracTF:
    """Ratio of fractional polynomials ``sum a_i s^alpha_i``.

    Terms are ``(coefficient, exponent)`` pairs; equal exponents are merged and
    zero coefficients dropped.
    """

    num_terms: tuple = ((1.0, 0.0),)
    den_terms: tuple = ((1.0, 0.0),)

    def __post_init__(self):
        object.__setattr__(self, "num_terms", _merge(self.num_terms))
        object.__setattr__(self, "den_terms", _merge(self.den_terms))
        if not self.den_terms:
            raise ValueError("denominator needs at least one nonzero term")

    @classmethod
    def power(cls, alpha, gain=1.0):
        """``gain * s**alpha`` with the exponent placed so it stays non-negative."""
        if alpha >= 0:
            return cls(((gain, alpha),), ((1.0, 0.0),))
        return cls(((gain, 0.0),), ((1.0, -alpha),))

    @property
    def is_integer_order(self):
        return all(float(e).is_integer() for _, e in self.num_terms + self.den_terms)

    def __call__(self, s):
        """Exact frequency response on the principal branch of ``s**alpha``."""
        s = np.asarray(s, dtype=complex)

        def side(terms):
            return sum(c * np.power(s, e) for c, e in terms) if terms else np.zeros_like(s)

        return side(self.num_terms) / side(self.den_terms)


@dataclass(frozen=True)
class ReferenceModelSpec:
    """Target loop shape: phase margin (deg) and crossover (rad/s) of a Bode ideal loop."""

    phi_m: float
    omega_c: float
    t_s: float
    oust: OustaloupSettings = field(default_factory=OustaloupSettings)

    def __post_init__(self):
        if not 0 < self.phi_m < 180:
            raise ValueError("phase margin must lie in (0, 180) degrees")
        if not self.t_s > 0:
            raise ValueError("sampling time must be positive")
        if not self.oust.omega_b < self.omega_c < self.oust.omega_h:
            raise ValueError("crossover frequency must lie inside the Oustaloup band")

    @property
    def gamma(self):
        return 2.0 * (1.0 - math.radians(self.phi_m) / math.pi)


def bitf(spec: ReferenceModelSpec) -> FracTF:
    """Bode ideal loop ``(omega_c / s)**gamma``."""
    g = spec.gamma
    return FracTF(((spec.omega_c ** g, 0.0),), ((1.0, g),))


def oustaloup(alpha: float, s: OustaloupSettings) -> RationalTF:
    """Oustaloup recursive approximation of ``s**alpha``, ``|alpha| < 1``."""
    if not -1.0 < alpha < 1.0:
        raise AlphaOutOfRange(f"alpha={alpha} outside (-1, 1)")
    if alpha == 0.0:
        return RationalTF.from_zpk([], [], 1.0)
    n = s.order
    k = np.arange(-n, n + 1)
    ratio = s.omega_h / s.omega_b
    span = 2 * n + 1
    w_zero = s.omega_b * ratio ** ((k + n + 0.5 - alpha / 2) / span)
    w_pole = s.omega_b * ratio ** ((k + n + 0.5 + alpha / 2) / span)
    return RationalTF.from_zpk(-w_zero, -w_pole, s.omega_h ** alpha)


def split_exponent(alpha):
    """``alpha = n + f`` with integer ``n`` and ``|f| <= 1/2`` (ties give ``f = +1/2``)."""
    n = math.floor(alpha)
    f = alpha - n
    if f > 0.5:
        n += 1
        f -= 1.0
    return n, f


def _power_approx(coef, alpha, s):
    n, f = split_exponent(alpha)
    base = oustaloup(f, s)
    zeros, poles = list(base.zeros), list(base.poles)
    if n > 0:
        zeros += [0.0] * n
    elif n < 0:
        poles += [0.0] * (-n)
    return RationalTF.from_zpk(zeros, poles, coef * base.gain)


def _integer_side(terms, shift):
    top = max(int(e) + shift for _, e in terms)
    c = np.zeros(top + 1)
    for coef, e in terms:
        c[top - (int(e) + shift)] += coef
    return c


def f2i(g: FracTF, s: OustaloupSettings) -> RationalTF:
    """Integer-order approximation; each ``s**alpha`` becomes ``s**n * oustaloup(f)``."""
    if g.is_integer_order:
        exps = [int(e) for _, e in g.num_terms + g.den_terms]
        shift = max(0, -min(exps))
        num = _integer_side(g.num_terms, shift) if g.num_terms else [0.0]
        return RationalTF(num, _integer_side(g.den_terms, shift))

    def side(terms):
        acc = RationalTF.from_zpk([], [], 0.0)
        for coef, e in terms:
            acc = tf_add(acc, _power_approx(coef, e, s))
        return acc

    num = side(g.num_terms)
    den = side(g.den_terms)
    if num.is_zero:
        return num
    return tf_mul(num, tf_inverse(den))


def reference_open_loop(spec: ReferenceModelSpec):
    """Discretized, integer-order Bode ideal loop ``L_flat(z)``."""
    from .discretize import c2d_f2i

    return c2d_f2i(bitf(spec), spec.oust, spec.t_s)


def build_reference_model(spec: ReferenceModelSpec):
    """Closed-loop reference model ``L_flat / (1 + L_flat)``; all poles must sit inside the unit circle."""
    m = reference_open_loop(spec).feedback()
    radii = np.abs(m.poles)
    if radii.size and np.max(radii) >= 1.0 - STABILITY_MARGIN:
        raise ReferenceModelUnstable(
            f"reference model pole radius {np.max(radii):.12g} >= 1", m.poles)
    return m
