"""Frequency-domain analysis of discrete loops."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import MultipleCrossings, NoCrossing
from .poly_tf import POLE_HIT_TOL, DiscreteTF, PoleHit
from .sim import _values, toeplitz_mul

GRID_POINTS = 400
FLAT_POINTS = 21


@dataclass(frozen=True)
class BodePoint:
    omega: float
    magnitude_db: float
    phase_deg: float


def default_band(t_s):
    return 1e-2, 0.99 * math.pi / t_s


def _check_nyquist(omegas, t_s):
    w = np.asarray(omegas, dtype=float)
    if np.any(w <= 0) or np.any(w >= math.pi / t_s):
        raise ValueError("frequencies must lie in (0, pi/t_s)")
    return w


def _factor_response(g: DiscreteTF, w):
    """Magnitude and continuous phase (rad) from per-factor angles on the unit circle."""
    z = np.exp(1j * w * g.t_s)
    dp = z[:, None] - g.poles[None, :]
    if len(g.poles) and np.any(np.min(np.abs(dp), axis=1) < POLE_HIT_TOL):
        raise PoleHit("frequency grid hits a pole")
    if g.is_zero:
        return np.zeros(w.shape), np.zeros(w.shape)
    dz = z[:, None] - g.zeros[None, :]
    log_mag = (np.log(abs(g.gain)) + np.sum(np.log(np.abs(dz)), axis=1)
               - np.sum(np.log(np.abs(dp)), axis=1))
    phase = (np.sum(np.angle(dz), axis=1) - np.sum(np.angle(dp), axis=1)
             + (math.pi if g.gain < 0 else 0.0))
    return np.exp(log_mag), np.unwrap(phase)


def bode(g: DiscreteTF, grid) -> list[BodePoint]:
    w = _check_nyquist(grid, g.t_s)
    mag, ph = _factor_response(g, w)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag)
    return [BodePoint(float(a), float(b), float(c)) for a, b, c in zip(w, db, np.degrees(ph))]


def bode_arrays(g: DiscreteTF, grid):
    """``(omega, magnitude_db, phase_deg)`` as arrays."""
    w = _check_nyquist(grid, g.t_s)
    mag, ph = _factor_response(g, w)
    with np.errstate(divide="ignore"):
        return w, 20.0 * np.log10(mag), np.degrees(ph)


def _crossover(log_mag, lo, hi, points):
    """Lowest root of ``log_mag(omega)`` on a log grid, refined by Brent's method."""
    grid = np.geomspace(lo, hi, points)
    lm = log_mag(grid)
    sign = np.sign(lm)
    idx = np.nonzero(sign[:-1] * sign[1:] <= 0)[0]
    idx = [i for i in idx if not (sign[i] == 0 and i > 0 and sign[i - 1] == 0)]
    if not idx:
        raise NoCrossing(f"|L| does not cross 1 in [{lo:g}, {hi:g}] rad/s")
    if len(idx) > 1:
        warnings.warn(f"{len(idx)} gain crossovers found; using the lowest", MultipleCrossings,
                      stacklevel=3)
    i = idx[0]
    if lm[i] == 0:
        return float(grid[i])
    f = lambda x: float(log_mag(np.array([math.exp(x)]))[0])
    x = brentq(f, math.log(grid[i]), math.log(grid[i + 1]), xtol=1e-12, rtol=1e-12)
    return math.exp(x)


def gain_crossover(l: DiscreteTF, search_band=None, points=GRID_POINTS) -> float:
    lo, hi = search_band or default_band(l.t_s)
    _check_nyquist([lo, hi], l.t_s)
    return _crossover(lambda w: np.log(_factor_response(l, w)[0]), lo, hi, points)


def phase_at(l: DiscreteTF, omega, search_band=None, points=GRID_POINTS):
    """Unwrapped phase in degrees at ``omega``, continued from the band's low edge."""
    lo = (search_band or default_band(l.t_s))[0]
    lo = min(lo, omega)
    w = np.append(np.geomspace(lo, omega, points)[:-1], omega)
    return float(np.degrees(_factor_response(l, w)[1][-1]))


def phase_margin(l: DiscreteTF, search_band=None) -> float:
    wc = gain_crossover(l, search_band)
    return 180.0 + phase_at(l, wc, search_band)


def loop_margins(l: DiscreteTF, search_band=None):
    """``(omega_c, phi_m)`` of an open loop."""
    wc = gain_crossover(l, search_band)
    return wc, 180.0 + phase_at(l, wc, search_band)


def flatness_metric(l: DiscreteTF, omega_c: float, half_decade: float = math.sqrt(10.0)) -> float:
    """Least-squares phase slope (deg/decade) over ``[omega_c/f, omega_c*f]``."""
    if half_decade <= 1:
        raise ValueError("half_decade factor must exceed 1")
    lo, hi = omega_c / half_decade, omega_c * half_decade
    _check_nyquist([lo, hi], l.t_s)
    w = np.geomspace(lo, hi, FLAT_POINTS)
    ph = np.degrees(_factor_response(l, w)[1])
    return float(np.polyfit(np.log10(w), ph, 1)[0])


# -- plant-free estimates from a restored impulse response ---------------------
def impulse_frequency_response(t, omegas, t_s):
    """DTFT of a finite impulse response at the given frequencies."""
    tv = _values(t)
    k = np.arange(tv.size)
    w = np.asarray(omegas, dtype=float)
    return np.exp(-1j * np.outer(w * t_s, k)) @ tv


def estimated_loop_margins(t, t_s, search_band=None, points=GRID_POINTS):
    """Crossover and phase margin of ``L = T / (1 - T)`` with ``T`` from a restored impulse response."""
    lo, hi = search_band or default_band(t_s)

    def loop(w):
        T = impulse_frequency_response(t, w, t_s)
        return T / (1.0 - T)

    wc = _crossover(lambda w: np.log(np.abs(loop(w))), lo, hi, points)
    w = np.append(np.geomspace(lo, wc, points)[:-1], wc)
    phase = np.degrees(np.unwrap(np.angle(loop(w))))
    # 1 - T is tiny and noisy at low frequency, so the unwrapped phase has no
    # absolute anchor; report the margin on the principal branch
    pm = math.remainder(180.0 + float(phase[-1]), 360.0)
    return wc, 180.0 if pm == -180.0 else pm


# -- time/frequency consistency of the loss ------------------------------------
@dataclass(frozen=True)
class SpectralCheck:
    time_J: float
    freq_J: float
    relative_gap: float
    tail_J: float = 0.0


def spectral_loss_check(t_impulse, m_ref, r) -> SpectralCheck:
    """Compare the time-domain loss with ``(1/2pi) int |T - M|^2 Phi_r d omega``.

    The integral is evaluated exactly for the finite sequences by a zero-padded
    DFT (length at least ``2N + 1``), with ``Phi_r = |R(e^{j omega})|^2``.  It
    equals the energy of the full convolution ``r * (t - m)``; the time-domain
    loss stops at sample ``N``, and the difference is reported as ``tail_J``.
    The gap is small when ``r`` has decayed inside the horizon.
    """
    tv, mv, rv = _values(t_impulse), _values(m_ref), _values(r)
    if not tv.size == mv.size == rv.size:
        raise ValueError("sequences must have equal lengths")
    d = tv - mv
    full = np.convolve(rv, d)
    time_J = float(np.sum(full[: d.size] ** 2))
    tail_J = float(np.sum(full[d.size:] ** 2))
    n = 1 << int(math.ceil(math.log2(2 * tv.size)))
    D = np.fft.rfft(d, n)
    R = np.fft.rfft(rv, n)
    power = np.abs(D) ** 2 * np.abs(R) ** 2
    # one-sided spectrum: double interior bins
    weights = np.full(power.size, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    freq_J = float(np.sum(weights * power) / n)
    scale = max(abs(time_J), abs(freq_J))
    gap = 0.0 if scale == 0 else abs(time_J - freq_J) / scale
    return SpectralCheck(time_J, freq_J, gap, tail_J)
