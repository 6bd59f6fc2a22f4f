"""Discrete-time simulation, truncated convolution and deconvolution."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal as _sp

from .errors import (AlgebraicLoopSingular, BadData, ControllerNotInvertible,
                     NotSettled, SingularLeadingSample)
from .poly_tf import DiscreteTF, pair_nearest, tf_feedback_unity, tf_inverse

LEADING_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Signal:
    """Finite sampled sequence ``x_0 .. x_N`` with sampling time ``t_s``."""

    samples: np.ndarray
    t_s: float = 1.0

    def __post_init__(self):
        x = np.array(self.samples, dtype=float).ravel()
        if x.size == 0:
            raise BadData("a signal needs at least one sample")
        if not np.all(np.isfinite(x)):
            raise BadData("signal contains NaN or Inf")
        if not self.t_s > 0:
            raise BadData("sampling time must be positive")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "t_s", float(self.t_s))

    def __len__(self):
        return self.samples.size

    def __array__(self, dtype=None, copy=None):
        return self.samples if dtype is None else self.samples.astype(dtype)

    def __getitem__(self, idx):
        return self.samples[idx]

    @property
    def N(self):
        return self.samples.size - 1

    @property
    def times(self):
        return np.arange(self.samples.size) * self.t_s


@dataclass(frozen=True)
class ExperimentData:
    """One closed-loop record: reference, controller output and plant output."""

    r: Signal
    u: Signal
    y: Signal

    def __post_init__(self):
        n = {len(self.r), len(self.u), len(self.y)}
        if len(n) != 1:
            raise BadData("r, u and y must have the same length")
        ts = {self.r.t_s, self.u.t_s, self.y.t_s}
        if len(ts) != 1:
            raise BadData("r, u and y must share one sampling time")
        if self.r.samples[0] == 0.0:
            raise BadData("the first reference sample must be nonzero (r_0 != 0), "
                          "otherwise the closed-loop impulse response cannot be restored")

    @property
    def t_s(self):
        return self.r.t_s

    @property
    def N(self):
        return self.r.N

    @classmethod
    def from_arrays(cls, r, u, y, t_s):
        return cls(Signal(r, t_s), Signal(u, t_s), Signal(y, t_s))


def _values(x):
    return x.samples if isinstance(x, Signal) else np.asarray(x, dtype=float).ravel()


def _like(template, values, t_s=None):
    if isinstance(template, Signal):
        return Signal(values, template.t_s if t_s is None else t_s)
    return values


def filter_array(g: DiscreteTF, x):
    """Zero-state response of ``g`` to the array ``x``.

    Filters through first-order complex sections, each pole paired with its
    nearest zero.  Standard second-order pairing loses several digits when the
    closed loop has poles within ``1e-6`` of zeros, which fractional loops do.
    """
    x = np.asarray(x, dtype=float)
    if g.is_zero:
        return np.zeros_like(x)
    v = g.gain * x.astype(complex)
    with np.errstate(over="ignore", invalid="ignore"):
        for p, q in pair_nearest(g.zeros, g.poles):
            v = _sp.lfilter([0.0, 1.0] if q is None else [1.0, -q], [1.0, -p], v)
    return v.real


def impulse_response(g: DiscreteTF, N: int) -> Signal:
    if N < 0:
        raise ValueError("N must be non-negative")
    x = np.zeros(N + 1)
    x[0] = 1.0
    return Signal(filter_array(g, x), g.t_s)


def lfilter(g: DiscreteTF, u: Signal) -> Signal:
    return Signal(filter_array(g, _values(u)), u.t_s if isinstance(u, Signal) else g.t_s)


def toeplitz_mul(first_col, v):
    """Truncated causal convolution, i.e. ``Tpl(first_col) @ v``."""
    f, x = _values(first_col), _values(v)
    if f.size != x.size:
        raise ValueError("toeplitz_mul needs equal lengths")
    return _like(first_col, np.convolve(f, x)[: f.size])


def toeplitz_solve(first_col, rhs):
    """Solve ``Tpl(first_col) @ x = rhs`` by forward substitution."""
    f, b = _values(first_col), _values(rhs)
    if f.size != b.size:
        raise ValueError("toeplitz_solve needs equal lengths")
    if abs(f[0]) < LEADING_TOL * np.max(np.abs(f)) or f[0] == 0.0:
        raise SingularLeadingSample("leading sample of the Toeplitz factor is zero")
    # an all-pole IIR filter with denominator f is exactly the triangular recursion
    with np.errstate(over="ignore", invalid="ignore"):
        x = _sp.lfilter([1.0], f, b)
    return _like(first_col, x)


def fictitious_reference(c: DiscreteTF, data: ExperimentData) -> Signal:
    """``C^{-1} u + y``: the reference that explains the logged data under ``c``."""
    if not c.is_biproper:
        raise ControllerNotInvertible("controller must be biproper to have a causal inverse")
    if abs(c.gain) <= LEADING_TOL * np.max(np.abs(c.num.coeffs)):
        raise ControllerNotInvertible("controller leading numerator coefficient vanishes")
    v = filter_array(tf_inverse(c), data.u.samples) + data.y.samples
    if not np.all(np.isfinite(v)):
        raise ControllerNotInvertible("inverse controller response overflowed")
    return Signal(v, data.t_s)


class _Cascade:
    """Per-sample transposed direct-form II state for a section cascade."""

    def __init__(self, g: DiscreteTF):
        sos = g.sos
        self.b = [tuple(row[:3] / row[3]) for row in sos]
        self.a = [tuple(row[4:] / row[3]) for row in sos]
        self.state = [[0.0, 0.0] for _ in sos]
        self.feedthrough = float(np.prod([b[0] for b in self.b]))

    def free(self):
        x = 0.0
        for b, s in zip(self.b, self.state):
            x = b[0] * x + s[0]
        return x

    def step(self, x):
        for b, a, s in zip(self.b, self.a, self.state):
            y = b[0] * x + s[0]
            s[0] = b[1] * x - a[0] * y + s[1]
            s[1] = b[2] * x - a[1] * y
            x = y
        return x


def closed_loop_sim(p: DiscreteTF, c: DiscreteTF, r):
    """Sample-by-sample unity-feedback simulation; returns ``(u, y)``."""
    rv = _values(r)
    t_s = r.t_s if isinstance(r, Signal) else p.t_s
    plant, ctrl = _Cascade(p), _Cascade(c)
    dp, dc = plant.feedthrough, ctrl.feedthrough
    loop = 1.0 + dp * dc
    if abs(loop) < 1e-12:
        raise AlgebraicLoopSingular("1 + d_p d_c = 0")
    u = np.empty_like(rv)
    y = np.empty_like(rv)
    for k, rk in enumerate(rv):
        yf, uf = plant.free(), ctrl.free()
        # y = dp*u + yf, u = dc*(r - y) + uf
        yk = (dp * dc * rk + dp * uf + yf) / loop
        uk = ctrl.step(rk - yk)
        plant.step(uk)
        u[k], y[k] = uk, yk
    return Signal(u, t_s), Signal(y, t_s)


def closed_loop_tf(p: DiscreteTF, c: DiscreteTF) -> DiscreteTF:
    return tf_feedback_unity(p * c)


@dataclass(frozen=True)
class StepMetrics:
    overshoot_percent: float
    settling_time: float
    steady_state: float


def step_metrics(y, setpoint: float, t_s: float | None = None) -> StepMetrics:
    """Overshoot against the final value, 2 % settling time and steady state.

    The final value is the mean of the last 5 % of samples; a peak inside that
    window counts as no overshoot.
    """
    if setpoint == 0:
        raise ValueError("setpoint must be nonzero")
    v = _values(y)
    if t_s is None:
        t_s = y.t_s if isinstance(y, Signal) else 1.0
    window = max(1, int(round(0.05 * v.size)))
    tail = v[-window:]
    y_inf = float(np.mean(tail))
    if np.ptp(tail) > 0.01 * abs(setpoint):
        warnings.warn("response has not settled inside the record", NotSettled, stacklevel=2)
    if int(np.argmax(v)) >= v.size - window:
        # the peak is still rising into the steady-state window
        overshoot = 0.0
    elif y_inf == 0.0:
        overshoot = float("inf") if np.max(v) > 0 else 0.0
    else:
        overshoot = max(0.0, 100.0 * (np.max(v) - y_inf) / y_inf)
    outside = np.nonzero(np.abs(v - y_inf) > 0.02 * abs(y_inf))[0]
    settling = 0.0 if outside.size == 0 else (outside[-1] + 1) * t_s
    return StepMetrics(float(overshoot), float(settling), y_inf)
