"""Controller classes, the fictitious-reference loss, PSO search and stability screening."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .discretize import tustin
from .errors import IsoFritError, NoCrossing, NotBiproper
from .frac import FracTF, OustaloupSettings, f2i
from .freq import loop_margins
from .poly_tf import DiscreteTF, RationalTF
from .sim import (ExperimentData, Signal, _values, closed_loop_sim, fictitious_reference,
                  step_metrics, toeplitz_mul, toeplitz_solve)

PENALTY = 1e18
OVERFLOW = 1e12
TAIL_FRACTION = 0.1
TAIL_RATIO_LIMIT = 0.3

PARAMETER_NAMES = {
    "IOPID": ("K_p", "K_i", "K_d"),
    "FOPID": ("K_fp", "K_fi", "lambda", "K_fd", "mu"),
    "FOPI": ("K_fp", "K_fi", "lambda"),
}
_ORDER_SLOTS = {"FOPID": (2, 4), "FOPI": (2,), "IOPID": ()}


@dataclass(frozen=True)
class ControllerSpec:
    """Controller class plus one parameter vector.

    IOPID ``[K_p, K_i, K_d]``, FOPID ``[K_fp, K_fi, lambda, K_fd, mu]``, FOPI
    ``[K_fp, K_fi, lambda]``.  ``tau`` is the derivative filter constant and
    defaults to the sampling time.
    """

    structure: str
    theta: tuple
    t_s: float
    oust: OustaloupSettings = field(default_factory=OustaloupSettings)
    tau: float | None = None

    def __post_init__(self):
        structure = self.structure.upper()
        if structure not in PARAMETER_NAMES:
            raise ValueError(f"unknown controller structure {self.structure!r}")
        theta = tuple(float(v) for v in self.theta)
        if len(theta) != len(PARAMETER_NAMES[structure]):
            raise ValueError(f"{structure} takes {len(PARAMETER_NAMES[structure])} parameters")
        orders = _ORDER_SLOTS[structure]
        for i, v in enumerate(theta):
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{PARAMETER_NAMES[structure][i]} must be finite and >= 0")
            if i in orders and v > 2:
                raise ValueError(f"{PARAMETER_NAMES[structure][i]} must lie in [0, 2]")
        if not self.t_s > 0:
            raise ValueError("sampling time must be positive")
        object.__setattr__(self, "structure", structure)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "tau", float(self.t_s if self.tau is None else self.tau))

    def with_theta(self, theta):
        return replace(self, theta=tuple(theta))


def _const(k):
    return RationalTF.from_zpk([], [], k)


def _fo_integral(lam, oust):
    return f2i(FracTF.power(-lam), oust)


def _fo_filtered_derivative(mu, tau, oust):
    # s^mu / (1 + tau s^mu) == feedback(tau * s^mu) / tau
    d = f2i(FracTF.power(mu), oust)
    return (tau * d).feedback() * (1.0 / tau)


def continuous_controller(spec: ControllerSpec) -> RationalTF:
    th = spec.theta
    if spec.structure == "IOPID":
        kp, ki, kd = th
        c = _const(kp)
        if ki:
            c = c + RationalTF.from_zpk([], [0.0], ki)
        if kd:
            c = c + RationalTF.from_zpk([0.0], [-1.0 / spec.tau], kd / spec.tau)
        return c
    kp, ki, lam = th[:3]
    c = _const(kp)
    if ki:
        c = c + ki * _fo_integral(lam, spec.oust)
    if spec.structure == "FOPID":
        kd, mu = th[3:]
        if kd:
            c = c + kd * _fo_filtered_derivative(mu, spec.tau, spec.oust)
    return c


def build_controller(spec: ControllerSpec) -> DiscreteTF:
    """Discrete controller ``c2d(f2i(C(s; theta)))``; must be biproper."""
    c = tustin(continuous_controller(spec), spec.t_s)
    if not c.is_biproper:
        raise NotBiproper(f"{spec.structure} controller at theta={spec.theta} is not biproper")
    return c


# -- loss ----------------------------------------------------------------------
class FritLoss:
    """``J(theta)`` for one data record and one reference impulse response.

    Reads only the logged data and the reference model; the plant never enters.
    Invalid or overflowing parameter vectors evaluate to ``PENALTY``.
    """

    def __init__(self, spec_template: ControllerSpec, data: ExperimentData, m_ref):
        m = _values(m_ref)
        if m.size != data.N + 1:
            raise ValueError("m_ref length must match the data horizon")
        self.template = spec_template
        self.data = data
        self.m_ref = m
        self.r = data.r.samples
        self.y = data.y.samples
        self.y_ref = toeplitz_mul(self.r, m)

    @property
    def default_threshold(self):
        """Ten times the loss of a trivial all-zero output estimate."""
        return 10.0 * float(np.sum(self.y_ref ** 2))

    def restore(self, theta):
        """Closed-loop impulse response ``t_[0:N](theta)`` restored from data."""
        c = build_controller(self.template.with_theta(theta))
        rt = fictitious_reference(c, self.data).samples
        if np.max(np.abs(rt)) > OVERFLOW:
            raise FloatingPointError("fictitious reference overflow")
        t = toeplitz_solve(rt, self.y)
        if not np.all(np.isfinite(t)) or np.max(np.abs(t)) > OVERFLOW:
            raise FloatingPointError("restored impulse response overflow")
        return t

    def estimate_output(self, theta):
        return toeplitz_mul(self.r, self.restore(theta))

    def __call__(self, theta):
        try:
            y_hat = self.estimate_output(theta)
        except (IsoFritError, FloatingPointError, ValueError, ZeroDivisionError,
                np.linalg.LinAlgError):
            return PENALTY
        if not np.all(np.isfinite(y_hat)) or np.max(np.abs(y_hat)) > OVERFLOW:
            return PENALTY
        j = float(np.sum((y_hat - self.y_ref) ** 2))
        return j if j < PENALTY else PENALTY


def loss_J(theta, spec_template: ControllerSpec, data: ExperimentData, m_ref) -> float:
    return FritLoss(spec_template, data, m_ref)(theta)


def default_j_threshold(data: ExperimentData, m_ref) -> float:
    y_ref = toeplitz_mul(data.r.samples, _values(m_ref))
    return 10.0 * float(np.sum(y_ref ** 2))


# -- stability screen ---------------------------------------------------------
def stability_screen(restored_impulse, J: float, J_threshold: float) -> str:
    """Classify a tuned loop as ``likely_bibo``, ``suspect`` or ``rejected``.

    Finite-horizon proxy for BIBO stability: growth shows up as energy or peak
    magnitude concentrated in the last 10 % of the restored impulse response.
    """
    if restored_impulse is None or not math.isfinite(J) or J >= PENALTY:
        return "rejected"
    t = np.abs(_values(restored_impulse))
    n = t.size
    tail = t[-max(1, int(math.ceil(TAIL_FRACTION * n))):]
    head = t[: max(1, n // 2)]
    total = float(np.linalg.norm(t))
    ratio = 0.0 if total == 0 else float(np.linalg.norm(tail)) / total
    if ratio > TAIL_RATIO_LIMIT or np.max(tail) > np.max(head):
        return "suspect"
    return "likely_bibo" if J < J_threshold else "suspect"


# -- particle swarm -----------------------------------------------------------
@dataclass(frozen=True)
class SearchBounds:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ValueError("bounds must have equal dimension")
        if any(not (math.isfinite(a) and math.isfinite(b)) or a > b for a, b in zip(lo, hi)):
            raise ValueError("bounds must be finite with lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return len(self.lower)


@dataclass(frozen=True)
class PsoSettings:
    swarm_size: int = 40
    max_iters: int = 150
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    seed: int = 0
    stall_tol: float = 1e-6
    stall_iters: int = 20

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be at least 2")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if min(self.inertia, self.cognitive, self.social, self.stall_tol) < 0:
            raise ValueError("PSO coefficients must be non-negative")


@dataclass
class TuneResult:
    theta_star: tuple
    J_star: float
    restored_impulse: Signal | None
    verdict: str | None
    history: list
    iterations: int
    evaluations: int
    J_threshold: float | None = None


def _evaluate(loss, X, pool):
    rows = [tuple(float(v) for v in x) for x in X]
    values = list(pool.map(loss, rows)) if pool is not None else [loss(x) for x in rows]
    return np.array([v if math.isfinite(v) else PENALTY for v in values])


def pso_minimize(loss, bounds: SearchBounds, settings: PsoSettings = PsoSettings(), *,
                 initial=None, threads: int = 1, J_threshold: float | None = None) -> TuneResult:
    """Global-best particle swarm with reflective bounds.

    Deterministic for a given seed.  Particles are evaluated in index order
    (optionally on a thread pool), so the thread count never changes the result.
    If ``loss`` exposes ``restore(theta)`` the best point is screened for stability.
    """
    rng = np.random.default_rng(settings.seed)
    lb = np.array(bounds.lower)
    ub = np.array(bounds.upper)
    span = ub - lb
    S, D = settings.swarm_size, bounds.dim
    X = lb + rng.random((S, D)) * span
    if initial is not None:
        init = np.clip(np.atleast_2d(np.asarray(initial, dtype=float)), lb, ub)[:S]
        X[: len(init)] = init
    V = (2.0 * rng.random((S, D)) - 1.0) * span * 0.2

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        f = _evaluate(loss, X, pool)
        evaluations = S
        P, Pf = X.copy(), f.copy()
        g = int(np.argmin(Pf))
        history = [float(Pf[g])]
        iterations = 1
        while iterations < settings.max_iters:
            n = settings.stall_iters
            if n and len(history) > n:
                old = history[-1 - n]
                if (old - history[-1]) <= settings.stall_tol * max(abs(old), 1e-300):
                    break
            r1 = rng.random((S, D))
            r2 = rng.random((S, D))
            V = (settings.inertia * V + settings.cognitive * r1 * (P - X)
                 + settings.social * r2 * (P[g] - X))
            V = np.clip(V, -span, span)
            X = X + V
            over, under = X > ub, X < lb
            X = np.where(over, 2 * ub - X, X)
            X = np.where(under, 2 * lb - X, X)
            V = np.where(over | under, -V, V)
            X = np.clip(X, lb, ub)
            f = _evaluate(loss, X, pool)
            evaluations += S
            better = f < Pf
            P[better] = X[better]
            Pf[better] = f[better]
            g = int(np.argmin(Pf))
            history.append(float(Pf[g]))
            iterations += 1
    finally:
        if pool is not None:
            pool.shutdown()

    theta = tuple(float(v) for v in P[g])
    J = float(loss(theta))
    restored, verdict = None, None
    if hasattr(loss, "restore"):
        if J_threshold is None:
            J_threshold = getattr(loss, "default_threshold", math.inf)
        try:
            t = loss.restore(theta)
            restored = Signal(t, loss.data.t_s)
        except (IsoFritError, FloatingPointError, ValueError):
            restored = None
        verdict = stability_screen(restored, J, J_threshold)
    return TuneResult(theta, J, restored, verdict, history, iterations, evaluations, J_threshold)


def tune_controller(spec_template: ControllerSpec, bounds: SearchBounds, data: ExperimentData,
                    m_ref, settings: PsoSettings = PsoSettings(), *, threads=1,
                    J_threshold=None, include_initial=True) -> TuneResult:
    """Minimize ``J`` over the bounds, seeding one particle with the template's theta."""
    loss = FritLoss(spec_template, data, m_ref)
    init = [spec_template.theta] if include_initial else None
    return pso_minimize(loss, bounds, settings, initial=init, threads=threads,
                        J_threshold=J_threshold)


# -- validation with a plant model ------------------------------------------------
@dataclass(frozen=True)
class RobustnessRow:
    gain: float
    overshoot_percent: float
    settling_time: float
    omega_c: float
    phi_m: float


def gain_robustness_report(p: DiscreteTF, c: DiscreteTF, gains, r) -> list[RobustnessRow]:
    """Step metrics and loop margins of ``g * P`` with ``C`` for each gain ``g``."""
    rv = r if isinstance(r, Signal) else Signal(r, p.t_s)
    rows = []
    for g in gains:
        pg = float(g) * p
        _, y = closed_loop_sim(pg, c, rv)
        m = step_metrics(y, float(rv.samples[-1]))
        try:
            wc, pm = loop_margins(pg * c)
        except NoCrossing:
            wc, pm = math.nan, math.nan
        rows.append(RobustnessRow(float(g), m.overshoot_percent, m.settling_time, wc, pm))
    return rows
