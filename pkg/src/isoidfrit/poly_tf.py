"""Polynomial and rational transfer-function algebra in s and z.

Transfer functions are held in factored form ``k * prod(x - z_i) / prod(x - p_i)``.
Coefficient polynomials are available as derived views (``num``/``den``).

The factored form matters here: Oustaloup approximants discretized at 10 ms put
a dozen poles within ``1e-2`` of ``z = 1``, and a monomial z-polynomial cannot
resolve them in double precision.  Whenever a sum forces us back to coefficients
(``tf_add``, ``tf_feedback_unity``) the polynomial is formed in the shifted
variable ``w = x - c`` with ``c = 0`` for s and ``c = 1`` for z.  Stable roots
then give sign-coherent coefficients, and the roots are recovered to high
relative accuracy.
"""
from __future__ import annotations

from collections import Counter
from functools import cached_property
from numbers import Number

import numpy as np

from .errors import DegenerateLoop, NonInvertible, NonProperResult, PoleHit

TRIM_TOL = 1e-12
POLE_HIT_TOL = 1e-300
CANCEL_TOL = 1e-12


def _as_coeffs(coeffs):
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if c.ndim != 1:
        raise ValueError("polynomial coefficients must be one-dimensional")
    if c.size == 0:
        c = np.zeros(1)
    if not np.all(np.isfinite(c)):
        raise ValueError("polynomial coefficients must be finite")
    return c


def _trim(c, tol):
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return np.zeros(1)
    keep = np.nonzero(np.abs(c) > tol * scale)[0]
    return c[keep[0]:]


class Polynomial:
    """Real polynomial, coefficients ordered highest degree first.

    Leading coefficients smaller than ``trim_tol`` times the largest coefficient
    magnitude are dropped.  Pass ``trim_tol=0`` for graded polynomials whose
    dynamic range legitimately exceeds ``1e12`` (Oustaloup products do).
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs, *, trim_tol=TRIM_TOL):
        c = _trim(_as_coeffs(coeffs), trim_tol)
        c.flags.writeable = False
        self._c = c

    @property
    def coeffs(self):
        return self._c

    @property
    def degree(self):
        return self._c.size - 1

    @property
    def is_zero(self):
        return self._c.size == 1 and self._c[0] == 0.0

    @property
    def lead(self):
        return float(self._c[0])

    def __call__(self, x):
        return np.polyval(self._c, x)

    def __mul__(self, other):
        if isinstance(other, Number):
            return Polynomial(self._c * other, trim_tol=0)
        return poly_mul(self, other)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, Number):
            other = Polynomial([other])
        return Polynomial(np.polyadd(self._c, other._c))

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-self._c, trim_tol=0)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Polynomial) else -other)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._c.shape == other._c.shape and bool(np.all(self._c == other._c))

    def __hash__(self):
        return hash(self._c.tobytes())

    def roots(self):
        return find_roots(self._c)[0]

    def __repr__(self):
        return f"Polynomial({self._c.tolist()})"


def poly_mul(a: Polynomial, b: Polynomial) -> Polynomial:
    return Polynomial(np.convolve(a.coeffs, b.coeffs), trim_tol=0)


# -- root finding -------------------------------------------------------------
def _polish(c, r, iters=3):
    # Newton steps, kept only where they reduce the residual
    dc = np.polyder(c)
    for _ in range(iters):
        f = np.polyval(c, r)
        df = np.polyval(dc, r)
        safe = np.where(df == 0, 1.0, df)
        cand = np.where(df == 0, r, r - f / safe)
        better = np.abs(np.polyval(c, cand)) < np.abs(f)
        r = np.where(better, cand, r)
    return r


def find_roots(coeffs, shift=0.0):
    """Roots of ``sum c_i w^(n-i)`` mapped back by ``x = w + shift``.

    Companion-matrix eigenvalues (LAPACK balances the matrix first) followed by
    a few Newton steps.  Returns ``(roots, leading_coefficient)``.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "f")
    if c.size == 0:
        return np.zeros(0, dtype=complex), 0.0
    lead = float(c[0])
    if c.size == 1:
        return np.zeros(0, dtype=complex), lead
    r = np.roots(c).astype(complex)
    if r.size:
        r = _polish(c, r)
        r = np.where(np.abs(r.imag) == 0, r.real + 0j, r)
    return r + shift, lead


def _shifted_poly(roots, shift):
    if len(roots) == 0:
        return np.ones(1)
    return np.real(np.poly(np.asarray(roots) - shift))


def _cancel_sum(p1, p2):
    """``p1 + p2`` with leading terms dropped when they cancel to roundoff."""
    n = max(p1.size, p2.size)
    p1 = np.concatenate([np.zeros(n - p1.size), p1])
    p2 = np.concatenate([np.zeros(n - p2.size), p2])
    s = p1 + p2
    mag = np.abs(p1) + np.abs(p2)
    live = np.nonzero(np.abs(s) > CANCEL_TOL * mag)[0]
    if live.size == 0:
        return np.zeros(0)
    return s[live[0]:]


# -- transfer functions -------------------------------------------------------
class _TransferFunction:
    _shift = 0.0
    _var = "s"

    def __init__(self, num, den):
        n = num if isinstance(num, Polynomial) else Polynomial(num)
        d = den if isinstance(den, Polynomial) else Polynomial(den)
        if d.is_zero:
            raise ZeroDivisionError("denominator is the zero polynomial")
        self.poles = find_roots(d.coeffs)[0]
        if n.is_zero:
            self.zeros = np.zeros(0, dtype=complex)
            self.gain = 0.0
        else:
            self.zeros = find_roots(n.coeffs)[0]
            self.gain = n.lead / d.lead
        self.__dict__["num"] = n
        self.__dict__["den"] = d

    @classmethod
    def _from_zpk(cls, zeros, poles, gain, **meta):
        obj = cls.__new__(cls)
        gain = float(np.real(gain))
        obj.zeros = np.asarray(zeros, dtype=complex).ravel() if gain != 0 else np.zeros(0, dtype=complex)
        obj.poles = np.asarray(poles, dtype=complex).ravel()
        obj.gain = gain
        for key, value in meta.items():
            setattr(obj, key, value)
        obj._validate()
        return obj

    def _validate(self):
        pass

    def _meta(self):
        return {}

    def _make(self, zeros, poles, gain):
        return type(self)._from_zpk(zeros, poles, gain, **self._meta())

    # -- views ---------------------------------------------------------------
    @cached_property
    def num(self) -> Polynomial:
        return Polynomial(self.gain * _shifted_poly(self.zeros, 0.0), trim_tol=0)

    @cached_property
    def den(self) -> Polynomial:
        return Polynomial(_shifted_poly(self.poles, 0.0), trim_tol=0)

    @property
    def is_zero(self):
        return self.gain == 0.0

    @property
    def relative_degree(self):
        return len(self.poles) - (0 if self.is_zero else len(self.zeros))

    @property
    def is_proper(self):
        return self.relative_degree >= 0

    @property
    def is_biproper(self):
        return not self.is_zero and self.relative_degree == 0

    # -- evaluation ----------------------------------------------------------
    def __call__(self, x):
        return tf_eval(self, x)

    # -- algebra -------------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Number):
            return self._make([], [], float(other))
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if self._meta() != other._meta():
            raise ValueError("sampling times differ")
        return other

    def __mul__(self, other):
        return tf_mul(self, self._coerce(other))

    __rmul__ = __mul__

    def __add__(self, other):
        return tf_add(self, self._coerce(other))

    __radd__ = __add__

    def __neg__(self):
        return self._make(self.zeros, self.poles, -self.gain)

    def __sub__(self, other):
        return tf_add(self, -self._coerce(other))

    def __rsub__(self, other):
        return tf_add(-self, self._coerce(other))

    def inverse(self):
        return tf_inverse(self)

    def feedback(self):
        return tf_feedback_unity(self)

    def __repr__(self):
        extra = "".join(f", {k}={v!r}" for k, v in self._meta().items())
        return (f"{type(self).__name__}(gain={self.gain!r}, "
                f"zeros={len(self.zeros)}, poles={len(self.poles)}{extra})")


class RationalTF(_TransferFunction):
    """Continuous-time rational transfer function in s (may be improper)."""

    _shift = 0.0
    _var = "s"

    @classmethod
    def from_zpk(cls, zeros, poles, gain):
        return cls._from_zpk(zeros, poles, gain)


class DiscreteTF(_TransferFunction):
    """Proper discrete-time rational transfer function in z with sampling time ``t_s``."""

    _shift = 1.0
    _var = "z"

    def __init__(self, num, den, t_s):
        super().__init__(num, den)
        self.t_s = float(t_s)
        self._validate()

    @classmethod
    def from_zpk(cls, zeros, poles, gain, t_s):
        return cls._from_zpk(zeros, poles, gain, t_s=float(t_s))

    def _meta(self):
        return {"t_s": self.t_s}

    def _validate(self):
        if not self.t_s > 0:
            raise ValueError("sampling time must be positive")
        if not self.is_proper:
            raise NonProperResult(
                f"discrete transfer function is improper ({len(self.zeros)} zeros, {len(self.poles)} poles)")

    @property
    def feedthrough(self):
        """Impulse-response sample ``g_0``."""
        return self.gain if self.is_biproper else 0.0

    @cached_property
    def sos(self):
        """Second-order-section cascade realizing the transfer function."""
        from scipy.signal import zpk2sos

        if self.is_zero:
            return np.array([[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]])
        if len(self.poles) == 0:
            return np.array([[self.gain, 0.0, 0.0, 1.0, 0.0, 0.0]])
        # zpk2sos pads missing zeros at the origin, i.e. realizes z^d G(z).  Each
        # padded zero leaves an exact trailing 0 in its section's numerator, so
        # shifting that numerator one tap restores a factor z^-1.
        sos = zpk2sos(self.zeros, self.poles, self.gain)
        delay = len(self.poles) - len(self.zeros)
        for row in sos:
            while delay and row[2] == 0.0 and np.any(row[:3]):
                row[:3] = [0.0, row[0], row[1]]
                delay -= 1
        if delay:
            raise AssertionError("section cascade could not absorb the relative degree")
        return sos


# -- module-level operations ---------------------------------------------------
def tf_mul(a, b):
    return a._make(np.concatenate([a.zeros, b.zeros]),
                   np.concatenate([a.poles, b.poles]),
                   a.gain * b.gain)


def _split_common(r1, r2):
    """Multiset intersection of two root lists (exact equality) and the remainders."""
    left = Counter(complex(v) for v in r1)
    right = Counter(complex(v) for v in r2)
    common = left & right
    rest = lambda cnt: np.array(list((cnt - common).elements()), dtype=complex)
    return np.array(list(common.elements()), dtype=complex), rest(left), rest(right)


def tf_add(a, b):
    if b.is_zero:
        return a
    if a.is_zero:
        return b
    c = a._shift
    # factors shared exactly by both terms (e.g. the (z+1) padding Tustin adds)
    # stay symbolic; as polynomial roots they would be multiple and ill-conditioned
    common, r1, r2 = _split_common(np.concatenate([a.zeros, b.poles]),
                                   np.concatenate([b.zeros, a.poles]))
    p1 = a.gain * _shifted_poly(r1, c)
    p2 = b.gain * _shifted_poly(r2, c)
    poles = np.concatenate([a.poles, b.poles])
    s = _cancel_sum(p1, p2)
    if s.size == 0:
        return a._make([], poles, 0.0)
    zeros, lead = find_roots(s, c)
    return a._make(np.concatenate([zeros, common]), poles, lead)


def tf_inverse(g):
    if g.is_zero:
        raise NonInvertible("transfer function has a zero numerator")
    return g._make(g.poles, g.zeros, 1.0 / g.gain)


def pair_nearest(zeros, poles):
    """Greedy pairing of each pole with its nearest free zero.

    Returns ``(pole, zero)`` tuples; poles left over get ``None``.  A pole and a
    zero that nearly cancel end up in the same first-order section, which keeps
    cascades built from these pairs well conditioned.
    """
    poles = [complex(p) for p in poles]
    zeros = [complex(q) for q in zeros]
    pairs, used_p = [], set()
    if zeros and poles:
        dist = np.abs(np.subtract.outer(np.array(poles), np.array(zeros)))
        used_z = set()
        for flat in np.argsort(dist, axis=None, kind="stable"):
            i, j = divmod(int(flat), len(zeros))
            if i in used_p or j in used_z:
                continue
            used_p.add(i)
            used_z.add(j)
            pairs.append((poles[i], zeros[j]))
            if len(used_z) == len(zeros) or len(used_p) == len(poles):
                break
    return pairs + [(p, None) for i, p in enumerate(poles) if i not in used_p]


def _conjugate_clean(roots, tol=1e-9):
    """Snap a numerically computed root set of a real polynomial to exact conjugate pairs."""
    roots = np.asarray(roots, dtype=complex)
    out, used = [], np.zeros(roots.size, bool)
    for i in np.argsort(-np.abs(roots.imag), kind="stable"):
        if used[i]:
            continue
        used[i] = True
        v = roots[i]
        if abs(v.imag) <= tol * max(1.0, abs(v)):
            out.append(complex(v.real, 0.0))
            continue
        free = np.flatnonzero(~used)
        j = free[np.argmin(np.abs(roots[free] - np.conj(v)))]
        used[j] = True
        m = (v + np.conj(roots[j])) / 2
        out += [m, np.conj(m)]
    return np.array(out, dtype=complex)


def _closed_loop_poles(L):
    """Eigenvalues of ``A - B C / (1 + D)`` for a first-order-section realization of ``L``.

    Returns ``None`` when the realization does not apply (improper ``L``,
    singular algebraic loop).
    """
    if len(L.zeros) > len(L.poles) or len(L.poles) == 0:
        return None
    secs = pair_nearest(L.zeros, L.poles)
    n = len(secs)
    A = np.zeros((n, n), complex)
    B = np.zeros(n, complex)
    C = np.zeros(n, complex)
    D = complex(L.gain)
    # section input is the running output C x + D u; (x - q)/(x - p) is
    # x' = p x + v, out = (p - q) x + v and 1/(x - p) is out = x
    for i, (p, q) in enumerate(secs):
        A[i] += C
        A[i, i] += p
        B[i] = D
        if q is None:
            C, D = np.eye(n)[i].astype(complex), 0.0
        else:
            C = C.copy()
            C[i] += p - q
    if abs(1 + D) < CANCEL_TOL * max(1.0, abs(D)):
        return None
    return _conjugate_clean(np.linalg.eigvals(A - np.outer(B, C) / (1 + D)))


def tf_feedback_unity(open_loop):
    """Closed loop ``L / (1 + L)``."""
    L = open_loop
    if L.is_zero:
        return L
    poles = _closed_loop_poles(L)
    if poles is not None:
        lead = 1.0 + (L.gain if len(L.zeros) == len(L.poles) else 0.0)
        return L._make(L.zeros, poles, L.gain / lead)
    c = L._shift
    n = L.gain * _shifted_poly(L.zeros, c)
    d = _shifted_poly(L.poles, c)
    s = _cancel_sum(d, n)
    if s.size == 0:
        raise DegenerateLoop("1 + L is identically zero")
    poles, lead = find_roots(s, c)
    return L._make(L.zeros, poles, L.gain / lead)


def tf_eval(g, x):
    x = np.asarray(x, dtype=complex)
    scalar = x.ndim == 0
    xs = np.atleast_1d(x)
    den = np.prod(xs[:, None] - g.poles[None, :], axis=1) if len(g.poles) else np.ones(xs.shape, complex)
    if np.any(np.abs(den) < POLE_HIT_TOL):
        raise PoleHit("evaluation point coincides with a pole")
    if g.is_zero:
        out = np.zeros(xs.shape, dtype=complex)
    else:
        num = np.prod(xs[:, None] - g.zeros[None, :], axis=1) if len(g.zeros) else np.ones(xs.shape, complex)
        out = g.gain * num / den
    return complex(out[0]) if scalar else out.reshape(x.shape)


def poles(g):
    return list(g.poles)


def zeros(g):
    return list(g.zeros)
