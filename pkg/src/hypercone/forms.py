"""Indefinite quadratic forms and pointwise separation certificates.

Everything here is evaluated from a single matrix ``D`` (the derivative of the
vector field, or any other infinitesimal generator) and a form ``J``.  The
central object is the feasible set ``{delta : J' - delta J > 0}`` with
``J' = J D + D^T J``; it is an open interval because the smallest eigenvalue
of ``J' - delta J`` is concave in ``delta``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .config import TOL
from .exterior import additive_compound
from .matcore import HyperconeError, as_square, check_symmetric, min_eig, svd, sym_eig

DELTA_RULES = ("midpoint", "max-margin", "near-lo")


class HypothesisViolation(HyperconeError, ValueError):
    """The wedge criterion was asked for outside dimension 3, index 1."""


class InvariantViolation(HyperconeError, AssertionError):
    pass


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    matrix: np.ndarray
    index: int
    eigenvalues: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, J):
        J = as_square(J, "J")
        check_symmetric(J)
        J = 0.5 * (J + J.T)
        w, _ = sym_eig(J)
        scale = max(np.max(np.abs(w)), 1e-300)
        if np.any(np.abs(w) <= TOL.form_eigen_floor * scale):
            raise ValueError(f"quadratic form is degenerate (eigenvalues {w})")
        q = int(np.sum(w < 0))
        n = J.shape[0]
        if not 0 < q < n:
            raise ValueError(f"quadratic form must be indefinite, got index {q} in dimension {n}")
        return cls(J, q, w)

    @classmethod
    def diagonal(cls, *signs):
        return cls.from_matrix(np.diag(np.asarray(signs, dtype=float)))

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return float(v @ self.matrix @ v)

    def __neg__(self):
        return QuadraticForm(-self.matrix, self.dim - self.index, -self.eigenvalues[::-1])

    def __eq__(self, other):
        return isinstance(other, QuadraticForm) and np.array_equal(self.matrix, other.matrix)


def _matrix(J):
    return J.matrix if isinstance(J, QuadraticForm) else as_square(J, "J")


def as_form(J):
    return J if isinstance(J, QuadraticForm) else QuadraticForm.from_matrix(J)


@dataclass(frozen=True)
class Interval:
    """Open interval ``(lo, hi)``; ``empty`` when no value is feasible.

    ``peak`` maximizes the margin (smallest eigenvalue) and ``margin`` is that
    maximum; both are recorded for empty intervals too.
    """

    lo: float
    hi: float
    peak: float
    margin: float

    @property
    def empty(self):
        return not self.margin > 0.0

    @property
    def width(self):
        return 0.0 if self.empty else self.hi - self.lo

    def __contains__(self, x):
        return not self.empty and self.lo < x < self.hi

    def reflect(self, c):
        """Image under ``x -> c - x``."""
        if self.empty:
            return Interval(math.nan, math.nan, c - self.peak, self.margin)
        return Interval(c - self.hi, c - self.lo, c - self.peak, self.margin)

    def select(self, rule):
        if self.empty:
            raise ValueError("cannot select from an empty interval")
        if rule == "midpoint":
            return 0.5 * (self.lo + self.hi)
        if rule == "max-margin":
            return self.peak
        if rule == "near-lo":
            return self.lo + TOL.near_lo_fraction * (self.hi - self.lo)
        raise ValueError(f"unknown delta rule {rule!r}; expected one of {DELTA_RULES}")


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def feasible_interval(P, Q):
    """The open set ``{delta : P - delta Q > 0}`` for symmetric P, nondegenerate Q.

    Coarse scan for the concave margin, golden-section for its peak, then
    bisection of each side.  Any endpoint is a generalized eigenvalue of the
    pencil, so it lies in ``[-R, R]`` with ``R = ||P|| ||Q^-1||``; the scan
    covers a slightly wider window.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    sQ = svd(Q)[1]
    R = svd(P)[1][0] / sQ[-1]
    L = 1.05 * R + 1.0

    def margin(d):
        return float(min_eig(P - d * Q))

    grid = np.linspace(-L, L, TOL.interval_scan)
    values = min_eig(P[None] - grid[:, None, None] * Q[None])
    i = int(np.argmax(values))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = margin(x1), margin(x2)
    while b - a > 1e-12 * L:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = margin(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = margin(x1)
    peak = x1 if f1 >= f2 else x2
    best = max(f1, f2)
    if values[i] > best:
        peak, best = grid[i], float(values[i])
    if not best > 0.0:
        return Interval(math.nan, math.nan, float(peak), float(best))

    left = np.nonzero((grid < peak) & (values <= 0.0))[0]
    right = np.nonzero((grid > peak) & (values <= 0.0))[0]
    lo = _bisect(margin, grid[left[-1]], peak) if left.size else -math.inf
    hi = _bisect(margin, grid[right[0]], peak) if right.size else math.inf
    return Interval(lo, hi, float(peak), float(best))


def _bisect(f, bad, good):
    """Boundary between ``bad`` (f <= 0) and ``good`` (f > 0)."""
    for _ in range(200):
        if abs(good - bad) <= TOL.interval_abs:
            break
        mid = 0.5 * (bad + good)
        if f(mid) > 0.0:
            good = mid
        else:
            bad = mid
    return float(0.5 * (bad + good))


def jprime(J, D):
    """``J D + D^T J``: the derivative of the form along the generator ``D``."""
    Jm = _matrix(J)
    D = as_square(D, "D")
    if D.shape != Jm.shape:
        raise ValueError(f"dimension mismatch: J is {Jm.shape}, D is {D.shape}")
    return Jm @ D + D.T @ Jm


def delta_interval(J, D):
    J = as_form(J)
    return feasible_interval(jprime(J, D), J.matrix)


def separation_witness(J, D, delta):
    """``(ok, margin)`` with ``margin = lambda_min(J' - delta J)``."""
    Jm = _matrix(J)
    margin = float(min_eig(jprime(Jm, D) - delta * Jm))
    return margin > 0.0, margin


def wedge_generator(D):
    """Generator of the second exterior power of ``e^{tD}``.

    In dimension 3 this is ``tr(D) I - D^T`` acting on Hodge coordinates;
    otherwise the lexicographic additive compound.
    """
    D = as_square(D, "D")
    if D.shape[0] == 3:
        return np.trace(D) * np.eye(3) - D.T
    return additive_compound(D, 2)


def wedge_separation(J, D, check=True):
    """Feasible ``delta2`` for the bivector cocycle with the form ``-J``.

    Returns ``(interval, criterion2)`` where the interval is
    ``{d2 : (J' - 2 tr(D) J) + d2 J > 0}`` and ``criterion2`` says whether
    ``J' - 2 tr(D) J`` is itself positive definite.
    """
    J = as_form(J)
    D = as_square(D, "D")
    if J.dim != 3 or J.index != 1:
        raise HypothesisViolation(
            f"wedge criterion needs dimension 3 and index 1, got dimension {J.dim}, index {J.index}")
    trace2 = 2.0 * np.trace(D)
    M2 = jprime(J, D) - trace2 * J.matrix
    interval = feasible_interval(M2, -J.matrix)
    if check:
        mapped = delta_interval(J, D).reflect(trace2)
        _check_reflection(interval, mapped, trace2)
    return interval, bool(min_eig(M2) > 0.0)


def _check_reflection(found, mapped, trace2):
    if found.empty != mapped.empty:
        raise InvariantViolation(
            f"delta2 interval {found} disagrees with 2tr(D) - delta interval {mapped}")
    if found.empty:
        return
    tol = 1e-8 * (1.0 + abs(trace2) + abs(found.lo) + abs(found.hi))
    if abs(found.lo - mapped.lo) > tol or abs(found.hi - mapped.hi) > tol:
        raise InvariantViolation(
            f"delta2 interval ({found.lo}, {found.hi}) != reflected ({mapped.lo}, {mapped.hi})")


def cone_ratio_bounds(J, D, samples=4000, seed=0):
    """Sampled ``sup J'(v)/J(v)`` over negative ``v`` and ``inf`` over positive ``v``.

    Diagnostic only: every feasible delta lies between the two values.
    """
    Jm = _matrix(J)
    Jp = jprime(Jm, D)
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((samples, Jm.shape[0]))
    jv = np.einsum("ij,jk,ik->i", V, Jm, V)
    jpv = np.einsum("ij,jk,ik->i", V, Jp, V)
    ratio = jpv / jv
    neg, pos = ratio[jv < 0], ratio[jv > 0]
    return (float(neg.max()) if neg.size else -math.inf,
            float(pos.min()) if pos.size else math.inf)


def _clean(x):
    return None if x is None or not math.isfinite(x) else float(x)


@dataclass(frozen=True)
class SeparationCertificate:
    point: tuple
    delta_lo: float | None
    delta_hi: float | None
    trace2: float
    delta2_lo: float | None
    delta2_hi: float | None
    criterion2: bool
    delta: float | None
    delta2: float | None
    margin: float
    verdicts: dict
    notes: tuple = ()

    @property
    def strictly_separated(self):
        return self.verdicts["strictly_separated"]

    @property
    def wedge_separated(self):
        return self.verdicts["wedge_separated"]

    def to_dict(self):
        return {
            "point": [float(x) for x in self.point],
            "delta_lo": self.delta_lo,
            "delta_hi": self.delta_hi,
            "delta2_lo": self.delta2_lo,
            "delta2_hi": self.delta2_hi,
            "trace2": self.trace2,
            "criterion2": self.criterion2,
            "delta": self.delta,
            "delta2": self.delta2,
            "margin": self.margin,
            "verdicts": dict(self.verdicts),
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(point=tuple(d["point"]), delta_lo=d["delta_lo"], delta_hi=d["delta_hi"],
                   trace2=d["trace2"], delta2_lo=d["delta2_lo"], delta2_hi=d["delta2_hi"],
                   criterion2=d["criterion2"], delta=d["delta"], delta2=d["delta2"],
                   margin=d["margin"], verdicts=dict(d["verdicts"]), notes=tuple(d["notes"]))


def certify_point(J, D, point=(), rule="midpoint", wedge=True):
    """Separation certificate at one point from ``DX(point) = D``."""
    if rule not in DELTA_RULES:
        raise ValueError(f"unknown delta rule {rule!r}; expected one of {DELTA_RULES}")
    J = as_form(J)
    D = as_square(D, "D")
    interval = delta_interval(J, D)
    trace2 = float(2.0 * np.trace(D))
    notes = []
    d2 = None
    criterion2 = False
    if wedge:
        try:
            d2, criterion2 = wedge_separation(J, D)
        except HypothesisViolation as exc:
            notes.append(str(exc))
    delta = None if interval.empty else interval.select(rule)
    delta2 = None if delta is None or d2 is None else trace2 - delta
    wedge_ok = d2 is not None and not d2.empty and delta2 is not None and delta2 > 0.0
    verdicts = {
        "strictly_separated": not interval.empty,
        "wedge_separated": bool(wedge_ok),
        "delta_negative_feasible": bool(not interval.empty and interval.lo < 0.0),
        "delta2_positive_feasible": bool(d2 is not None and not d2.empty and d2.hi > 0.0),
    }
    return SeparationCertificate(
        point=tuple(float(x) for x in np.ravel(point)),
        delta_lo=None if interval.empty else _clean(interval.lo),
        delta_hi=None if interval.empty else _clean(interval.hi),
        trace2=trace2,
        delta2_lo=None if d2 is None or d2.empty else _clean(d2.lo),
        delta2_hi=None if d2 is None or d2.empty else _clean(d2.hi),
        criterion2=bool(criterion2),
        delta=_clean(delta),
        delta2=_clean(delta2),
        margin=float(interval.margin),
        verdicts=verdicts,
        notes=tuple(notes),
    )
