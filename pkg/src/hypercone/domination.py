"""Orbit-level verdicts: delta areas, the contraction/expansion trichotomy,
finite-time splittings, exponential rate fits and the adapted norm.

All verdicts here are finite-horizon: limits in time are replaced by fitted
slopes over the sampled window, which is recorded in every report.
"""

from dataclasses import dataclass, field
from itertools import combinations
import math

import numpy as np

from .config import POLICY, TOL, TRICHOTOMY
from .exterior import compound, wedge
from .flow import cumulative_simpson, integrate, simpson
from .forms import as_form, certify_point
from .matcore import HyperconeError, orthonormalize, svd, sym_eig

TRICHOTOMY_CASES = ("F+-expanding", "F--contracting", "hyperbolic", "inconclusive")


class DegenerateRestrictionError(HyperconeError, ArithmeticError):
    pass


class IncompatibleSplittingError(HyperconeError, ValueError):
    pass


# ---- delta areas -------------------------------------------------------------

def delta_area(times, deltas):
    """``int delta(X_s(x)) ds`` over the sampled grid (composite Simpson)."""
    deltas = np.asarray(deltas, dtype=float)
    if np.any(~np.isfinite(deltas)):
        raise ValueError("delta is undefined at some sample (empty feasible interval)")
    return simpson(times, deltas)


@dataclass
class CertifiedOrbit:
    times: np.ndarray
    states: np.ndarray
    certificates: list
    rule: str

    def deltas(self, cocycle="tangent"):
        key = "delta" if cocycle == "tangent" else "delta2"
        return np.array([math.nan if getattr(c, key) is None else getattr(c, key)
                         for c in self.certificates])

    def running_area(self, cocycle="tangent"):
        return cumulative_simpson(self.times, self.deltas(cocycle))


def certify_orbit(model, orbit, form=None, rule="midpoint", stride=1, wedge=True,
                  mode="matrix-family"):
    """Separation certificates on every ``stride``-th orbit sample (and the last one)."""
    J = as_form(form if form is not None else model.form)
    idx = list(range(0, len(orbit), stride))
    if idx[-1] != len(orbit) - 1:
        idx.append(len(orbit) - 1)
    certs = [certify_point(J, model.DX(orbit.states[i], mode), orbit.states[i], rule=rule,
                           wedge=wedge) for i in idx]
    return CertifiedOrbit(orbit.times[idx], orbit.states[idx], certs, rule)


@dataclass(frozen=True)
class TrichotomyReport:
    verdict: str
    slopes: tuple
    generator_positive: bool
    window: float
    eps: float
    divergence: str | None = None      # "+inf" / "-inf" when every window agrees
    note: str = ""
    finite_horizon: bool = True


def classify_trichotomy(orbits, cocycle="tangent", policy=TRICHOTOMY):
    """Finite-horizon reading of the contraction/expansion trichotomy.

    ``orbits`` are :class:`CertifiedOrbit` values.  Positive definiteness of
    the generator form (``delta = 0`` feasible everywhere) decides
    "hyperbolic" before any slope is looked at: in that case the sign of the
    delta area only reflects which feasible delta was selected.
    """
    orbits = list(orbits)
    certs = [c for o in orbits for c in o.certificates]
    if not certs:
        return TrichotomyReport("inconclusive", (), False, policy.window, policy.eps,
                                note="no samples")
    if cocycle == "tangent":
        separated = all(c.strictly_separated for c in certs)
        # unbounded endpoints are stored as None
        positive = separated and all((c.delta_lo is None or c.delta_lo < 0.0)
                                     and (c.delta_hi is None or c.delta_hi > 0.0)
                                     for c in certs)
    elif cocycle == "wedge":
        # the wedge interval is the reflected tangent interval, so it is
        # nonempty exactly when the tangent one is (and the hypotheses hold)
        separated = all(c.strictly_separated and not c.notes for c in certs)
        positive = separated and all(c.criterion2 for c in certs)
    else:
        raise ValueError(f"cocycle must be 'tangent' or 'wedge', got {cocycle!r}")
    if not separated:
        return TrichotomyReport("inconclusive", (), False, policy.window, policy.eps,
                                note="strict separation fails at some sample")

    slopes = []
    for o in orbits:
        area = o.running_area(cocycle)
        t = o.times
        start = 0
        for j in range(1, t.size):
            if t[j] - t[start] >= policy.window - 1e-12:
                slopes.append((area[j] - area[start]) / (t[j] - t[start]))
                start = j
    slopes = tuple(float(s) for s in slopes)
    divergence = None
    if slopes and min(slopes) >= policy.eps:
        divergence = "+inf"
    elif slopes and max(slopes) <= -policy.eps:
        divergence = "-inf"

    if positive:
        verdict = "hyperbolic"
    elif divergence == "+inf":
        verdict = "F+-expanding"
    elif divergence == "-inf":
        verdict = "F--contracting"
    else:
        verdict = "inconclusive"
    note = "" if slopes else f"no window of length {policy.window} fits in the orbits"
    return TrichotomyReport(verdict, slopes, positive, policy.window, policy.eps,
                            divergence, note)


# ---- finite-time splittings --------------------------------------------------

@dataclass(frozen=True)
class SplittingEstimate:
    point: tuple
    E: np.ndarray
    F: np.ndarray
    horizon: float
    quality: float
    gap: float
    usable: bool
    note: str = ""


def _largest_principal_angle(A, B):
    QA, QB = orthonormalize(A), orthonormalize(B)
    residual = QB - QA @ (QA.T @ QB)
    return float(math.asin(min(1.0, svd(residual)[1][0])))


def _contracted_subspace(Phi, s):
    _, sigma, V = svd(Phi)
    n = Phi.shape[0]
    gap = sigma[n - s] / sigma[n - s - 1] if sigma[n - s - 1] > 0 else 1.0
    return V[:, n - s:], V[:, :n - s], float(gap)


def estimate_splitting(model, x, T, s, h=1e-3, past=None, mode="full-jacobian"):
    """E from the ``s`` most contracted right singular vectors of ``Phi_T(x)``.

    F is the orthogonal complement, or, when ``past`` (an orbit segment ending
    at ``x``) is given, the span of the top left singular vectors of its
    fundamental matrix.  ``quality`` is the largest principal angle between
    ``Phi_{T/2} E`` and E re-estimated at ``x(T/2)``.
    """
    n = model.dim
    if not 1 <= s < n:
        raise ValueError(f"contracted dimension s={s} must be in 1..{n - 1}")
    x = np.asarray(x, dtype=float)
    orbit = integrate(model, x, T, h, mode=mode)
    notes = []
    if orbit.truncated:
        notes.append(orbit.notice)
    E, F, gap = _contracted_subspace(orbit.fundamentals[-1], s)
    if past is not None:
        U, _, _ = svd(past.fundamentals[-1])
        F = U[:, :n - s]
        if np.linalg.norm(past.states[-1] - x) > 1e-6 * (1.0 + np.linalg.norm(x)):
            notes.append("past segment does not end at the sample point")

    mid = (len(orbit) - 1) // 2
    quality = math.inf
    if mid > 0:
        # Phi E = E_mid is checked as E = Phi^{-1} E_mid: pulling a contracted
        # subspace back is well conditioned, pushing it forward is not
        later = integrate(model, orbit.states[mid], T, h, mode=mode)
        E_mid, _, _ = _contracted_subspace(later.fundamentals[-1], s)
        U, sigma, V = svd(orbit.fundamentals[mid])
        pulled = V @ ((U.T @ E_mid) / sigma[:, None])
        quality = _largest_principal_angle(pulled, E)
    if gap >= TOL.splitting_gap:
        notes.append(f"singular value gap {gap:.3g} not below {TOL.splitting_gap}")
    if quality > TOL.splitting_quality:
        notes.append(f"invariance residual {quality:.3g} rad above {TOL.splitting_quality}")
    usable = gap < TOL.splitting_gap and quality <= TOL.splitting_quality and not orbit.truncated
    return SplittingEstimate(tuple(x), orthonormalize(E), orthonormalize(F), float(T),
                             float(quality), gap, usable, "; ".join(notes))


# ---- rate fits ---------------------------------------------------------------

@dataclass(frozen=True)
class DominationReport:
    kind: str
    K: float
    rate: float
    r2: float
    window: tuple
    verdict: bool
    marginal: bool
    samples: int

    def to_dict(self):
        return {"kind": self.kind, "K": self.K, "rate": self.rate, "r2": self.r2,
                "window": list(self.window), "verdict": "pass" if self.verdict else "fail",
                "marginal": self.marginal, "samples": self.samples}


def _fit(t, q):
    t = np.asarray(t, dtype=float)
    q = np.asarray(q, dtype=float)
    A = np.column_stack([np.ones_like(t), t])
    (intercept, slope), *_ = np.linalg.lstsq(A, q, rcond=None)
    resid = q - (intercept + slope * t)
    ss_tot = float(np.sum((q - q.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    if ss_tot <= 1e-300:
        r2 = 1.0 if ss_res <= 1e-300 else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return float(slope), r2


def _sample_indices(n, limit=400):
    stride = max(1, (n - 1) // limit)
    idx = list(range(0, n, stride))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return idx


def _frame_growth(steps, E, F, sample_steps):
    """Growth of the cocycle along F and on the quotient by F, in a moving frame.

    The basis ``[F, E]`` is carried through the one-step propagators and
    re-orthonormalized after every step (F first), so the leading block of the
    accumulated triangular factor is ``Phi_t`` restricted to ``Phi_t F`` and
    the trailing block is the induced map on the complement.  Raw products
    ``Phi_t E`` are never formed: a contracted E pushed forward in floating
    point is swamped by rounding error along the expanding directions within
    a few time units.  Returns ``(log sigma_max(E-block), log sigma_min(F-block))``
    at each requested step count.
    """
    c, s = F.shape[1], E.shape[1]
    Q, _ = np.linalg.qr(np.column_stack([F, E]))
    TF, TE = np.eye(c), np.eye(s)
    LF = LE = 0.0
    out_top, out_low = [], []
    wanted = iter(sample_steps)
    target = next(wanted, None)
    k = 0
    while target is not None:
        if k == target:
            sF = np.linalg.svd(TF, compute_uv=False)
            low = LF + math.log(sF[-1]) if sF[-1] > 0.0 else -math.inf
            if not low >= math.log(TOL.degenerate_restriction):
                raise DegenerateRestrictionError(
                    f"restriction to F is numerically singular after {k} steps "
                    f"(sigma_min = {math.exp(low):.3e})")
            sE = np.linalg.svd(TE, compute_uv=False)
            out_top.append(LE + math.log(sE[0]))
            out_low.append(low)
            target = next(wanted, None)
            continue
        Q, R = np.linalg.qr(steps[k] @ Q)
        TF = R[:c, :c] @ TF
        TE = R[c:, c:] @ TE
        nF, nE = np.abs(TF).max(), np.abs(TE).max()
        if not (nF > 0.0 and nE > 0.0 and math.isfinite(nF) and math.isfinite(nE)):
            raise DegenerateRestrictionError(f"restricted cocycle degenerated after {k + 1} steps")
        TF /= nF
        TE /= nE
        LF += math.log(nF)
        LE += math.log(nE)
        k += 1
    return np.array(out_top), np.array(out_low)


def _domination_report(times, steps, sample_idx, E, F, policy, kind="domination"):
    E, F = orthonormalize(E), orthonormalize(F)
    if steps is None or len(steps) < sample_idx[-1]:
        raise ValueError("orbit carries no step propagators for the requested samples")
    top, low = _frame_growth(steps, E, F, sample_idx)
    return _report(kind, np.asarray(times)[sample_idx], top - low, policy, expanding=False)


def _report(kind, t, q, policy, expanding):
    """Least-squares rate, fit quality and prefactor, plus the policy verdict.

    ``K`` is the smallest prefactor that makes the fitted line an envelope of
    the data.  The verdict asks for a fitted rate beyond the policy rate, a
    good linear fit, and the data inside the requested envelope
    ``log K_bar + rate_bar * t`` (mirrored for expansion).
    """
    t = np.asarray(t, dtype=float)
    q = np.asarray(q, dtype=float)
    rate, r2 = _fit(t, q)
    if expanding:
        K = max(1.0, float(np.exp(np.max(rate * t - q))))
        inside = float(np.max(-policy.max_rate * t - q)) <= math.log(policy.max_K)
        verdict = rate >= -policy.max_rate
        marginal = abs(rate + policy.max_rate) <= policy.marginal
    else:
        K = max(1.0, float(np.exp(np.max(q - rate * t))))
        inside = float(np.max(q - policy.max_rate * t)) <= math.log(policy.max_K)
        verdict = rate <= policy.max_rate
        marginal = abs(rate - policy.max_rate) <= policy.marginal
    verdict = bool(verdict and r2 >= policy.min_r2 and inside)
    return DominationReport(kind, K, float(rate), r2, (float(t[0]), float(t[-1])), verdict,
                            bool(marginal), int(t.size))


def domination_rate(orbit, E, F, policy=POLICY):
    """Fit ``log(||Phi_t|E|| * ||(Phi_t|F)^-1||) ~ log K + rate * t``."""
    idx = _sample_indices(len(orbit))
    return _domination_report(orbit.times, orbit.steps, idx, E, F, policy)


def sectional_rate(orbit, F, policy=POLICY, planes=None, seed=0):
    """Fit of ``log ||wedge^2 Phi_t (u ^ v)||`` for 2-planes inside F.

    ``dim F == 2`` uses F itself; for larger F pass ``planes`` (a count of
    random planes, seeded) and the slowest plane is reported.
    """
    F = orthonormalize(F)
    c = F.shape[1]
    if c < 2:
        raise ValueError("sectional expansion needs dim F >= 2")
    if c == 2:
        bases = [F]
    else:
        if planes is None:
            raise ValueError(f"dim F = {c} > 2: pass planes=<count> to sample 2-planes")
        rng = np.random.default_rng(seed)
        bases = [orthonormalize(F @ rng.standard_normal((c, 2))) for _ in range(int(planes))]
    idx = _sample_indices(len(orbit))
    Wlex = orbit.wedge_lex()
    worst = None
    for B in bases:
        b = wedge(B[:, 0], B[:, 1])
        q = []
        for i in idx:
            C = Wlex[i] if Wlex is not None else compound(orbit.fundamentals[i], 2)
            q.append(math.log(np.linalg.norm(C @ b)))
        rep = _report("sectional", orbit.times[idx], q, policy, expanding=True)
        if worst is None or rep.rate < worst.rate:
            worst = rep
    return worst


# ---- exterior-power cross-check ----------------------------------------------

def wedge_splitting(E, F, k):
    """Bases of ``wedge^k F`` and of the complementary sum of mixed wedges (at least one E factor)."""
    E, F = orthonormalize(E), orthonormalize(F)
    s, c = E.shape[1], F.shape[1]
    if not 1 <= k <= c:
        raise ValueError(f"need 1 <= k <= dim F = {c}, got k={k}")
    vectors = np.column_stack([E, F])
    Ft, Et = [], []
    for S in combinations(range(s + c), k):
        w = wedge(*[vectors[:, j] for j in S])
        (Ft if min(S) >= s else Et).append(w)
    return np.column_stack(Et), np.column_stack(Ft)


@dataclass(frozen=True)
class CrosscheckRecord:
    point: tuple
    tangent: DominationReport
    exterior: DominationReport
    agree: bool


@dataclass(frozen=True)
class CrosscheckReport:
    agree: bool
    records: tuple


def theoremA_crosscheck(model, samples, s=1, k=2, T=5.0, h=1e-3, splittings=None,
                        policy=POLICY, mode="full-jacobian"):
    """Compare domination verdicts of ``(E, F)`` under ``Phi_t`` and of the
    induced splitting under ``wedge^k Phi_t`` at every sample.

    Verdicts agree when both pass, both fail, or both sit within the
    marginal band of the rate threshold.
    """
    records = []
    wpolicy = policy.scaled(k)
    for j, x in enumerate(samples):
        if splittings is not None:
            E, F = splittings[j]
        else:
            est = estimate_splitting(model, x, T, s, h, mode=mode)
            E, F = est.E, est.F
        orbit = integrate(model, x, T, h, with_wedge=(k == 2), mode=mode)
        tangent = domination_rate(orbit, E, F, policy)
        idx = _sample_indices(len(orbit))
        if k == 2:
            wsteps = orbit.wedge_steps_lex()
            if wsteps is None:
                raise ValueError("orbit is missing wedge fundamentals")
        else:
            wsteps = np.array([compound(R, k) for R in orbit.steps])
        Et, Ft = wedge_splitting(E, F, k)
        ext = _domination_report(orbit.times, wsteps, idx, Et, Ft, wpolicy, kind="exterior")
        agree = tangent.verdict == ext.verdict or (tangent.marginal and ext.marginal)
        records.append(CrosscheckRecord(tuple(np.asarray(x, dtype=float)), tangent, ext, agree))
    return CrosscheckReport(all(r.agree for r in records), tuple(records))


# ---- tangency of the flow direction ------------------------------------------

@dataclass(frozen=True)
class TangencyReport:
    max_angle: float
    angles: tuple
    skipped: int


def tangency_check(model, samples, F_bases):
    """Largest angle between ``X(x)`` and ``F_x``; singular points are skipped and counted."""
    angles, skipped = [], 0
    for x, F in zip(samples, F_bases):
        v = model.X(x)
        speed = np.linalg.norm(v)
        if speed <= TOL.singular_speed:
            skipped += 1
            continue
        Q = orthonormalize(F)
        off = np.linalg.norm(v - Q @ (Q.T @ v)) / speed
        angles.append(float(math.asin(min(1.0, off))))
    return TangencyReport(max(angles) if angles else 0.0, tuple(angles), skipped)


# ---- the adapted norm --------------------------------------------------------

@dataclass(frozen=True)
class AdaptedMetricReport:
    lam: float
    xi: float
    domination_rate: float
    contraction_rate: float
    area_rate: float
    times: tuple
    passed: bool


def _gen_eigs(G, G0):
    """Eigenvalues of the pencil ``(G, G0)`` for symmetric G and positive definite G0."""
    L = np.linalg.cholesky(G0)
    Li = np.linalg.inv(L)
    return sym_eig(Li @ G @ Li.T)[0] if G.shape[0] > 1 else np.array([G[0, 0] / G0[0, 0]])


def _check_compatible(J, E, F):
    GE = E.T @ J @ E
    GF = F.T @ J @ F
    if np.max(np.linalg.eigvalsh(0.5 * (GE + GE.T))) >= 0.0:
        raise IncompatibleSplittingError("E is not a J-negative subspace")
    if np.min(np.linalg.eigvalsh(0.5 * (GF + GF.T))) <= 0.0:
        raise IncompatibleSplittingError("F is not a J-positive subspace")
    return -GE, GF


def adapted_norm(J, E, F, w):
    """``sqrt(|J(w_E)| + J(w_F)) / xi``-free part of the adapted norm, ``w = w_E + w_F``."""
    coeff = np.linalg.solve(np.column_stack([E, F]), w)
    wE = E @ coeff[:E.shape[1]]
    wF = F @ coeff[E.shape[1]:]
    return math.sqrt(abs(wE @ J @ wE) + wF @ J @ wF)


def adapted_metric_check(model, samples, splittings, form=None, T=5.0, h=1e-3,
                         mode="full-jacobian", stride=None):
    """Verify the prefactor-1 inequalities of the adapted norm along each sample orbit.

    The norm is ``xi * sqrt(|J(w_E)| + J(w_F)))`` on ``E_x + F_x``, with E
    and F carried along by ``Phi_t``.  Returns the largest ``lam`` for which
    ``|Phi|E| |Phi|F^-1| <= e^{-lam t}``, ``|Phi|E| <= e^{-lam t}`` and
    ``|det Phi|F| >= e^{lam t}`` hold at every sampled ``t > 0``.
    """
    J = as_form(form if form is not None else model.form).matrix
    dom, con, area = math.inf, math.inf, math.inf
    speeds = []
    used_times = set()
    for x, (E, F) in zip(samples, splittings):
        E, F = np.asarray(E, dtype=float), np.asarray(F, dtype=float)
        GE0, GF0 = _check_compatible(J, E, F)
        speeds.append(adapted_norm(J, E, F, model.X(x)))
        orbit = integrate(model, x, T, h, mode=mode)
        idx = _sample_indices(len(orbit), limit=200) if stride is None else \
            list(range(0, len(orbit), stride))
        for i in idx:
            t = orbit.times[i]
            if t <= 0.0:
                continue
            Phi = orbit.fundamentals[i]
            PE, PF = Phi @ E, Phi @ F
            GE, GF = _check_compatible(J, PE, PF)
            normE = math.sqrt(np.max(_gen_eigs(GE, GE0)))
            fe = _gen_eigs(GF, GF0)
            inv_normF = 1.0 / math.sqrt(np.min(fe))
            det_F = math.sqrt(np.prod(fe))
            dom = min(dom, -math.log(normE * inv_normF) / t)
            con = min(con, -math.log(normE) / t)
            area = min(area, math.log(det_F) / t)
            used_times.add(float(t))
    top = max(speeds) if speeds else 0.0
    xi = 1.0 / top if top > 0 else 1.0
    lam = min(dom, con, area)
    return AdaptedMetricReport(lam, xi, dom, con, area, tuple(sorted(used_times)),
                               bool(lam > 0.0))


# ---- inequalities along orbits -----------------------------------------------

def growth_margin(orbit, form, times, deltas, v):
    """Smallest ``log|J(Phi_t2 v)| - log|J(Phi_t1 v)| - Delta_t1^t2`` over ``t1 < t2``.

    ``times``/``deltas`` is the sampled delta field (a subset of the orbit
    grid).  Non-negative up to quadrature slack for separated cocycles and
    J-positive ``v``.
    """
    J = as_form(form).matrix
    pos = np.searchsorted(orbit.times, times)
    jv = np.array([orbit.fundamentals[i] @ v @ J @ (orbit.fundamentals[i] @ v) for i in pos])
    if np.any(jv == 0.0):
        raise ValueError("J vanishes along the pushed vector")
    h = np.log(np.abs(jv)) - cumulative_simpson(times, deltas)
    running_max = np.maximum.accumulate(h)
    return float(np.min(h[1:] - running_max[:-1])) if h.size > 1 else 0.0


def quotient_margins(orbit, form, times, deltas, w, v):
    """Negative-over-positive ratio ``|J(Phi w)| / J(Phi v)`` along the orbit.

    Returns ``(monotone, literal)``: the largest increase of the log ratio
    over any ``t1 < t2`` (non-positive when the ratio never grows), and the
    smallest slack in ``ratio_t <= ratio_0 * exp(2 Delta_0^t)``.
    """
    J = as_form(form).matrix
    pos = np.searchsorted(orbit.times, times)
    ratio = []
    for i in pos:
        Pw, Pv = orbit.fundamentals[i] @ w, orbit.fundamentals[i] @ v
        ratio.append(math.log(abs(Pw @ J @ Pw)) - math.log(Pv @ J @ Pv))
    ratio = np.array(ratio)
    running_min = np.minimum.accumulate(ratio)
    monotone = float(np.max(ratio[1:] - running_min[:-1])) if ratio.size > 1 else 0.0
    literal = float(np.min(ratio[0] + 2.0 * cumulative_simpson(times, deltas) - ratio))
    return monotone, literal
