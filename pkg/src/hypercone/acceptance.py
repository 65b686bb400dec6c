"""The acceptance suite: nine criteria, each a table of check/expected/got/tolerance.

Every check is deterministic (fixed seeds, fixed iteration order) and the
rendered table contains no timings, only runtime pass/fail lines, so two
runs print identical bytes on an unloaded machine.
"""

import contextlib
from dataclasses import dataclass
import io
import math
import os
import tempfile
import time

import numpy as np

from .domination import (adapted_metric_check, domination_rate, estimate_splitting,
                         growth_margin, certify_orbit, sectional_rate, theoremA_crosscheck)
from .exterior import HODGE_TO_LEX, LEX_TO_HODGE, additive_compound, compound, induced_biform
from .flow import (integrate, lorenz_origin_spectrum, model_classic_lorenz,
                   model_geometric_lorenz, model_linear_saddle)
from .forms import (QuadraticForm, delta_interval, jprime, wedge_generator, wedge_separation)
from .matcore import expm

SEED = 20240611


@dataclass(frozen=True)
class Check:
    name: str
    expected: str
    got: str
    tolerance: str
    passed: bool


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    checks: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


def _num(x):
    if x is None:
        return "none"
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"


def _close(name, expected, got, tol, relative=False):
    if got is None or not math.isfinite(got):
        ok = False
    else:
        scale = abs(expected) if relative else 1.0
        ok = abs(got - expected) <= tol * scale
    label = f"{tol:.0e}" + (" rel" if relative else "")
    return Check(name, _num(expected), _num(got), label, bool(ok))


def _bound(name, got, tol):
    """``got <= tol``."""
    ok = got is not None and math.isfinite(got) and got <= tol
    return Check(name, f"<= {tol:.0e}", _num(got), f"{tol:.0e}", bool(ok))


def _flag(name, expected, got):
    return Check(name, _num(expected), _num(got), "exact", bool(expected) == bool(got))


def _runtime(limit, start):
    elapsed = time.perf_counter() - start
    return Check("runtime", f"< {limit:g} s", "ok" if elapsed < limit else "slow", "-",
                 elapsed < limit)


def _saddle_form():
    return QuadraticForm.diagonal(1.0, -1.0, 1.0)


# ---- criteria ----------------------------------------------------------------

def criterion1(scale):
    t0 = time.perf_counter()
    J = _saddle_form()
    out = []
    I = delta_interval(J, np.diag([1.0, -3.0, -0.5]))
    out.append(_close("saddle (1,-3,-0.5) delta_lo", -6.0, I.lo, 1e-6 * scale))
    out.append(_close("saddle (1,-3,-0.5) delta_hi", -1.0, I.hi, 1e-6 * scale))
    I = delta_interval(J, np.diag(lorenz_origin_spectrum()))
    out.append(_close("Lorenz origin delta_lo", -45.6555, I.lo, 1e-3 * scale))
    out.append(_close("Lorenz origin delta_hi", -5.3333, I.hi, 1e-3 * scale))
    out.append(_runtime(1.0, t0))
    return out


def _random_index1(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    w = rng.uniform(0.5, 2.0, 3) * np.array([-1.0, 1.0, 1.0])
    J = Q @ np.diag(w) @ Q.T
    return 0.5 * (J + J.T)


def _random_pair(rng, separated):
    """A random index-1 form with a random generator.

    With ``separated`` the generator solves ``J D + D^T J = M + d0 J`` for a
    random positive definite M, random d0 and a random skew part, so d0 is
    feasible by construction; otherwise D is unstructured.
    """
    J = _random_index1(rng)
    if not separated:
        return J, rng.standard_normal((3, 3)) + np.diag(rng.uniform(-4.0, 4.0, 3))
    B = rng.standard_normal((3, 3))
    M = B @ B.T + 0.1 * np.eye(3)
    K = rng.standard_normal((3, 3))
    K = 0.5 * (K - K.T)
    d0 = rng.uniform(-5.0, 5.0)
    return J, np.linalg.solve(J, 0.5 * (M + d0 * J) + K)


def criterion2(scale):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst_identity, worst_hodge, empty_mismatch, nonempty = 0.0, 0.0, 0, 0
    for i in range(500):
        J, D = _random_pair(rng, separated=i % 2 == 0)
        d1 = delta_interval(J, D)
        d2, _ = wedge_separation(J, D, check=False)
        trace2 = 2.0 * np.trace(D)
        if d1.empty != d2.empty:
            empty_mismatch += 1
        elif not d1.empty:
            nonempty += 1
            worst_identity = max(worst_identity, abs(d2.lo - (trace2 - d1.hi)),
                                 abs(d2.hi - (trace2 - d1.lo)))
        conj = HODGE_TO_LEX @ wedge_generator(D) @ LEX_TO_HODGE
        worst_hodge = max(worst_hodge, float(np.max(np.abs(conj - additive_compound(D, 2)))))
    return [
        _bound("max |delta2 endpoints - (2tr - delta endpoints)|", worst_identity, 1e-9 * scale),
        Check("emptiness agrees (500 pairs)", "0 mismatches", str(empty_mismatch), "exact",
              empty_mismatch == 0),
        Check("separated pairs exercised", ">= 250", str(nonempty), "-", nonempty >= 250),
        _bound("max |H wedge_generator H^-1 - additive_compound|", worst_hodge, 1e-12 * scale),
        _runtime(5.0, t0),
    ]


def criterion3(scale):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 1)
    worst_cb = 0.0
    for i in range(1000):
        n = 3 + i % 3
        k = 2 + (i // 3) % 2
        A, B = rng.standard_normal((n, n)), rng.standard_normal((n, n))
        err = np.max(np.abs(compound(A @ B, k) - compound(A, k) @ compound(B, k)))
        bound = (1.0 + np.max(np.abs(A)) * np.max(np.abs(B))) ** k
        worst_cb = max(worst_cb, float(err / bound))
    worst_gen = 0.0
    for i in range(200):
        n = 3 + i % 3
        k = 2 + (i // 3) % 2
        A = rng.uniform(-1.0, 1.0, (n, n))
        A *= 3.0 / max(1.0, np.max(np.sum(np.abs(A), axis=1)))
        t = rng.uniform(-1.0, 1.0)
        err = np.max(np.abs(compound(expm(A, t), k) - expm(additive_compound(A, k), t)))
        worst_gen = max(worst_gen, float(err))
    return [
        _bound("Cauchy-Binet residual / (1+|A||B|)^k (1000 pairs)", worst_cb, 1e-9 * scale),
        _bound("compound(expm) vs expm(additive compound) (200 cases)", worst_gen, 1e-8 * scale),
        _runtime(10.0, t0),
    ]


def criterion4(scale):
    t0 = time.perf_counter()
    l1, l2, l3 = lorenz_origin_spectrum()
    model = model_linear_saddle(l1, l2, l3)
    orbit = integrate(model, np.array([1.0, 1.0, 1.0]), 5.0, 1e-3, with_wedge=True)
    E = np.array([[0.0], [1.0], [0.0]])
    F = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    dom = domination_rate(orbit, E, F)
    sec = sectional_rate(orbit, F)
    metric = adapted_metric_check(model, [np.array([1.0, 0.0, 1.0])], [(E, F)], T=5.0, h=1e-3)
    return [
        _close("domination rate", -20.1611, dom.rate, 0.01 * scale, relative=True),
        _close("sectional rate", 9.1611, sec.rate, 0.01 * scale, relative=True),
        _close("adapted-metric lambda", 9.1611, metric.lam, 0.01 * scale, relative=True),
        _flag("adapted metric holds with prefactor 1 on (0, 5]", True,
              metric.passed and metric.times[-1] >= 5.0 - 1e-9),
        _runtime(5.0, t0),
    ]


GEOMETRIC_JOB = """\
model = geometric_lorenz
rho = 0.05
zeta = 0.05
resolution = 9
blend_samples = 101
delta_rule = near-lo
mode = matrix-family
checks = separation, wedge
"""


def criterion5(scale):
    from .cli import EXIT_OK, main, read_certificate

    t0 = time.perf_counter()
    l1, l2, l3 = lorenz_origin_spectrum()
    with tempfile.TemporaryDirectory() as tmp:
        job = os.path.join(tmp, "geometric.job")
        out = os.path.join(tmp, "geometric.json")
        with open(job, "w") as fh:
            fh.write(GEOMETRIC_JOB)
        with contextlib.redirect_stderr(io.StringIO()):
            code = main(["certify", "--job", job, "--out", out])
        doc = read_certificate(out)
    summary = doc["summary"]
    certs = doc["samples"]
    band = summary["uniform_delta_band"]
    target = (2.0 * l2, 2.0 * l3)
    inside = band is not None and all(b is not None for b in band) and \
        target[0] <= band[0] < band[1] <= target[1]
    min_delta2 = min((c.delta2 for c in certs if c.delta2 is not None), default=None)
    model = model_geometric_lorenz(rho=0.05, zeta=0.05)
    A1 = model.params["impl"].A[1]
    Jt = jprime(model.form, A1)
    diag = np.diag(Jt)
    expected = (1.1828, 2.2828, 1.1828)
    checks = [
        _flag("all points strictly J-separated", True, summary["all_separated"]),
        Check("common delta band inside (2l2, 2l3)",
              f"inside ({target[0]:.6g}, {target[1]:.6g})",
              "none" if band is None else f"({_num(band[0])}, {_num(band[1])})", "-", inside),
        _flag("all points wedge-separated (near-lo)", True, summary["all_wedge_separated"]),
        Check("min delta2 over samples", "> 0", _num(min_delta2), "-",
              min_delta2 is not None and min_delta2 > 0.0),
    ]
    for i, (e, g) in enumerate(zip(expected, diag)):
        checks.append(_close(f"lobe J' diagonal[{i}]", e, g, 1e-3 * scale))
    checks.append(_bound("lobe J' off-diagonal", float(np.max(np.abs(Jt - np.diag(diag)))),
                         1e-12 * scale))
    checks.append(Check("lobe J' positive definite", "> 0",
                        _num(float(np.linalg.eigvalsh(Jt)[0])), "-",
                        np.linalg.eigvalsh(Jt)[0] > 0.0))
    checks.append(Check("certify exit code", "0", str(code), "exact", code == EXIT_OK))
    checks.append(_runtime(30.0, t0))
    return checks


def criterion6(scale):
    t0 = time.perf_counter()
    G = induced_biform(np.diag([-1.0, -1.0, 1.0, 1.0]))
    d = np.diag(G)
    pos, neg = int(np.sum(d > 0)), int(np.sum(d < 0))
    off = float(np.max(np.abs(G - np.diag(d))))
    return [
        Check("positive bivector values", ">= 1", str(pos), "exact", pos >= 1),
        Check("negative bivector values", ">= 1", str(neg), "exact", neg >= 1),
        Check("signature (pos, neg)", "(2, 4)", f"({pos}, {neg})", "exact", (pos, neg) == (2, 4)),
        _bound("off-diagonal part", off, 1e-15 * scale),
        _runtime(1.0, t0),
    ]


def lorenz_samples(count=4, spacing=4.0, h=1e-3, past=10.0, horizon=15.0):
    """Attractor points with splittings (E forward, F from the past) on classic Lorenz."""
    model = model_classic_lorenz()
    burn = integrate(model, np.array([1.0, 1.0, 20.0]), past + spacing * (count - 1), h)
    steps = int(round(spacing / burn.step))
    first = int(round(past / burn.step))
    samples, splittings, estimates = [], [], []
    for j in range(count):
        k = first + j * steps
        x = burn.states[k]
        prior = integrate(model, burn.states[k - first], past, h)
        est = estimate_splitting(model, x, horizon, 1, h, past=prior)
        samples.append(x)
        splittings.append((est.E, est.F))
        estimates.append(est)
    return model, samples, splittings, estimates


def criterion7(scale):
    t0 = time.perf_counter()
    l1, l2, l3 = lorenz_origin_spectrum()
    saddle = model_linear_saddle(l1, l2, l3)
    x = [np.array([1.0, 1.0, 1.0])]
    E = np.array([[0.0], [1.0], [0.0]])
    F = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    good = theoremA_crosscheck(saddle, x, s=1, k=2, T=5.0, splittings=[(E, F)])
    # swapped roles: the expanding axis as E, the strongly contracted plane as F;
    # a short horizon keeps the restriction to F above the degeneracy floor
    Es = np.array([[1.0], [0.0], [0.0]])
    Fs = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    swapped = theoremA_crosscheck(saddle, x, s=1, k=2, T=1.0, splittings=[(Es, Fs)])
    model, samples, splittings, _ = lorenz_samples()
    lorenz = theoremA_crosscheck(model, samples, s=1, k=2, T=5.0, splittings=splittings)
    r = good.records[0]
    rs = swapped.records[0]
    n_pass = sum(1 for r_ in lorenz.records if r_.agree and r_.tangent.verdict)
    return [
        Check("linear saddle verdicts (tangent, wedge)", "(pass, pass)",
              f"({_pf(r.tangent.verdict)}, {_pf(r.exterior.verdict)})", "exact",
              r.tangent.verdict and r.exterior.verdict),
        Check("swapped saddle verdicts (tangent, wedge)", "(fail, fail)",
              f"({_pf(rs.tangent.verdict)}, {_pf(rs.exterior.verdict)})", "exact",
              not rs.tangent.verdict and not rs.exterior.verdict),
        Check("classic Lorenz samples agree-pass", f"{len(samples)}/{len(samples)}",
              f"{n_pass}/{len(samples)}", "exact", n_pass == len(samples)),
        _runtime(60.0, t0),
    ]


def _pf(v):
    return "pass" if v else "fail"


def _fixture_orbits():
    """``(name, model, x0, T, h)``; each orbit is integrated over ``2 T``."""
    l1, l2, l3 = lorenz_origin_spectrum()
    geo = model_geometric_lorenz(rho=0.05, zeta=0.05)
    return [
        ("linear saddle", model_linear_saddle(1.0, -3.0, -0.5), np.array([1.0, 1.0, 1.0]), 5.0,
         1e-3),
        ("Lorenz-spectrum saddle", model_linear_saddle(l1, l2, l3), np.array([1e-3, 1.0, 1.0]),
         1.0, 1e-3),
        ("geometric linear region", geo, np.array([1e-5, 0.5, 0.5]), 0.25, 1e-3),
        ("geometric lobe", geo, np.array([2.5, 0.3, 0.5]), 0.05, 1e-3),
        # crosses both blend bands; the blend is only C2, so a finer step
        ("geometric crossing", geo, np.array([1e-4, 0.5, 0.5]), 0.5, 5e-4),
        ("classic Lorenz", model_classic_lorenz(), np.array([1.0, 1.0, 20.0]), 10.0, 1e-3),
    ]


def criterion8(scale):
    t0 = time.perf_counter()
    worst_liouville, worst_cocycle, worst_growth = 0.0, 0.0, 0.0
    separated_orbits = 0
    for name, model, x0, T, h in _fixture_orbits():
        orbit = integrate(model, x0, 2.0 * T, h)
        if orbit.truncated:
            raise RuntimeError(f"fixture orbit '{name}' left its region: {orbit.notice}")
        worst_liouville = max(worst_liouville, orbit.liouville_residual())
        half = (len(orbit) - 1) // 2
        later = integrate(model, orbit.states[half], T, h)
        rebased = later.fundamentals[-1] @ orbit.fundamentals[half]
        err = np.max(np.abs(rebased - orbit.fundamentals[-1])) / np.linalg.norm(
            orbit.fundamentals[-1], 2)
        worst_cocycle = max(worst_cocycle, float(err))
        cert = certify_orbit(model, orbit, stride=10, wedge=False, mode="full-jacobian")
        if not all(c.strictly_separated for c in cert.certificates):
            continue
        separated_orbits += 1
        deltas = cert.deltas()
        for v in (np.array([1.0, 0.0, 0.0]), np.array([0.6, 0.3, 0.8])):
            margin = growth_margin(orbit, model.form, cert.times, deltas, v)
            worst_growth = max(worst_growth, -margin)
    rng = np.random.default_rng(SEED + 2)
    worst_rev = 0.0
    checked = 0
    for i in range(200):
        J, D = _random_pair(rng, separated=i % 2 == 0)
        a = delta_interval(J, D)
        b = delta_interval(-J, -D)
        if a.empty != b.empty:
            worst_rev = math.inf
            continue
        if a.empty:
            continue
        checked += 1
        worst_rev = max(worst_rev, abs(b.lo + a.hi), abs(b.hi + a.lo))
    return [
        _bound("Liouville residual (all fixture orbits)", worst_liouville, 1e-6 * scale),
        _bound("cocycle re-basing / |Phi|", worst_cocycle, 1e-6 * scale),
        _bound("growth inequality violation (separated orbits)", worst_growth, 1e-6 * scale),
        Check("separated fixture orbits checked", ">= 3", str(separated_orbits), "-",
              separated_orbits >= 3),
        _bound("reversal symmetry of delta interval (200 triples)", worst_rev, 1e-9 * scale),
        Check("nonempty reversal cases", ">= 100", str(checked), "-", checked >= 100),
        _runtime(60.0, t0),
    ]


CRITERIA = (
    (1, "delta-interval fixture", criterion1),
    (2, "delta2 identity and wedge generator", criterion2),
    (3, "Cauchy-Binet and generator consistency", criterion3),
    (4, "rate reproduction on the linear saddle", criterion4),
    (5, "geometric Lorenz certificate", criterion5),
    (6, "mixed bivector signature in index 2", criterion6),
    (7, "exterior-power cross-check", criterion7),
    (8, "property suite", criterion8),
)


def run_criteria(tolerance_scale=1.0, numbers=None):
    results = []
    for number, title, fn in CRITERIA:
        if numbers is not None and number not in numbers:
            continue
        try:
            checks = tuple(fn(tolerance_scale))
        except Exception as exc:  # a crashing criterion is a failing criterion
            checks = (Check("completed", "no error", f"{type(exc).__name__}: {exc}", "-",
                            False),)
        results.append(CriterionResult(number, title, checks))
    return results


def render(results):
    rows = []
    for r in results:
        rows.append(f"[{'PASS' if r.passed else 'FAIL'}] criterion {r.number}: {r.title}")
        for c in r.checks:
            rows.append(f"    {'ok  ' if c.passed else 'FAIL'} {c.name}: expected {c.expected}, "
                        f"got {c.got}, tolerance {c.tolerance}")
    passed = sum(r.passed for r in results)
    rows.append(f"{passed}/{len(results)} criteria passed")
    return "\n".join(rows) + "\n"


def run_all(tolerance_scale=1.0):
    """Criteria 1-8, then criterion 9: a second run must render identically."""
    first = run_criteria(tolerance_scale)
    second = run_criteria(tolerance_scale)
    same = render(first) == render(second)
    determinism = CriterionResult(9, "determinism", (
        Check("two runs render identical reports", "identical",
              "identical" if same else "different", "exact", same),))
    return first + [determinism]
