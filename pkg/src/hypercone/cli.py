"""Command-line front end: ``hypercone certify | orbit | selftest``.

Jobs are plain-text ``key = value`` files (``#`` starts a comment).  Model
keys are those of :data:`hypercone.flow.MODEL_KEYS`; job keys are listed in
:data:`JOB_KEYS`.  Exit codes: 0 positive verdict, 2 verified negative
verdict, 1 error.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass
import json
import math
import os
import sys

import numpy as np

from .domination import (DegenerateRestrictionError, adapted_metric_check, certify_orbit,
                         classify_trichotomy, delta_area, domination_rate, estimate_splitting,
                         sectional_rate, theoremA_crosscheck)
from .flow import (MODEL_KEYS, MODES, Box, ConfigError, cumulative_simpson, integrate,
                   model_from_config, parse_floats, parse_kv)
from .forms import DELTA_RULES, SeparationCertificate, certify_point
from .matcore import HyperconeError

SCHEMA = "hypercone-cert/1"
RATES_SCHEMA = "hypercone-rates/1"
EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2

CHECKS = ("separation", "wedge", "trichotomy", "rates", "metric", "theoremA")
CHECK_REQUIRES = {
    "separation": (),
    "wedge": ("separation",),
    "trichotomy": ("separation",),
    "rates": (),
    "metric": ("separation", "rates"),
    "theoremA": ("rates",),
}
ORBIT_CHECKS = {"trichotomy", "rates", "metric", "theoremA"}
JOB_KEYS = {
    "sampling", "grid_lo", "grid_hi", "resolution", "blend_samples", "seeds", "horizon",
    "step", "stride", "checks", "delta_rule", "mode", "s",
}


@dataclass
class CertifyJob:
    model: object
    model_config: dict
    sampling: str = "grid"
    grid_lo: tuple = ()
    grid_hi: tuple = ()
    resolution: int = 5
    blend_samples: int = 0
    seeds: tuple = ()
    horizon: float = 5.0
    step: float = 1e-3
    stride: int = 10
    checks: tuple = ("separation",)
    delta_rule: str = "midpoint"
    mode: str = "matrix-family"
    s: int = 1

    def header(self):
        return {
            "model": self.model.name,
            "model_config": dict(sorted(self.model_config.items())),
            "form": self.model.form.matrix.tolist(),
            "sampling": self.sampling,
            "grid_lo": list(self.grid_lo),
            "grid_hi": list(self.grid_hi),
            "resolution": self.resolution,
            "blend_samples": self.blend_samples,
            "seeds": [list(x) for x in self.seeds],
            "horizon": self.horizon,
            "step": self.step,
            "stride": self.stride,
            "checks": list(self.checks),
            "delta_rule": self.delta_rule,
            "mode": self.mode,
            "s": self.s,
        }


def _int(value, line, key, low):
    try:
        v = int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}", line) from None
    if v < low:
        raise ConfigError(f"{key} must be >= {low}, got {v}", line)
    return v


def _positive(value, line, key, allow_zero=False):
    v = parse_floats(value, line, 1)[0]
    if v < 0 or (v == 0 and not allow_zero) or not math.isfinite(v):
        raise ConfigError(f"{key} must be {'non-negative' if allow_zero else 'positive'}, "
                          f"got {value!r}", line)
    return v


def parse_job(text):
    """Parse a job file into a :class:`CertifyJob` (raises :class:`ConfigError`)."""
    cfg = parse_kv(text)
    for key, (_, line) in cfg.items():
        if key not in JOB_KEYS and key not in MODEL_KEYS:
            raise ConfigError(f"unknown key {key!r}", line)
    model_cfg = {k: v for k, v in cfg.items() if k in MODEL_KEYS}
    model = model_from_config(model_cfg)
    job = CertifyJob(model=model, model_config={k: v for k, (v, _) in model_cfg.items()})

    def get(key):
        return cfg[key] if key in cfg else (None, None)

    value, line = get("sampling")
    if value is not None:
        if value not in ("grid", "orbit"):
            raise ConfigError(f"sampling must be 'grid' or 'orbit', got {value!r}", line)
        job.sampling = value
    n = model.dim
    if job.sampling == "grid":
        for key in ("grid_lo", "grid_hi"):
            value, line = get(key)
            if value is None:
                box = model.region
                bound = box.lo if key == "grid_lo" else box.hi
                # an unbounded region leaves the grid unset; only grid
                # certification needs it, the orbit command does not
                if all(math.isfinite(b) for b in bound):
                    setattr(job, key, tuple(float(b) for b in bound))
            else:
                setattr(job, key, parse_floats(value, line, n))
        if any(a > b for a, b in zip(job.grid_lo, job.grid_hi)):
            raise ConfigError("grid_lo must not exceed grid_hi", get("grid_lo")[1])
    value, line = get("resolution")
    if value is not None:
        job.resolution = _int(value, line, "resolution", 2)
    value, line = get("blend_samples")
    if value is not None:
        job.blend_samples = _int(value, line, "blend_samples", 0)
        if job.blend_samples and "impl" not in model.params:
            raise ConfigError("blend_samples needs a model with transition regions", line)
        if job.blend_samples == 1:
            raise ConfigError("blend_samples must be 0 or >= 2", line)
    value, line = get("seeds")
    if value is not None:
        rows = [r for r in value.split(";") if r.strip()]
        job.seeds = tuple(parse_floats(r, line, n) for r in rows)
    if job.sampling == "orbit" and not job.seeds:
        raise ConfigError("orbit sampling needs 'seeds'", get("sampling")[1])
    value, line = get("horizon")
    if value is not None:
        job.horizon = _positive(value, line, "horizon", allow_zero=True)
    value, line = get("step")
    if value is not None:
        job.step = _positive(value, line, "step")
    value, line = get("stride")
    if value is not None:
        job.stride = _int(value, line, "stride", 1)
    value, line = get("s")
    if value is not None:
        job.s = _int(value, line, "s", 1)
        if job.s >= n:
            raise ConfigError(f"s must be below the dimension {n}", line)
    value, line = get("delta_rule")
    if value is not None:
        if value not in DELTA_RULES:
            raise ConfigError(f"delta_rule must be one of {DELTA_RULES}, got {value!r}", line)
        job.delta_rule = value
    value, line = get("mode")
    if value is not None:
        if value not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {value!r}", line)
        job.mode = value
    value, line = get("checks")
    if value is not None:
        checks = tuple(c.strip() for c in value.split(",") if c.strip())
        for c in checks:
            if c not in CHECKS:
                raise ConfigError(f"unknown check {c!r}; expected any of {CHECKS}", line)
        for c in checks:
            missing = [d for d in CHECK_REQUIRES[c] if d not in checks]
            if missing:
                raise ConfigError(f"check {c!r} requires {', '.join(missing)}", line)
        orbit_only = [c for c in checks if c in ORBIT_CHECKS]
        if orbit_only and job.sampling != "orbit":
            raise ConfigError(f"checks {orbit_only} need orbit sampling", line)
        job.checks = tuple(c for c in CHECKS if c in checks)
    return job


def load_job(path):
    with open(path, encoding="utf-8") as fh:
        return parse_job(fh.read())


# ---- certify -----------------------------------------------------------------

def grid_samples(job):
    if not job.grid_lo or not job.grid_hi:
        raise ConfigError("grid sampling needs grid_lo and grid_hi: the model region is unbounded")
    pts = Box(job.grid_lo, job.grid_hi).grid(job.resolution)
    extra = []
    if job.blend_samples:
        impl = job.model.params["impl"]
        for lobe in (1, 2):
            for mu in np.linspace(0.0, 1.0, job.blend_samples):
                extra.append(impl.transition_point(float(mu), lobe))
    return np.vstack([pts] + extra) if extra else pts


def _band(certs, lo_key, hi_key):
    if not certs or not all(c.strictly_separated for c in certs):
        return None
    lo = max(-math.inf if getattr(c, lo_key) is None else getattr(c, lo_key) for c in certs)
    hi = min(math.inf if getattr(c, hi_key) is None else getattr(c, hi_key) for c in certs)
    if not lo < hi:
        return None
    return [None if math.isinf(lo) else lo, None if math.isinf(hi) else hi]


def _orbit_checks(job, orbits, certified):
    out, ok = {}, True
    if "trichotomy" in job.checks:
        out["trichotomy"] = {}
        for cocycle in ("tangent", "wedge"):
            rep = classify_trichotomy(certified, cocycle)
            out["trichotomy"][cocycle] = {
                "verdict": rep.verdict, "slopes": list(rep.slopes),
                "generator_positive": rep.generator_positive, "divergence": rep.divergence,
                "window": rep.window, "eps": rep.eps, "label": "finite-horizon",
                "note": rep.note}
    splittings = []
    if "rates" in job.checks:
        rates = []
        for seed, orbit in zip(job.seeds, orbits):
            est = estimate_splitting(job.model, seed, job.horizon, job.s, job.step)
            splittings.append((est.E, est.F))
            entry = {"seed": list(seed), "splitting_quality": est.quality,
                     "splitting_gap": est.gap, "splitting_usable": est.usable,
                     "splitting_note": est.note}
            try:
                dom = domination_rate(orbit, est.E, est.F)
                entry["domination"] = dom.to_dict()
                ok = ok and dom.verdict
            except DegenerateRestrictionError as exc:
                entry["domination"] = None
                entry["error"] = str(exc)
                ok = False
            rates.append(entry)
        out["rates"] = rates
    if "metric" in job.checks:
        try:
            rep = adapted_metric_check(job.model, [np.array(s) for s in job.seeds], splittings,
                                       T=job.horizon, h=job.step)
            out["metric"] = {"lambda": rep.lam, "xi": rep.xi, "passed": rep.passed}
            ok = ok and rep.passed
        except HyperconeError as exc:
            out["metric"] = {"error": str(exc), "passed": False}
            ok = False
    if "theoremA" in job.checks:
        try:
            rep = theoremA_crosscheck(job.model, [np.array(s) for s in job.seeds], s=job.s,
                                      T=job.horizon, h=job.step, splittings=splittings)
            out["theoremA"] = {"agree": rep.agree, "verdicts": [
                {"tangent": r.tangent.verdict, "exterior": r.exterior.verdict, "agree": r.agree}
                for r in rep.records]}
            ok = ok and rep.agree
        except HyperconeError as exc:
            out["theoremA"] = {"error": str(exc), "agree": False}
            ok = False
    return out, ok


def run_certify(job, threads=1):
    """Certificate document (a dict) for ``job``."""
    J = job.model.form
    wedge = "wedge" in job.checks
    orbits, certified = [], []
    if job.sampling == "grid":
        points = grid_samples(job)
    else:
        for seed in job.seeds:
            orbit = integrate(job.model, seed, job.horizon, job.step, mode="full-jacobian",
                              with_wedge="theoremA" in job.checks)
            orbits.append(orbit)
            certified.append(certify_orbit(job.model, orbit, J, job.delta_rule, job.stride,
                                           wedge=wedge, mode=job.mode))
        points = np.vstack([c.states for c in certified])

    def one(x):
        return certify_point(J, job.model.DX(x, job.mode), x, rule=job.delta_rule, wedge=wedge)

    if certified:
        certs = [c for o in certified for c in o.certificates]
    elif threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            certs = list(pool.map(one, points))
    else:
        certs = [one(x) for x in points]

    summary = {
        "all_separated": all(c.strictly_separated for c in certs),
        "all_wedge_separated": all(c.wedge_separated for c in certs) if wedge else None,
        "uniform_delta_band": _band(certs, "delta_lo", "delta_hi"),
        "uniform_delta2_band": _band(certs, "delta2_lo", "delta2_hi") if wedge else None,
    }
    positive = summary["all_separated"] and (summary["all_wedge_separated"] is not False)
    if orbits:
        checks, ok = _orbit_checks(job, orbits, certified)
        summary["checks"] = checks
        positive = positive and ok
        notices = [o.notice for o in orbits if o.truncated]
        if notices:
            summary["notices"] = notices
    summary["verdict"] = "positive" if positive else "negative"
    header = job.header()
    header["samples"] = len(certs)
    return {"schema": SCHEMA, "header": header, "samples": [c.to_dict() for c in certs],
            "summary": summary}


def dump_json(doc):
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_certificate(doc, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_json(doc))


def read_certificate(path):
    """Load a certificate; samples come back as :class:`SeparationCertificate` values."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}")
    doc["samples"] = [SeparationCertificate.from_dict(d) for d in doc["samples"]]
    return doc


# ---- orbit -------------------------------------------------------------------

def _fmt(v):
    return "nan" if v is None or not math.isfinite(v) else repr(float(v))


def run_orbits(job, out_dir):
    """Write ``orbit_<k>.csv`` per seed and ``rates.json``; returns the rates document."""
    if not job.seeds:
        raise ConfigError("orbit command needs 'seeds'")
    os.makedirs(out_dir, exist_ok=True)
    reports = []
    for k, seed in enumerate(job.seeds):
        orbit = integrate(job.model, seed, job.horizon, job.step, mode="full-jacobian")
        cert = certify_orbit(job.model, orbit, rule=job.delta_rule, stride=job.stride,
                             wedge=job.model.dim == 3, mode=job.mode)
        deltas = cert.deltas()
        delta2s = cert.deltas("wedge")
        running = cumulative_simpson(cert.times, deltas)
        path = os.path.join(out_dir, f"orbit_{k}.csv")
        n = job.model.dim
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t"] + [f"x{i + 1}" for i in range(n)]
                            + ["delta", "delta2", "running_delta"])
            for i in range(cert.times.size):
                writer.writerow([_fmt(cert.times[i])] + [_fmt(v) for v in cert.states[i]]
                                + [_fmt(deltas[i]), _fmt(delta2s[i]), _fmt(running[i])])
        entry = {"seed": list(seed), "csv": os.path.basename(path), "samples": int(cert.times.size),
                 "truncated": orbit.truncated, "notice": orbit.notice,
                 "liouville_residual": orbit.liouville_residual(),
                 "delta_area": (delta_area(cert.times, deltas)
                                if np.all(np.isfinite(deltas)) else None),
                 "domination": None, "sectional": None}
        if len(orbit) >= 3 and job.model.dim - job.s >= 1:
            T = orbit.times[-1]
            est = estimate_splitting(job.model, seed, T, job.s, orbit.step)
            entry["splitting"] = {"quality": est.quality, "gap": est.gap, "usable": est.usable,
                                  "note": est.note}
            try:
                entry["domination"] = domination_rate(orbit, est.E, est.F).to_dict()
            except DegenerateRestrictionError as exc:
                entry["domination_error"] = str(exc)
            if est.F.shape[1] >= 2:
                oriented = integrate(job.model, seed, T, orbit.step, with_wedge=True)
                entry["sectional"] = sectional_rate(
                    oriented, est.F, planes=None if est.F.shape[1] == 2 else 8).to_dict()
        else:
            entry["note"] = "orbit too short for rate fits"
        reports.append(entry)
    doc = {"schema": RATES_SCHEMA, "model": job.model.name, "delta_rule": job.delta_rule,
           "mode": job.mode, "orbits": reports}
    with open(os.path.join(out_dir, "rates.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_json(_finite(doc)))
    return doc


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


# ---- entry point -------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="hypercone",
                                description="Cone-field certificates for vector fields.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("certify", "orbit"):
        sp = sub.add_parser(name)
        sp.add_argument("--job", required=True, help="key-value job file")
        sp.add_argument("--out", help="certificate file (certify) or output directory (orbit)")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--delta-rule", choices=DELTA_RULES)
        sp.add_argument("--mode", choices=MODES)
    st = sub.add_parser("selftest")
    st.add_argument("--out", help="also write the report to this file")
    # test hook: scales every acceptance tolerance
    st.add_argument("--tolerance-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            from .acceptance import render, run_all
            results = run_all(tolerance_scale=args.tolerance_scale)
            text = render(results)
            sys.stdout.write(text)
            if args.out:
                with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(text)
            return EXIT_OK if all(r.passed for r in results) else EXIT_NEGATIVE
        job = load_job(args.job)
        if args.delta_rule:
            job.delta_rule = args.delta_rule
        if args.mode:
            job.mode = args.mode
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.command == "certify":
            doc = run_certify(job, threads=args.threads)
            if args.out:
                write_certificate(doc, args.out)
            else:
                sys.stdout.write(dump_json(doc))
            s = doc["summary"]
            print(f"verdict: {s['verdict']} (all_separated={s['all_separated']}, "
                  f"all_wedge_separated={s['all_wedge_separated']})", file=sys.stderr)
            return EXIT_OK if s["verdict"] == "positive" else EXIT_NEGATIVE
        doc = run_orbits(job, args.out or ".")
        for entry in doc["orbits"]:
            if entry["truncated"]:
                print(f"seed {entry['seed']}: {entry['notice']}", file=sys.stderr)
        return EXIT_OK
    except (HyperconeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
