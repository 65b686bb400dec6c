"""Vector-field models and orbits with their derivative cocycles.

``integrate`` carries the state, the fundamental matrix of the variational
equation and (optionally) its second exterior power along a fixed-step RK4
orbit.  For ``n = 3`` the exterior power is kept in Hodge coordinates, where
its generator is ``tr(DX) I - DX^T``.
"""

from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .config import TOL
from .exterior import HODGE_TO_LEX, LEX_TO_HODGE, dimension
from .forms import QuadraticForm, wedge_generator
from .matcore import HyperconeError

MODES = ("matrix-family", "full-jacobian")


class RegionError(HyperconeError, ValueError):
    pass


class StepSizeError(HyperconeError, RuntimeError):
    pass


class ConfigError(HyperconeError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.asarray(self.lo)) and np.all(x <= np.asarray(self.hi)))

    def grid(self, resolution):
        axes = [np.linspace(a, b, resolution) for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True, eq=False)
class VectorFieldModel:
    name: str
    dim: int
    field: object
    jacobian: object
    region: Box
    form: QuadraticForm
    params: dict = field(default_factory=dict)

    def X(self, x):
        return self.field(np.asarray(x, dtype=float))

    def DX(self, x, mode="matrix-family"):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        return self.jacobian(np.asarray(x, dtype=float), mode)

    def derivative_residual(self, x, h=None, mode="full-jacobian"):
        """Largest column error of DX against central differences of X, scaled by ``1 + ||DX||``."""
        h = TOL.fd_step if h is None else h
        x = np.asarray(x, dtype=float)
        J = self.DX(x, mode)
        worst = 0.0
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = h
            fd = (self.X(x + e) - self.X(x - e)) / (2.0 * h)
            worst = max(worst, float(np.linalg.norm(fd - J[:, j])))
        return worst / (1.0 + float(np.linalg.norm(J, 2)))


def _whole_space(n):
    # constant-coefficient fields are valid everywhere
    return Box((-math.inf,) * n, (math.inf,) * n)


def model_linear_saddle(l1, l2, l3, relaxed=False, region=None):
    """``X(x) = diag(l1, l2, l3) x`` with the form ``x^2 - y^2 + z^2``."""
    if not relaxed and not l2 < l3 < 0.0 < l1:
        raise ValueError(f"linear saddle needs l2 < l3 < 0 < l1, got ({l1}, {l2}, {l3})")
    D = np.diag([float(l1), float(l2), float(l3)])
    region = region or _whole_space(3)
    return VectorFieldModel(
        name="linear_saddle", dim=3,
        field=lambda x: D @ x,
        jacobian=lambda x, mode: D.copy(),
        region=region,
        form=QuadraticForm.diagonal(1.0, -1.0, 1.0),
        params={"spectrum": (float(l1), float(l2), float(l3)), "relaxed": relaxed},
    )


def model_linear(D, form=None, region=None, name="linear"):
    """Constant-coefficient field ``X(x) = D x`` for an arbitrary matrix."""
    D = np.array(D, dtype=float)
    n = D.shape[0]
    region = region or _whole_space(n)
    if form is None:
        form = QuadraticForm.diagonal(*([1.0, -1.0] + [1.0] * (n - 2)))
    return VectorFieldModel(name=name, dim=n, field=lambda x: D @ x,
                            jacobian=lambda x, mode: D.copy(), region=region,
                            form=form, params={"matrix": D.tolist()})


def model_classic_lorenz(sigma=10.0, r=28.0, b=8.0 / 3.0, region=None, form=None):
    if min(sigma, r, b) <= 0:
        raise ValueError("Lorenz parameters must be positive")

    def X(v):
        x, y, z = v
        return np.array([sigma * (y - x), r * x - y - x * z, x * y - b * z])

    def DX(v, mode):
        x, y, z = v
        return np.array([[-sigma, sigma, 0.0],
                         [r - z, -1.0, -x],
                         [y, x, -b]])

    region = region or Box((-60.0, -60.0, -20.0), (60.0, 60.0, 100.0))
    return VectorFieldModel(name="classic_lorenz", dim=3, field=X, jacobian=DX,
                            region=region,
                            form=form or QuadraticForm.diagonal(1.0, -1.0, 1.0),
                            params={"sigma": sigma, "r": r, "b": b})


def lorenz_origin_spectrum(sigma=10.0, r=28.0, b=8.0 / 3.0):
    """``(l1, l2, l3)`` of the classic Lorenz Jacobian at the origin, ``l2 < l3 < 0 < l1``."""
    root = math.sqrt((sigma + 1.0) ** 2 + 4.0 * sigma * (r - 1.0))
    return (-(sigma + 1.0) + root) / 2.0, (-(sigma + 1.0) - root) / 2.0, -b


@dataclass(frozen=True)
class LorenzGeometry:
    """Lobe placement for the geometric Lorenz field.

    ``|x| <= linear_band`` is the linear region, ``|x| >= lobe_band`` the
    lobes (lobe 1 for ``x > 0``), with a smoothstep blend in between.
    ``translations=None`` picks ``P_i`` so the lobe field equals the linear
    field at the lobe entrance ``(+-lobe_band, 0, 0)``.
    """

    centers: tuple = ((3.0, 0.0, 0.0), (-3.0, 0.0, 0.0))
    translations: tuple | None = None
    linear_band: float = 1.0
    lobe_band: float = 2.0
    region: Box = Box((-6.5, -4.0, -4.0), (6.5, 4.0, 4.0))


def lobe_matrix(i, l1, l2, rho, zeta):
    s = (-1.0) ** i
    return np.array([[rho * l1, 0.0, -s],
                     [0.0, zeta * l2, 0.0],
                     [s, 0.0, rho * l1]])


def _smoothstep(s):
    """Quintic smoothstep and its derivative; C2 so RK4 keeps its order across blends."""
    s = min(max(s, 0.0), 1.0)
    return s ** 3 * (10.0 + s * (6.0 * s - 15.0)), 30.0 * s * s * (1.0 - s) ** 2


class GeometricLorenz:
    """Piecewise field: linear saddle, two rotating lobes, blended transitions."""

    def __init__(self, spectrum, rho=0.05, zeta=0.05, geometry=None):
        if not (0.0 < rho < 1.0 and 0.0 < zeta < 1.0):
            raise ValueError(f"need 0 < rho, zeta < 1, got rho={rho}, zeta={zeta}")
        self.spectrum = tuple(float(v) for v in spectrum)
        self.rho, self.zeta = float(rho), float(zeta)
        self.geometry = geometry or LorenzGeometry()
        l1, l2, _ = self.spectrum
        self.D = np.diag(self.spectrum)
        self.A = {i: lobe_matrix(i, l1, l2, self.rho, self.zeta) for i in (1, 2)}
        self.C = {i: np.asarray(self.geometry.centers[i - 1], dtype=float) for i in (1, 2)}
        if self.geometry.translations is None:
            self.P = {}
            for i in (1, 2):
                edge = np.array([self.geometry.lobe_band * (1 if i == 1 else -1), 0.0, 0.0])
                self.P[i] = self.D @ edge - self.A[i] @ (edge - self.C[i])
        else:
            self.P = {i: np.asarray(self.geometry.translations[i - 1], dtype=float) for i in (1, 2)}

    def classify(self, x):
        """``(kind, lobe, mu, dmu_dx)`` with ``mu = 1`` on the linear region."""
        g = self.geometry
        a = abs(x[0])
        lobe = 1 if x[0] > 0 else 2
        if a <= g.linear_band:
            return "linear", None, 1.0, 0.0
        if a >= g.lobe_band:
            return "lobe", lobe, 0.0, 0.0
        width = g.lobe_band - g.linear_band
        step, dstep = _smoothstep((a - g.linear_band) / width)
        return "transition", lobe, 1.0 - step, -dstep * math.copysign(1.0, x[0]) / width

    def lobe_field(self, i, x):
        return self.A[i] @ (x - self.C[i]) + self.P[i]

    def X(self, x):
        kind, i, mu, _ = self.classify(x)
        if kind == "linear":
            return self.D @ x
        if kind == "lobe":
            return self.lobe_field(i, x)
        return mu * (self.D @ x) + (1.0 - mu) * self.lobe_field(i, x)

    def DX(self, x, mode):
        kind, i, mu, dmu = self.classify(x)
        if kind == "linear":
            return self.D.copy()
        if kind == "lobe":
            return self.A[i].copy()
        J = mu * self.D + (1.0 - mu) * self.A[i]
        if mode == "full-jacobian":
            J[:, 0] += dmu * (self.D @ x - self.lobe_field(i, x))
        return J

    def transition_point(self, mu, lobe):
        """A point on the x-axis where the blend weight equals ``mu``."""
        g = self.geometry
        lo, hi = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if 1.0 - _smoothstep(mid)[0] > mu:
                lo = mid
            else:
                hi = mid
        a = g.linear_band + 0.5 * (lo + hi) * (g.lobe_band - g.linear_band)
        if mu <= 0.0:
            a = g.lobe_band
        elif mu >= 1.0:
            a = g.linear_band
        return np.array([a if lobe == 1 else -a, 0.0, 0.0])


def model_geometric_lorenz(spectrum=None, rho=0.05, zeta=0.05, geometry=None):
    spectrum = lorenz_origin_spectrum() if spectrum is None else spectrum
    g = GeometricLorenz(spectrum, rho, zeta, geometry)
    return VectorFieldModel(
        name="geometric_lorenz", dim=3, field=g.X, jacobian=g.DX,
        region=g.geometry.region,
        form=QuadraticForm.diagonal(1.0, -1.0, 1.0),
        params={"spectrum": g.spectrum, "rho": g.rho, "zeta": g.zeta, "impl": g},
    )


def simpson(t, f):
    """Composite Simpson on a (possibly nonuniform) grid; trapezoid on an odd last panel."""
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    if t.size < 2:
        return 0.0
    total = 0.0
    m = (t.size - 1) // 2 * 2
    for i in range(0, m, 2):
        h0, h1 = t[i + 1] - t[i], t[i + 2] - t[i + 1]
        total += (h0 + h1) / 6.0 * ((2.0 - h1 / h0) * f[i]
                                   + (h0 + h1) ** 2 / (h0 * h1) * f[i + 1]
                                   + (2.0 - h0 / h1) * f[i + 2])
    if m < t.size - 1:
        total += 0.5 * (t[-1] - t[-2]) * (f[-1] + f[-2])
    return float(total)


def cumulative_simpson(t, f):
    """Running integral from ``t[0]``: Simpson at even nodes, half-panel trapezoid corrections at odd ones."""
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    out = np.zeros(t.size)
    for i in range(1, t.size):
        if i % 2 == 0:
            out[i] = out[i - 2] + simpson(t[i - 2:i + 1], f[i - 2:i + 1])
        else:
            out[i] = out[i - 1] + 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1])
    return out


@dataclass
class OrbitSegment:
    times: np.ndarray
    states: np.ndarray
    fundamentals: np.ndarray
    traces: np.ndarray
    logdets: np.ndarray
    step: float
    wedge_fundamentals: np.ndarray | None = None
    wedge_basis: str | None = None
    truncated: bool = False
    notice: str = ""
    mode: str = "full-jacobian"
    # one-step propagators: fundamentals[k + 1] = steps[k] @ fundamentals[k]
    steps: np.ndarray | None = None
    wedge_steps: np.ndarray | None = None

    @property
    def dim(self):
        return self.states.shape[1]

    def __len__(self):
        return self.times.size

    def liouville_residual(self):
        """``|log det Phi_T - int tr DX|``, the relative determinant error to first order.

        ``log det Phi_T`` is the sum of the per-step log determinants, which
        stays accurate when ``Phi_T`` itself is too ill-conditioned for a
        direct determinant.
        """
        if not math.isfinite(self.logdets[-1]):
            return math.inf
        return abs(self.logdets[-1] - simpson(self.times, self.traces))

    def wedge_lex(self):
        """Wedge fundamentals in lexicographic coordinates."""
        if self.wedge_fundamentals is None:
            return None
        if self.wedge_basis == "hodge":
            return HODGE_TO_LEX @ self.wedge_fundamentals @ LEX_TO_HODGE
        return self.wedge_fundamentals

    def wedge_steps_lex(self):
        if self.wedge_steps is None:
            return None
        if self.wedge_basis == "hodge":
            return HODGE_TO_LEX @ self.wedge_steps @ LEX_TO_HODGE
        return self.wedge_steps

    def propagator(self, i, j):
        """``Phi`` from ``states[i]`` to ``states[j]``."""
        return np.linalg.solve(self.fundamentals[i].T, self.fundamentals[j].T).T


def integrate(model, x0, T, h=1e-3, with_wedge=False, mode="full-jacobian",
              liouville_tol=None):
    """Fixed-step RK4 for ``x' = X(x)``, ``Phi' = DX(x) Phi`` and optionally ``W' = D2(x) W``.

    The step is shrunk so that it divides ``T``.  Leaving the model region
    truncates the orbit with a notice.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    if T < 0:
        raise ValueError("horizon must be non-negative")
    liouville_tol = TOL.liouville_step if liouville_tol is None else liouville_tol
    n = model.dim
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (n,):
        raise ValueError(f"initial state must have {n} components")
    if not model.region.contains(x):
        raise RegionError(f"initial state {x} outside model region")
    steps = int(math.ceil(T / h - 1e-9)) if T > 0 else 0
    dt = T / steps if steps else h
    m = dimension(n, 2)
    wedge_basis = ("hodge" if n == 3 else "lex") if with_wedge else None

    def generator(xs):
        J = model.DX(xs, mode)
        return J, (wedge_generator(J) if with_wedge else None)

    times = [0.0]
    states = [x.copy()]
    fundamentals = [np.eye(n)]
    wedges = [np.eye(m)] if with_wedge else None
    traces = [float(np.trace(model.DX(x, mode)))]
    Phi = np.eye(n)
    W = np.eye(m) if with_wedge else None
    logdet = 0.0
    logdets = [0.0]
    step_list, wedge_step_list = [], []
    truncated, notice = False, ""

    eye_n, eye_m = np.eye(n), np.eye(m)
    for k in range(steps):
        J1, G1 = generator(x)
        k1 = model.X(x)
        x2 = x + 0.5 * dt * k1
        J2, G2 = generator(x2)
        k2 = model.X(x2)
        x3 = x + 0.5 * dt * k2
        J3, G3 = generator(x3)
        k3 = model.X(x3)
        x4 = x + dt * k3
        J4, G4 = generator(x4)
        k4 = model.X(x4)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        # the RK4 update of a linear equation is a matrix; keep it explicit so
        # log det accumulates step by step instead of from an ill-conditioned Phi
        R = _rk4_propagator(J1, J2, J3, J4, dt, eye_n)
        Phi = R @ Phi
        step_list.append(R)
        sign, step_logdet = np.linalg.slogdet(R)
        logdet += step_logdet if sign > 0 else math.nan
        if with_wedge:
            RW = _rk4_propagator(G1, G2, G3, G4, dt, eye_m)
            W = RW @ W
            wedge_step_list.append(RW)
        if not model.region.contains(x):
            truncated = True
            step_list.pop()
            if with_wedge:
                wedge_step_list.pop()
            notice = f"orbit left the model region at t={(k + 1) * dt:.6g}; truncated"
            break
        times.append((k + 1) * dt)
        states.append(x.copy())
        fundamentals.append(Phi.copy())
        logdets.append(logdet)
        if with_wedge:
            wedges.append(W.copy())
        traces.append(float(np.trace(model.DX(x, mode))))

    orbit = OrbitSegment(
        times=np.array(times), states=np.array(states), fundamentals=np.array(fundamentals),
        traces=np.array(traces), logdets=np.array(logdets), step=dt,
        wedge_fundamentals=np.array(wedges) if with_wedge else None,
        wedge_basis=wedge_basis, truncated=truncated, notice=notice, mode=mode,
        steps=np.array(step_list).reshape(-1, n, n),
        wedge_steps=np.array(wedge_step_list).reshape(-1, m, m) if with_wedge else None)
    residual = orbit.liouville_residual()
    if residual > liouville_tol:
        raise StepSizeError(f"Liouville residual {residual:.3e} exceeds {liouville_tol:.1e}; "
                            f"reduce the step h={dt:.3g}")
    return orbit


def _rk4_propagator(J1, J2, J3, J4, dt, eye):
    K1 = J1
    K2 = J2 @ (eye + 0.5 * dt * K1)
    K3 = J3 @ (eye + 0.5 * dt * K2)
    K4 = J4 @ (eye + dt * K3)
    return eye + dt / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4)


def write_orbit_csv(orbit, path):
    """CSV with header ``t,x1..xn,phi11..phinn[,w11..]`` (row-major matrices)."""
    n = orbit.dim
    header = ["t"] + [f"x{i + 1}" for i in range(n)]
    header += [f"phi{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    W = orbit.wedge_fundamentals
    if W is not None:
        m = W.shape[1]
        header += [f"w{i + 1}{j + 1}" for i in range(m) for j in range(m)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k in range(len(orbit)):
            row = [orbit.times[k], *orbit.states[k], *orbit.fundamentals[k].ravel()]
            if W is not None:
                row += list(W[k].ravel())
            writer.writerow([repr(float(v)) for v in row])


def read_orbit_csv(path):
    """Inverse of :func:`write_orbit_csv` for the columns it writes."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array([[float(v) for v in r] for r in rows[1:]])
    n = sum(1 for h in header if h.startswith("x"))
    out = {"t": data[:, 0], "states": data[:, 1:1 + n],
           "fundamentals": data[:, 1 + n:1 + n + n * n].reshape(-1, n, n)}
    rest = data[:, 1 + n + n * n:]
    if rest.shape[1]:
        m = int(round(math.sqrt(rest.shape[1])))
        out["wedge"] = rest.reshape(-1, m, m)
    return out


# ---- plain-text key-value configuration ------------------------------------

def parse_kv(text):
    """``key = value`` lines, ``#`` comments.  Returns ``{key: (value, line)}``."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        out[key.lower()] = (value, lineno)
    return out


def parse_floats(value, line=None, count=None):
    try:
        vals = tuple(float(v) for v in value.replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {value!r}", line) from None
    if count is not None and len(vals) != count:
        raise ConfigError(f"expected {count} numbers, got {len(vals)}", line)
    return vals


def parse_matrix(value, line=None):
    rows = [r for r in value.split(";") if r.strip()]
    try:
        M = np.array([[float(v) for v in r.split(",")] for r in rows])
    except ValueError:
        raise ConfigError(f"bad matrix {value!r}", line) from None
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError(f"matrix must be square, got rows {[len(r.split(',')) for r in rows]}", line)
    return M


MODEL_KEYS = {
    "model", "spectrum", "relaxed", "rho", "zeta", "sigma", "r", "b", "region_lo", "region_hi",
    "linear_band", "lobe_band", "lobe_center_1", "lobe_center_2", "lobe_translation_1",
    "lobe_translation_2", "form", "matrix",
}


def model_from_config(cfg):
    """Build a model from parsed key-value pairs (see :data:`MODEL_KEYS`)."""
    def get(key, default=None):
        return cfg[key][0] if key in cfg else default

    def line(key):
        return cfg[key][1] if key in cfg else None

    name = get("model")
    if name is None:
        raise ConfigError("missing required key 'model'")
    region = None
    if "region_lo" in cfg or "region_hi" in cfg:
        if not ("region_lo" in cfg and "region_hi" in cfg):
            raise ConfigError("region_lo and region_hi must be given together",
                              line("region_lo") or line("region_hi"))
        region = Box(parse_floats(get("region_lo"), line("region_lo"), 3),
                     parse_floats(get("region_hi"), line("region_hi"), 3))
    try:
        if name == "linear_saddle":
            values = parse_floats(get("spectrum", "1,-3,-0.5"), line("spectrum"), 3)
            relaxed = get("relaxed", "false").lower() in ("1", "true", "yes")
            model = model_linear_saddle(*values, relaxed=relaxed, region=region)
        elif name == "linear":
            model = model_linear(parse_matrix(get("matrix", ""), line("matrix")), region=region)
        elif name == "geometric_lorenz":
            values = parse_floats(get("spectrum"), line("spectrum"), 3) if "spectrum" in cfg else None
            geo = LorenzGeometry()
            kwargs = {}
            if "linear_band" in cfg:
                kwargs["linear_band"] = parse_floats(get("linear_band"), line("linear_band"), 1)[0]
            if "lobe_band" in cfg:
                kwargs["lobe_band"] = parse_floats(get("lobe_band"), line("lobe_band"), 1)[0]
            if "lobe_center_1" in cfg or "lobe_center_2" in cfg:
                kwargs["centers"] = tuple(
                    parse_floats(get(f"lobe_center_{i}"), line(f"lobe_center_{i}"), 3)
                    if f"lobe_center_{i}" in cfg else geo.centers[i - 1] for i in (1, 2))
            if "lobe_translation_1" in cfg or "lobe_translation_2" in cfg:
                kwargs["translations"] = tuple(
                    parse_floats(get(f"lobe_translation_{i}"), line(f"lobe_translation_{i}"), 3)
                    for i in (1, 2))
            if region is not None:
                kwargs["region"] = region
            geometry = LorenzGeometry(**{**geo.__dict__, **kwargs})
            model = model_geometric_lorenz(
                values, rho=float(get("rho", 0.05)), zeta=float(get("zeta", 0.05)),
                geometry=geometry)
        elif name == "classic_lorenz":
            model = model_classic_lorenz(float(get("sigma", 10.0)), float(get("r", 28.0)),
                                         float(get("b", 8.0 / 3.0)), region=region)
        else:
            raise ConfigError(f"unknown model {name!r}", line("model"))
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc), line("model")) from None
    if "form" in cfg and get("form") != "default":
        form = QuadraticForm.from_matrix(parse_matrix(get("form"), line("form")))
        model = VectorFieldModel(model.name, model.dim, model.field, model.jacobian,
                                 model.region, form, model.params)
    return model
