"""Dense kernels for small square matrices (n <= 10).

The symmetric eigensolver and the SVD are cyclic Jacobi methods; ``expm`` is
scaling-and-squaring around a degree-13 Pade kernel.  Everything here is a
pure function of its inputs.
"""

import numpy as np

from .config import TOL


class HyperconeError(Exception):
    """Base class for errors raised by this package."""


class AsymmetryError(HyperconeError, ValueError):
    def __init__(self, asymmetry, scale):
        self.asymmetry = asymmetry
        self.scale = scale
        super().__init__(f"matrix is not symmetric: max|S - S^T| = {asymmetry:.3e} "
                         f"(scale {scale:.3e})")


class MatrixOverflowError(HyperconeError, ArithmeticError):
    pass


def as_square(A, name="matrix"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def asymmetry(S):
    S = np.asarray(S, dtype=float)
    return float(np.max(np.abs(S - S.T))) if S.size else 0.0


def check_symmetric(S, rtol=None):
    rtol = TOL.symmetry if rtol is None else rtol
    scale = float(np.max(np.abs(S))) if S.size else 0.0
    asym = asymmetry(S)
    if asym > rtol * max(scale, 1e-300):
        raise AsymmetryError(asym, scale)


def sym_eig(S, sweeps=None):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, V)`` with ``w`` ascending and ``S @ V == V @ diag(w)``.
    """
    A = as_square(S, "S")
    check_symmetric(A)
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    sweeps = TOL.jacobi_sweeps if sweeps is None else sweeps
    scale = np.linalg.norm(A)
    eps = np.finfo(float).eps
    for _ in range(sweeps):
        off = np.linalg.norm(A[~np.eye(n, dtype=bool)])
        if off <= eps * scale * 1e-2 or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def min_eig(S):
    """Smallest eigenvalue of a symmetric matrix or a stack of them.

    This sits in the inner loop of the delta-interval search, so it goes to
    LAPACK rather than :func:`sym_eig`.
    """
    S = np.asarray(S, dtype=float)
    return np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2)))[..., 0]


_PADE13 = (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
           1187353796428800.0, 129060195264000.0, 10559470521600.0,
           670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
           960960.0, 16380.0, 182.0, 1.0)


def expm(A, t=1.0):
    """Return ``e^{tA}``."""
    A = as_square(A, "A") * float(t)
    n = A.shape[0]
    norm1 = np.max(np.sum(np.abs(A), axis=0))
    if norm1 == 0.0:
        return np.eye(n)
    s = 0
    if norm1 > 0.5:
        s = int(np.ceil(np.log2(norm1 / 0.5)))
    A = A / 2.0 ** s
    b = _PADE13
    eye = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * eye)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * eye)
    R = np.linalg.solve(V - U, V + U)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(s):
            R = R @ R
    if not np.all(np.isfinite(R)):
        raise MatrixOverflowError(f"e^(tA) overflows double precision (||tA||_1 = {norm1:.3e})")
    return R


def svd(A, sweeps=None):
    """Singular value decomposition by one-sided (Hestenes) Jacobi.

    Returns ``(U, sigma, V)`` with ``A = U @ diag(sigma) @ V.T`` and ``sigma``
    descending.  Tall ``m x n`` input (``m >= n``) gives the thin factorization.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < A.shape[1] or A.shape[1] < 1:
        raise ValueError(f"svd expects a square or tall matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("A has non-finite entries")
    n = A.shape[1]
    W = A.copy()
    V = np.eye(n)
    sweeps = TOL.jacobi_sweeps if sweeps is None else sweeps
    eps = np.finfo(float).eps
    for _ in range(sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = W[:, p] @ W[:, p]
                beta = W[:, q] @ W[:, q]
                gamma = W[:, p] @ W[:, q]
                if gamma == 0.0 or abs(gamma) <= eps * np.sqrt(alpha * beta):
                    continue
                rotated = True
                with np.errstate(over="ignore"):
                    # a subnormal gamma sends zeta to inf and t to 0, which is
                    # the correct limiting rotation
                    zeta = (beta - alpha) / (2.0 * gamma)
                    t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(zeta, 1.0))
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                wp, wq = W[:, p].copy(), W[:, q].copy()
                W[:, p] = c * wp - s * wq
                W[:, q] = s * wp + c * wq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        if not rotated:
            break
    sigma = np.linalg.norm(W, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, W, V = sigma[order], W[:, order], V[:, order]
    U = np.zeros_like(W)
    floor = max(A.shape) * eps * (sigma[0] if sigma[0] > 0 else 1.0)
    for j in range(n):
        # converged columns are orthogonal relative to their own norms, so
        # graded spectra keep their left vectors; only the noise level below
        # ``floor`` gets an explicit re-orthogonalization
        u = W[:, j] / sigma[j] if sigma[j] > 1e-300 else np.zeros(W.shape[0])
        if sigma[j] <= floor:
            for _ in range(2):
                u = u - U[:, :j] @ (U[:, :j].T @ u)
        nrm = np.linalg.norm(u)
        U[:, j] = u / nrm if nrm > 0.5 else _complete_column(U[:, :j])
    return U, sigma, V


def _complete_column(Q):
    """A unit vector orthogonal to the (orthonormal) columns of ``Q``."""
    n = Q.shape[0]
    best, best_norm = None, -1.0
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        for _ in range(2):
            e = e - Q @ (Q.T @ e)
        nrm = np.linalg.norm(e)
        if nrm > best_norm:
            best, best_norm = e, nrm
    return best / best_norm


def orthonormalize(B):
    """Orthonormal basis (columns) for the column span of ``B``, same orientation order."""
    Q, R = np.linalg.qr(np.asarray(B, dtype=float))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def singular_values(A):
    return svd(A)[1]
