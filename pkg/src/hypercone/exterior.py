"""Exterior powers of linear maps as compound matrices.

Bases of the k-th exterior power are the k-subsets of ``range(n)`` in
lexicographic order, so ``compound(A, 2)`` for ``n = 3`` uses
``(e0^e1, e0^e2, e1^e2)``.  Only :func:`hodge3` works in the Hodge basis
``(e1^e2, e2^e0, e0^e1)``, where the bivector ``u^v`` has coordinates
``u x v``.
"""

from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .config import TOL
from .matcore import HyperconeError, as_square, check_symmetric

# lexicographic coordinates = HODGE_TO_LEX @ Hodge coordinates (an involution)
HODGE_TO_LEX = np.array([[0.0, 0.0, 1.0],
                         [0.0, -1.0, 0.0],
                         [1.0, 0.0, 0.0]])
LEX_TO_HODGE = HODGE_TO_LEX.T.copy()


class DegenerateFormError(HyperconeError, ValueError):
    pass


@lru_cache(maxsize=None)
def basis(n, k):
    """Lexicographically ordered k-subsets of ``range(n)``."""
    _check_power(n, k)
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def _index(n, k):
    return {S: i for i, S in enumerate(basis(n, k))}


def _check_power(n, k):
    if not 1 <= k <= n:
        raise ValueError(f"exterior power k={k} out of range 1..{n}")


def det(M):
    """Determinant by cofactor expansion up to 4x4, full-pivot LU above."""
    m = M.shape[0]
    if m == 1:
        return M[0, 0]
    if m == 2:
        return M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if m == 3:
        return (M[0, 0] * (M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
                - M[0, 1] * (M[1, 0] * M[2, 2] - M[1, 2] * M[2, 0])
                + M[0, 2] * (M[1, 0] * M[2, 1] - M[1, 1] * M[2, 0]))
    if m == 4:
        total = 0.0
        for j in range(4):
            if M[0, j] != 0.0:
                cols = [c for c in range(4) if c != j]
                total += (-1) ** j * M[0, j] * det(M[1:, cols])
        return total
    return _det_lu(M)


def _det_lu(M):
    U = np.array(M, dtype=float)
    m = U.shape[0]
    sign = 1.0
    for i in range(m):
        sub = np.abs(U[i:, i:])
        r, c = np.unravel_index(np.argmax(sub), sub.shape)
        r += i
        c += i
        if U[r, c] == 0.0:
            return 0.0
        if r != i:
            U[[i, r]] = U[[r, i]]
            sign = -sign
        if c != i:
            U[:, [i, c]] = U[:, [c, i]]
            sign = -sign
        U[i + 1:, i:] -= np.outer(U[i + 1:, i] / U[i, i], U[i, i:])
    return sign * float(np.prod(np.diag(U)))


def compound(A, k):
    """k-th compound matrix: entry ``(S, T)`` is the minor with rows S, columns T."""
    A = as_square(A, "A")
    n = A.shape[0]
    _check_power(n, k)
    if k == 1:
        return A.copy()
    if k == n:
        return np.array([[det(A)]])
    subsets = basis(n, k)
    C = np.empty((len(subsets), len(subsets)))
    for i, S in enumerate(subsets):
        rows = A[list(S)]
        for j, T in enumerate(subsets):
            C[i, j] = det(rows[:, list(T)])
    return C


def additive_compound(A, k):
    """Generator of ``t -> compound(expm(tA), k)``, built by the Leibniz rule.

    Column S holds the coordinates of
    ``sum_j e_{s1} ^ ... ^ (A e_{sj}) ^ ... ^ e_{sk}``.
    """
    A = as_square(A, "A")
    n = A.shape[0]
    _check_power(n, k)
    if k == 1:
        return A.copy()
    subsets = basis(n, k)
    index = _index(n, k)
    M = np.zeros((len(subsets), len(subsets)))
    for col, S in enumerate(subsets):
        for pos, s in enumerate(S):
            for i in range(n):
                a = A[i, s]
                if a == 0.0:
                    continue
                if i != s and i in S:
                    continue
                replaced = list(S)
                replaced[pos] = i
                # bubble the new index into sorted position, tracking the sign
                sign = 1.0
                p = pos
                while p > 0 and replaced[p - 1] > replaced[p]:
                    replaced[p - 1], replaced[p] = replaced[p], replaced[p - 1]
                    sign = -sign
                    p -= 1
                while p < k - 1 and replaced[p + 1] < replaced[p]:
                    replaced[p + 1], replaced[p] = replaced[p], replaced[p + 1]
                    sign = -sign
                    p += 1
                M[index[tuple(replaced)], col] += sign * a
    return M


def cofactor(A):
    A = as_square(A, "A")
    C = np.empty((3, 3))
    for i in range(3):
        rows = [r for r in range(3) if r != i]
        for j in range(3):
            cols = [c for c in range(3) if c != j]
            C[i, j] = (-1) ** (i + j) * det(A[np.ix_(rows, cols)])
    return C


def hodge3(A):
    """Second exterior power of a 3x3 map and its generator, in the Hodge basis.

    Returns ``(cofactor(A), tr(A) I - A^T)``; the first satisfies
    ``(Au) x (Av) = cofactor(A) (u x v)`` and equals ``det(A) A^{-T}`` when A
    is invertible.
    """
    A = as_square(A, "A")
    if A.shape != (3, 3):
        raise ValueError(f"hodge3 needs a 3x3 matrix, got {A.shape}")
    return cofactor(A), np.trace(A) * np.eye(3) - A.T


def wedge(*vectors):
    """Lexicographic coordinates of ``v1 ^ ... ^ vk``."""
    V = np.column_stack([np.asarray(v, dtype=float) for v in vectors])
    n, k = V.shape
    _check_power(n, k)
    return np.array([det(V[list(S)]) for S in basis(n, k)])


def induced_biform(J):
    """Matrix of ``(u1^u2, v1^v2) = det[<J u_i, v_j>]`` on bivectors (lex basis)."""
    J = as_square(J, "J")
    check_symmetric(J)
    n = J.shape[0]
    if n < 2:
        raise ValueError("bivectors need n >= 2")
    scale = max(1.0, float(np.max(np.abs(J)))) ** n
    if abs(det(J)) <= TOL.degenerate_det * scale:
        raise DegenerateFormError(f"quadratic form is degenerate: det = {det(J):.3e}")
    pairs = basis(n, 2)
    G = np.empty((len(pairs), len(pairs)))
    for i, (a, b) in enumerate(pairs):
        for j, (c, d) in enumerate(pairs):
            gram = np.array([[J[a, c], J[a, d]],
                             [J[b, c], J[b, d]]])
            G[i, j] = det(gram)
    return G


def dimension(n, k):
    return comb(n, k)
