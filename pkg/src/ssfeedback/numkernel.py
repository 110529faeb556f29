"""Small complex linear-algebra substrate.

Vectors and matrices are plain ``complex128`` numpy arrays (row-major).
The functions here validate shapes and finiteness and raise the package's
structured errors instead of letting numpy broadcast silently.
"""

import numpy as np

from ssfeedback import _kernels
from ssfeedback.errors import (
    DimensionMismatchError,
    EmptyBasisError,
    NumericFailure,
    RankDeficiencyError,
)

DEFAULT_RANK_TOL = 1e-8


def as_cvec(x, name="vector"):
    v = np.asarray(x, dtype=np.complex128)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatchError(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NumericFailure(f"{name} has non-finite entries")
    return v


def as_cmat(x, name="matrix"):
    m = np.asarray(x, dtype=np.complex128)
    if m.ndim != 2 or m.size == 0:
        raise DimensionMismatchError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericFailure(f"{name} has non-finite entries")
    return m


def matmul_herm(a, b):
    """Return ``a^H b`` for a matrix ``a`` and a matrix or vector ``b``."""
    a = as_cmat(a, "a")
    b = np.asarray(b, dtype=np.complex128)
    if b.ndim not in (1, 2) or b.shape[0] != a.shape[0]:
        raise DimensionMismatchError(
            f"inner dimensions differ: a is {a.shape}, b is {b.shape}"
        )
    return a.conj().T @ b


def orthonormalize(basis, tol=DEFAULT_RANK_TOL):
    """Rank-revealing modified Gram-Schmidt with one re-orthogonalization pass.

    Columns whose residual norm falls below ``tol`` times the largest input
    column norm are dropped, so the number of output columns is the
    numerical rank.  Raises :class:`EmptyBasisError` if nothing survives.
    """
    basis = as_cmat(basis, "basis")
    if basis.shape[1] > basis.shape[0]:
        raise DimensionMismatchError(
            f"more columns than rows ({basis.shape[1]} > {basis.shape[0]})"
        )
    out = _kernels.active.mgs(basis, tol)
    if out.shape[1] == 0:
        raise EmptyBasisError("basis has numerical rank 0")
    return out


def projector(basis):
    """Orthogonal projector ``U U^H`` for an orthonormal basis ``U``."""
    u = as_cmat(basis, "basis")
    return u @ u.conj().T


def least_squares(a, b, ridge=0.0):
    """Minimize ``||b - a x||^2 + ridge ||x||^2`` via the normal equations.

    With ``ridge == 0`` this is the Moore-Penrose solution and a singular
    Gram matrix raises :class:`RankDeficiencyError`.
    """
    a = as_cmat(a, "a")
    b = as_cvec(b, "b")
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatchError(f"a has {a.shape[0]} rows but b has {b.shape[0]}")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    gram = a.conj().T @ a
    rhs = a.conj().T @ b
    n = gram.shape[0]
    if ridge > 0:
        gram = gram + ridge * np.eye(n)
    else:
        # Gram-condition check; cond(a)^2 beyond ~1/eps means no usable solution
        s = np.linalg.svd(a, compute_uv=False)
        if s[-1] <= s[0] * 1e-12 or s[0] == 0.0:
            raise RankDeficiencyError("a is numerically rank deficient; pass ridge > 0")
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(str(exc)) from exc


def spectral_norm(m, iters=1000, tol=1e-13, seed=0):
    """Largest singular value by power iteration on ``m^H m``.

    The start vector is drawn from a fixed-seed generator so the result is
    deterministic.  A zero matrix returns 0.
    """
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.size == 0:
        raise DimensionMismatchError(f"matrix must be non-empty 2-D, got shape {m.shape}")
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(m.shape[1]) + 1j * rng.standard_normal(m.shape[1])
    return _kernels.active.power_iteration(m, x0, iters, tol)
