"""Dense real linear algebra: subspaces, spectral quantities, SPD solves.

Vectors and matrices are plain ``numpy`` float arrays. Problem sizes are
desk scale, so everything here is dense.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NonFiniteInputError, NumericalFailureError

ORTHO_TOL = 1e-12
MIN_POWER_ITERS = 5000


def as_vector(x, dim=None, name="x"):
    """Return ``x`` as a finite 1-D float array, checking its length."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise InvalidInputError(f"{name} has dimension {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInputError(f"{name} has non-finite entries")
    return v


def as_matrix(m, name="m"):
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteInputError(f"{name} has non-finite entries")
    return a


def orthonormalize(vectors, dim, tol=1e-10):
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    ``vectors`` is an iterable of length-``dim`` arrays (or the columns of a
    2-D array). Directions whose residual norm falls below ``tol`` times their
    original norm are dropped as linearly dependent.
    """
    arr = np.asarray(vectors, dtype=float)
    if arr.size == 0:
        return np.zeros((dim, 0))
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] != dim:
        raise InvalidInputError(f"spanning vectors have dimension {arr.shape[0]}, expected {dim}")
    basis = []
    for j in range(arr.shape[1]):
        v = arr[:, j].copy()
        nrm0 = np.linalg.norm(v)
        if nrm0 == 0.0:
            continue
        for _ in range(2):
            for q in basis:
                v -= (q @ v) * q
        nrm = np.linalg.norm(v)
        if nrm <= tol * nrm0:
            continue
        basis.append(v / nrm)
    if not basis:
        return np.zeros((dim, 0))
    return np.column_stack(basis)


@dataclass(frozen=True, eq=False)
class Subspace:
    """A linear subspace of R^n stored by an orthonormal basis.

    Build one with :meth:`span`, :meth:`whole` or :meth:`zero` rather than by
    hand; the constructor only checks the orthonormality of ``basis``.
    """

    ambient_dim: int
    basis: np.ndarray
    projector: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float).reshape(self.ambient_dim, -1)
        gram = b.T @ b
        if b.shape[1] and np.max(np.abs(gram - np.eye(b.shape[1]))) > ORTHO_TOL * 10:
            raise InvalidInputError("subspace basis is not orthonormal")
        b.setflags(write=False)
        p = b @ b.T
        p = 0.5 * (p + p.T)
        p.setflags(write=False)
        object.__setattr__(self, "basis", b)
        object.__setattr__(self, "projector", p)

    @classmethod
    def span(cls, vectors, dim):
        """Subspace spanned by the columns of ``vectors``."""
        return cls(dim, orthonormalize(vectors, dim))

    @classmethod
    def whole(cls, dim):
        return cls(dim, np.eye(dim))

    @classmethod
    def zero(cls, dim):
        return cls(dim, np.zeros((dim, 0)))

    @property
    def dim(self):
        return self.basis.shape[1]

    def complement(self):
        """Orthogonal complement, with a basis completed by QR."""
        n, d = self.ambient_dim, self.dim
        if d == 0:
            return Subspace.whole(n)
        if d == n:
            return Subspace.zero(n)
        q, _ = np.linalg.qr(np.hstack([self.basis, np.eye(n)]))
        comp = q[:, d:n]
        comp = comp - self.basis @ (self.basis.T @ comp)
        return Subspace.span(comp, n)

    def project(self, x):
        return project(self, x)

    def project_perp(self, x):
        x = as_vector(x, self.ambient_dim)
        return x - self.projector @ x


def project(s: Subspace, x) -> np.ndarray:
    """Orthogonal projection of ``x`` onto ``s``."""
    x = as_vector(x, s.ambient_dim)
    if s.dim == s.ambient_dim:
        return x.copy()
    return s.basis @ (s.basis.T @ x)


def spectral_norm(m, tol=1e-12, max_iter=None):
    """Largest singular value of ``m`` by power iteration on ``m.T @ m``.

    Starts from the normalized all-ones vector and stops when the relative
    change of the estimate drops below ``tol``. The iteration cap defaults to
    ``max(10 * n, 5000)`` with ``n`` the number of columns; the floor matters
    for tiny matrices whose two top singular values are close.
    """
    a = as_matrix(m)
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    n = a.shape[1]
    cap = max_iter if max_iter is not None else max(10 * n, MIN_POWER_ITERS)
    if not np.any(a):
        return 0.0

    v = np.ones(n) / np.sqrt(n)
    w = a.T @ (a @ v)
    if np.linalg.norm(w) == 0.0:
        # all-ones start is in the null space; fall back to the heaviest column
        v = np.zeros(n)
        v[np.argmax(np.linalg.norm(a, axis=0))] = 1.0
        w = a.T @ (a @ v)
    est = float(v @ w)
    for _ in range(cap):
        nw = np.linalg.norm(w)
        v = w / nw
        w = a.T @ (a @ v)
        new = float(v @ w)
        if abs(new - est) <= tol * abs(new):
            return float(np.sqrt(new))
        est = new
    raise NumericalFailureError(
        f"power iteration did not converge in {cap} iterations", last=float(np.sqrt(est))
    )


def spectral_radius(m, tol=1e-12):
    """Largest eigenvalue modulus from a full dense eigen-solve.

    ``tol`` is accepted for interface symmetry with :func:`spectral_norm`;
    the dense solver is accurate to working precision.
    """
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"matrix must be square, got {a.shape}")
    try:
        ev = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigen-solve failed: {exc}") from exc
    if not np.all(np.isfinite(ev)):
        raise NumericalFailureError("eigen-solve returned non-finite values")
    return float(np.max(np.abs(ev)))


def solve_spd(a, b):
    """Solve ``a @ x = b`` for symmetric positive definite ``a`` (Cholesky).

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    a = as_matrix(a, "a")
    b = np.asarray(b, dtype=float)
    if a.shape[0] != a.shape[1] or b.shape[0] != a.shape[0]:
        raise InvalidInputError(f"shape mismatch: a {a.shape}, b {b.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > 1e-8 * scale:
        raise InvalidInputError("matrix is not symmetric")
    try:
        c = scipy.linalg.cho_factor(0.5 * (a + a.T), lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise InvalidInputError(f"matrix is not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve(c, b)
