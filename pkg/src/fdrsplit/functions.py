"""Smooth terms: the least-squares data fit and its restriction to a subspace."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .linalg import Subspace, as_matrix, as_vector, spectral_norm


class SmoothFunction:
    """Hooks every smooth term provides: value, gradient, Hessian."""

    dim: int

    def eval(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hessian(self, x=None):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class SmoothQuadratic(SmoothFunction):
    """``F(x) = 0.5 * ||K x - f||^2``."""

    k_matrix: np.ndarray
    f_target: np.ndarray
    gram: np.ndarray = field(init=False, repr=False)
    kt_f: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        k = as_matrix(self.k_matrix, "K")
        f = as_vector(self.f_target, k.shape[0], "f")
        object.__setattr__(self, "k_matrix", k)
        object.__setattr__(self, "f_target", f)
        object.__setattr__(self, "gram", k.T @ k)
        object.__setattr__(self, "kt_f", k.T @ f)

    @property
    def dim(self):
        return self.k_matrix.shape[1]

    def eval(self, x):
        x = as_vector(x, self.dim)
        r = self.k_matrix @ x - self.f_target
        return 0.5 * float(r @ r)

    def eval_rows(self, xs):
        r = as_matrix(xs, "xs") @ self.k_matrix.T - self.f_target
        return 0.5 * np.sum(r * r, axis=1)

    def grad(self, x):
        x = as_vector(x, self.dim)
        return self.gram @ x - self.kt_f

    def hessian(self, x=None):
        return self.gram.copy()


def eval_f(q: SmoothQuadratic, x):
    return q.eval(x)


def grad_f(q: SmoothQuadratic, x):
    return q.grad(x)


def lipschitz_moduli(q: SmoothQuadratic, v: Subspace, tol=1e-12):
    """Return ``(beta, beta_v)``: inverse Lipschitz constants of grad F and grad G.

    ``beta_v`` is ``inf`` when ``P_V K^T K P_V`` vanishes (grad G is constant).
    """
    if v.ambient_dim != q.dim:
        raise InvalidInputError("subspace and smooth term dimensions differ")
    if not np.any(q.k_matrix):
        raise InvalidInputError("K is zero; the Lipschitz modulus is undefined")
    beta = 1.0 / spectral_norm(q.k_matrix, tol) ** 2
    kp = q.k_matrix @ v.projector
    if v.dim == q.dim:
        return beta, beta
    if not np.any(np.abs(kp) > 1e-14 * np.max(np.abs(q.k_matrix))):
        return beta, np.inf
    beta_v = 1.0 / spectral_norm(kp, tol) ** 2
    return beta, max(beta_v, beta)


@dataclass(frozen=True, eq=False)
class RestrictedSmooth(SmoothFunction):
    """``G = F o P_V`` with both Lipschitz moduli precomputed.

    ``grad(x) = P_V grad F(P_V x)``; for a quadratic this is the affine map
    ``H_G x - P_V K^T f`` with ``H_G = P_V K^T K P_V``.
    """

    base: SmoothQuadratic
    v: Subspace
    beta: float = field(init=False)
    beta_v: float = field(init=False)
    hess_g: np.ndarray = field(init=False, repr=False)
    offset: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        beta, beta_v = lipschitz_moduli(self.base, self.v)
        p = self.v.projector
        h = p @ self.base.gram @ p
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "beta_v", beta_v)
        object.__setattr__(self, "hess_g", 0.5 * (h + h.T))
        object.__setattr__(self, "offset", p @ self.base.kt_f)

    @property
    def dim(self):
        return self.base.dim

    def eval(self, x):
        return self.base.eval(self.v.project(x))

    def eval_rows(self, xs):
        return self.base.eval_rows(as_matrix(xs, "xs") @ self.v.projector)

    def grad(self, x):
        x = as_vector(x, self.dim)
        return self.hess_g @ x - self.offset

    def hessian(self, x=None):
        return self.hess_g.copy()


def grad_g(r: RestrictedSmooth, x):
    return r.grad(x)
