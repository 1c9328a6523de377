"""Partly smooth regularizers: value, prox, manifold, tangent space, Hessian.

Every regularizer is an immutable object exposing

* ``eval(x)`` and ``prox(gamma, x)``;
* ``signature(x, tol)``: the discrete pattern of the manifold through ``x``;
* ``tangent_projector(sig)``: orthogonal projector onto the tangent space;
* ``riemannian_hessian(x, sig)``: Hessian along the (flat) manifold;
* ``nondegeneracy_margin(x_star, g)``: positive iff ``g`` lies in the
  relative interior of the subdifferential at ``x_star``.

Indices in signatures are 0-based. For ``TV1D`` jump index ``i`` refers to
the difference ``x[i+1] - x[i]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._prox1d import project_l1_ball, prox_tv1d
from .errors import InvalidInputError, UnsupportedFeatureError
from .linalg import Subspace, as_matrix, as_vector

INF = float("inf")
# tolerance on the subgradient equality constraints of the margin checks
ONSUPPORT_TOL = 1e-6


def default_tol(x):
    return 1e-10 * (1.0 + float(np.max(np.abs(x), initial=0.0)))


@dataclass(frozen=True)
class ManifoldSignature:
    """Discrete pattern identifying a partly smooth manifold.

    ``pattern`` holds the support (L1), active blocks (GroupL12), saturation
    set (LInf) or jump set (TV1D). ``signs`` is only used by LInf and
    ``rank`` only by Nuclear. ``parts`` holds per-block signatures of a
    :class:`ProductRegularizer`.
    """

    kind: str
    dim: int
    pattern: tuple = ()
    signs: tuple = ()
    rank: int = 0
    parts: tuple = ()

    @property
    def size(self):
        if self.kind == "Nuclear":
            return self.rank
        if self.kind == "Product":
            return sum(p.size for p in self.parts)
        return len(self.pattern)


def _selector(dim, idx):
    p = np.zeros((dim, dim))
    idx = np.asarray(idx, dtype=int)
    p[idx, idx] = 1.0
    return p


class Regularizer:
    kind = ""
    polyhedral = True

    def _check(self, x):
        return as_vector(x, getattr(self, "dim", None))

    def eval(self, x):
        raise NotImplementedError

    def eval_rows(self, xs):
        """``eval`` applied to every row of ``xs``."""
        return np.array([self.eval(x) for x in as_matrix(xs, "xs")])

    def prox(self, gamma, x):
        if not gamma > 0:
            raise InvalidInputError(f"prox step must be positive, got {gamma}")
        return self._prox(float(gamma), self._check(x))

    def _prox(self, gamma, x):
        raise NotImplementedError

    def signature(self, x, tol=None):
        x = self._check(x)
        return self._signature(x, default_tol(x) if tol is None else tol)

    def tangent_projector(self, sig: ManifoldSignature):
        if sig.kind != self.kind:
            raise InvalidInputError(f"signature of kind {sig.kind} given to {self.kind}")
        p = self._tangent(sig)
        return 0.5 * (p + p.T)

    def riemannian_hessian(self, x, sig: ManifoldSignature):
        x = self._check(x)
        if sig.kind != self.kind:
            raise InvalidInputError(f"signature of kind {sig.kind} given to {self.kind}")
        return self._hessian(x, sig)

    def _hessian(self, x, sig):
        # polyhedral: the function is affine along its manifold
        return np.zeros((x.size, x.size))

    def nondegeneracy_margin(self, x_star, g, tol=None):
        x_star = self._check(x_star)
        g = as_vector(g, x_star.size, "g")
        return self._margin(x_star, g, default_tol(x_star) if tol is None else tol)


@dataclass(frozen=True, eq=False)
class L1Norm(Regularizer):
    """``mu * ||x||_1``."""

    mu: float
    kind = "L1"

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidInputError("mu must be positive")

    def eval(self, x):
        return self.mu * float(np.sum(np.abs(self._check(x))))

    def eval_rows(self, xs):
        return self.mu * np.sum(np.abs(as_matrix(xs, "xs")), axis=1)

    def _prox(self, gamma, x):
        t = gamma * self.mu
        return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)

    def _signature(self, x, tol):
        return ManifoldSignature("L1", x.size, tuple(np.nonzero(np.abs(x) > tol)[0].tolist()))

    def _tangent(self, sig):
        return _selector(sig.dim, list(sig.pattern))

    def _margin(self, x, g, tol):
        on = np.abs(x) > tol
        if np.any(np.abs(g[on] - self.mu * np.sign(x[on])) > ONSUPPORT_TOL * max(1.0, self.mu)):
            return -INF
        off = ~on
        if not np.any(off):
            return INF
        return float(np.min(self.mu - np.abs(g[off])))


@dataclass(frozen=True, eq=False)
class GroupL12(Regularizer):
    """``mu * sum_b ||x_b||`` over disjoint blocks covering ``0..n-1``."""

    mu: float
    groups: Sequence
    dim: int = field(init=False)
    polyhedral = False
    kind = "GroupL12"

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidInputError("mu must be positive")
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        if not groups or any(len(g) == 0 for g in groups):
            raise InvalidInputError("groups must be non-empty")
        flat = [i for g in groups for i in g]
        n = len(flat)
        if len(set(flat)) != n:
            raise InvalidInputError("groups overlap")
        if sorted(flat) != list(range(n)):
            raise InvalidInputError("groups must cover 0..n-1 exactly")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "dim", n)
        object.__setattr__(self, "_idx", [np.array(g) for g in groups])

    @classmethod
    def contiguous(cls, mu, n, size):
        if n % size:
            raise InvalidInputError("group size must divide n")
        return cls(mu, [range(i, i + size) for i in range(0, n, size)])

    def block_norms(self, x):
        return np.array([np.linalg.norm(x[b]) for b in self._idx])

    def eval(self, x):
        return self.mu * float(np.sum(self.block_norms(self._check(x))))

    def eval_rows(self, xs):
        xs = as_matrix(xs, "xs")
        return self.mu * sum(np.linalg.norm(xs[:, b], axis=1) for b in self._idx)

    def _prox(self, gamma, x):
        t = gamma * self.mu
        out = np.zeros_like(x)
        for b in self._idx:
            nb = np.linalg.norm(x[b])
            if nb > t:
                out[b] = x[b] * (1.0 - t / nb)
        return out

    def _signature(self, x, tol):
        active = [i for i, nb in enumerate(self.block_norms(x)) if nb > tol]
        return ManifoldSignature("GroupL12", x.size, tuple(active))

    def _tangent(self, sig):
        idx = [i for b in sig.pattern for i in self._idx[b]]
        return _selector(sig.dim, idx)

    def _hessian(self, x, sig):
        h = np.zeros((x.size, x.size))
        for bi in sig.pattern:
            b = self._idx[bi]
            nb = np.linalg.norm(x[b])
            if nb == 0.0:
                raise InvalidInputError(f"block {bi} is active in the signature but zero at x")
            xb = x[b] / nb
            h[np.ix_(b, b)] = (self.mu / nb) * (np.eye(b.size) - np.outer(xb, xb))
        return h

    def _margin(self, x, g, tol):
        m = INF
        for b in self._idx:
            nb = np.linalg.norm(x[b])
            if nb > tol:
                if np.linalg.norm(g[b] - self.mu * x[b] / nb) > ONSUPPORT_TOL * max(1.0, self.mu):
                    return -INF
            else:
                m = min(m, self.mu - float(np.linalg.norm(g[b])))
        return m


@dataclass(frozen=True, eq=False)
class LInfNorm(Regularizer):
    """``mu * ||x||_inf``; prox by Moreau decomposition with the l1 ball."""

    mu: float
    kind = "LInf"

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidInputError("mu must be positive")

    def eval(self, x):
        return self.mu * float(np.max(np.abs(self._check(x)), initial=0.0))

    def _prox(self, gamma, x):
        return x - project_l1_ball(x, gamma * self.mu)

    def _signature(self, x, tol):
        top = float(np.max(np.abs(x), initial=0.0))
        if top <= tol:
            return ManifoldSignature("LInf", x.size)
        sat = np.nonzero(np.abs(x) >= top - tol)[0]
        return ManifoldSignature(
            "LInf", x.size, tuple(sat.tolist()), tuple(int(s) for s in np.sign(x[sat]))
        )

    def _tangent(self, sig):
        n = sig.dim
        if not sig.pattern:
            # x = 0: the subdifferential is the full l1 ball, tangent space is {0}
            return np.zeros((n, n))
        sat = list(sig.pattern)
        p = _selector(n, [i for i in range(n) if i not in set(sat)])
        s = np.zeros(n)
        s[sat] = sig.signs
        s /= np.linalg.norm(s)
        return p + np.outer(s, s)

    def _margin(self, x, g, tol):
        sig = self._signature(x, tol)
        scale = ONSUPPORT_TOL * max(1.0, self.mu)
        if not sig.pattern:
            return self.mu - float(np.sum(np.abs(g)))
        sat = np.array(sig.pattern)
        off = np.setdiff1d(np.arange(x.size), sat)
        if off.size and np.max(np.abs(g[off])) > scale:
            return -INF
        w = np.array(sig.signs) * g[sat]
        if abs(np.sum(w) - self.mu) > scale:
            return -INF
        return float(np.min(w))


def difference_matrix(n):
    """``(n-1) x n`` forward-difference matrix with rows ``(.., -1, +1, ..)``."""
    d = np.zeros((max(n - 1, 0), n))
    i = np.arange(n - 1)
    d[i, i] = -1.0
    d[i, i + 1] = 1.0
    return d


@dataclass(frozen=True, eq=False)
class TV1D(Regularizer):
    """Anisotropic 1-D total variation ``mu * ||D x||_1``."""

    mu: float
    dim: int
    kind = "TV1D"

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidInputError("mu must be positive")
        if self.dim < 1:
            raise InvalidInputError("dimension must be positive")

    @property
    def d_matrix(self):
        return difference_matrix(self.dim)

    def eval(self, x):
        return self.mu * float(np.sum(np.abs(np.diff(self._check(x)))))

    def eval_rows(self, xs):
        return self.mu * np.sum(np.abs(np.diff(as_matrix(xs, "xs"), axis=1)), axis=1)

    def _prox(self, gamma, x):
        return prox_tv1d(x, gamma * self.mu)

    def _signature(self, x, tol):
        return ManifoldSignature("TV1D", x.size, tuple(np.nonzero(np.abs(np.diff(x)) > tol)[0].tolist()))

    def _tangent(self, sig):
        # null space of the inactive rows of D: piecewise constant between jumps
        n = sig.dim
        cuts = [0] + [j + 1 for j in sig.pattern] + [n]
        p = np.zeros((n, n))
        for a, b in zip(cuts[:-1], cuts[1:]):
            p[a:b, a:b] = 1.0 / (b - a)
        return p

    def dual_vector(self, g):
        """The unique ``eta`` with ``D^T eta = g`` (requires ``sum(g) = 0``)."""
        return -np.cumsum(g)[:-1]

    def _margin(self, x, g, tol):
        scale = ONSUPPORT_TOL * max(1.0, self.mu)
        if abs(np.sum(g)) > scale:
            return -INF
        eta = self.dual_vector(g)
        dx = np.diff(x)
        jumps = np.abs(dx) > tol
        if np.any(np.abs(eta[jumps] - self.mu * np.sign(dx[jumps])) > scale):
            return -INF
        if np.all(jumps):
            return INF
        return float(np.min(self.mu - np.abs(eta[~jumps])))


@dataclass(frozen=True, eq=False)
class NuclearNorm(Regularizer):
    """Sum of singular values of the ``shape`` matrix stored row-major in ``x``.

    Only value, prox and rank signature are supported: the fixed-rank
    manifold is curved.
    """

    mu: float
    shape: tuple
    polyhedral = False
    kind = "Nuclear"

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidInputError("mu must be positive")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    @property
    def dim(self):
        return self.shape[0] * self.shape[1]

    def eval(self, x):
        return self.mu * float(np.sum(np.linalg.svd(self._check(x).reshape(self.shape), compute_uv=False)))

    def _prox(self, gamma, x):
        u, s, vt = np.linalg.svd(x.reshape(self.shape), full_matrices=False)
        s = np.maximum(s - gamma * self.mu, 0.0)
        return ((u * s) @ vt).ravel()

    def _signature(self, x, tol):
        s = np.linalg.svd(x.reshape(self.shape), compute_uv=False)
        return ManifoldSignature("Nuclear", x.size, rank=int(np.sum(s > tol)))

    def _tangent(self, sig):
        raise UnsupportedFeatureError("tangent spaces of the fixed-rank manifold are not supported")

    def _hessian(self, x, sig):
        raise UnsupportedFeatureError("Riemannian Hessian on the fixed-rank manifold is not supported")

    def _margin(self, x, g, tol):
        raise UnsupportedFeatureError("non-degeneracy margin for the nuclear norm is not supported")


@dataclass(frozen=True, eq=False)
class SubspaceIndicator(Regularizer):
    """Indicator of a linear subspace; ``Subspace.whole(n)`` gives ``R = 0``."""

    subspace: Subspace
    kind = "SubspaceIndicator"

    @property
    def dim(self):
        return self.subspace.ambient_dim

    def eval(self, x):
        x = self._check(x)
        dist = np.linalg.norm(self.subspace.project_perp(x))
        return 0.0 if dist <= 1e-9 * (1.0 + np.linalg.norm(x)) else INF

    def _prox(self, gamma, x):
        return self.subspace.project(x)

    def _signature(self, x, tol):
        return ManifoldSignature("SubspaceIndicator", x.size)

    def _tangent(self, sig):
        return self.subspace.projector.copy()

    def _margin(self, x, g, tol):
        # the subdifferential is V-perp everywhere on V: relative interior is all of it
        return INF


def zero_regularizer(n):
    return SubspaceIndicator(Subspace.whole(n))


@dataclass(frozen=True, eq=False)
class ProductRegularizer(Regularizer):
    """``sum_i R_i(y_i / s_i)`` over consecutive blocks ``y = (y_1, ..., y_m)``.

    With ``s_i = sqrt(w_i)`` this is the rescaled product-space regularizer
    under which the weighted GFB iteration becomes a plain FDR iteration.
    """

    parts: Sequence
    scales: Sequence
    dims: Sequence = None
    kind = "Product"

    def __post_init__(self):
        parts = tuple(self.parts)
        scales = tuple(float(s) for s in self.scales)
        if len(parts) != len(scales) or not parts:
            raise InvalidInputError("one positive scale per component is required")
        if any(s <= 0 for s in scales):
            raise InvalidInputError("scales must be positive")
        if self.dims is None:
            if not all(hasattr(p, "dim") for p in parts):
                raise InvalidInputError("dims are required for dimension-free components")
            dims = [p.dim for p in parts]
        else:
            dims = [int(d) for d in self.dims]
            if len(dims) != len(parts) or any(
                    hasattr(p, "dim") and p.dim != d for p, d in zip(parts, dims)):
                raise InvalidInputError("dims do not match the components")
        object.__setattr__(self, "dims", tuple(dims))
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "_offsets", np.cumsum([0] + dims))
        self.__dict__["polyhedral"] = all(p.polyhedral for p in parts)

    @property
    def dim(self):
        return int(self._offsets[-1])

    def _blocks(self, y):
        o = self._offsets
        return [y[o[i]:o[i + 1]] for i in range(len(self.parts))]

    def eval(self, y):
        y = self._check(y)
        return float(sum(p.eval(b / s) for p, s, b in zip(self.parts, self.scales, self._blocks(y))))

    def _prox(self, gamma, y):
        return np.concatenate(
            [s * p.prox(gamma / s**2, b / s) for p, s, b in zip(self.parts, self.scales, self._blocks(y))]
        )

    def _signature(self, y, tol):
        parts = tuple(
            p._signature(b / s, tol) for p, s, b in zip(self.parts, self.scales, self._blocks(y))
        )
        return ManifoldSignature("Product", y.size, parts=parts)

    def _tangent(self, sig):
        n = self.dim
        t = np.zeros((n, n))
        o = self._offsets
        for i, (p, ps) in enumerate(zip(self.parts, sig.parts)):
            t[o[i]:o[i + 1], o[i]:o[i + 1]] = p.tangent_projector(ps)
        return t

    def _hessian(self, y, sig):
        n = self.dim
        h = np.zeros((n, n))
        o = self._offsets
        for i, (p, s, b, ps) in enumerate(zip(self.parts, self.scales, self._blocks(y), sig.parts)):
            h[o[i]:o[i + 1], o[i]:o[i + 1]] = p.riemannian_hessian(b / s, ps) / s**2
        return h

    def _margin(self, y, g, tol):
        gb = self._blocks(g)
        return min(
            p._margin(b / s, s * gi, tol)
            for p, s, b, gi in zip(self.parts, self.scales, self._blocks(y), gb)
        )


# functional spellings of the methods


def evaluate(r: Regularizer, x):
    return r.eval(x)


def prox(r: Regularizer, gamma, x):
    return r.prox(gamma, x)


def manifold_signature(r: Regularizer, x, tol=None):
    return r.signature(x, tol)


def tangent_projector(r: Regularizer, sig):
    return r.tangent_projector(sig)


def riemannian_hessian(r: Regularizer, x, sig):
    return r.riemannian_hessian(x, sig)


def nondegeneracy_margin(r: Regularizer, x_star, g, tol=None):
    return r.nondegeneracy_margin(x_star, g, tol)
