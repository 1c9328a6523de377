"""Measurements on recorded trajectories.

Bregman divergence series with best-iterate and ergodic values, the
per-iteration audit of the energy inequality behind the ``O(1/k)`` rate,
activity identification, and log-linear slope fitting.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .linalg import Subspace
from .regularizers import ManifoldSignature, Regularizer
from .solvers import FBProblem, Schedule, Trajectory

INF = float("inf")


@dataclass(frozen=True)
class Anchor:
    """Reference point ``(z*, x*)`` with ``v* = (x* - z*) / gamma``."""

    z_star: np.ndarray
    x_star: np.ndarray
    gamma: float
    v_star: np.ndarray


def make_anchor(reference: Trajectory, gamma, v: Optional[Subspace] = None, tol=1e-12):
    """Anchor from a converged FDR/FB reference run.

    ``v`` is the constraint subspace; ``None`` means the whole space, in which
    case ``z* = x*`` and ``v* = 0``.
    """
    if reference.terminal_residual > tol:
        raise InvalidInputError(
            f"reference run not converged: residual {reference.terminal_residual:.3g} > {tol:.1g}"
        )
    z = reference.final.z.copy()
    if v is None:
        return Anchor(z, z.copy(), float(gamma), np.zeros_like(z))
    x = v.project(z)
    if np.linalg.norm(x - reference.final.x) > 1e-9 * (1.0 + np.linalg.norm(x)):
        raise InvalidInputError("reference x is not the projection of z onto V")
    vs = (x - z) / gamma
    if np.linalg.norm(v.project(vs)) > 1e-9 * (1.0 + np.linalg.norm(vs)):
        raise InvalidInputError("v* is not orthogonal to V")
    return Anchor(z, x, float(gamma), vs)


def make_tos_anchor(reference: Trajectory, gamma, reg_j: Regularizer, tol=1e-12):
    """Anchor for TOS: ``x* = prox_{gamma J}(z*)``."""
    if reference.terminal_residual > tol:
        raise InvalidInputError(
            f"reference run not converged: residual {reference.terminal_residual:.3g} > {tol:.1g}"
        )
    z = reference.final.z.copy()
    x = reg_j.prox(gamma, z)
    return Anchor(z, x, float(gamma), (x - z) / gamma)


def _as_fdr(problem):
    return problem.as_fdr() if isinstance(problem, FBProblem) else problem


def bregman(anchor: Anchor, problem, y):
    """``Phi(y) - Phi(x*) - <v*, P_{V-perp} y>`` with ``Phi = R + G``."""
    problem = _as_fdr(problem)
    r = problem.reg.eval(y)
    if not np.isfinite(r):
        return INF
    phi_star = problem.reg.eval(anchor.x_star) + problem.smooth.eval(anchor.x_star)
    val = r + problem.smooth.eval(y) - phi_star
    if problem.v.dim < problem.v.ambient_dim:
        val -= float(anchor.v_star @ problem.v.project_perp(y))
    return val


def bregman_rows(anchor: Anchor, problem, ys):
    """``bregman`` applied to every row of ``ys``."""
    problem = _as_fdr(problem)
    ys = np.asarray(ys, dtype=float)
    r = problem.reg.eval_rows(ys)
    phi_star = problem.reg.eval(anchor.x_star) + problem.smooth.eval(anchor.x_star)
    val = r + problem.smooth.eval_rows(ys) - phi_star
    if problem.v.dim < problem.v.ambient_dim:
        perp = ys - ys @ problem.v.projector
        val = val - perp @ anchor.v_star
    val[~np.isfinite(r)] = INF
    return val


@dataclass
class BregmanSeries:
    k: np.ndarray
    d: np.ndarray
    best: np.ndarray
    ergodic: np.ndarray
    approximate: bool

    @property
    def scaled_best(self):
        return (self.k + 1) * self.best

    @property
    def scaled_ergodic(self):
        return (self.k + 1) * self.ergodic

    def at(self, k):
        i = int(np.searchsorted(self.k, k))
        if i >= self.k.size or self.k[i] != k:
            raise KeyError(f"iteration {k} not in series")
        return i


def bregman_series(anchor: Anchor, problem, traj: Trajectory, ergodic=True):
    """Divergence at every recorded ``u_k`` plus running best and ergodic values.

    The ergodic point is the mean of the recorded ``u``; it is the true
    ``u_bar_k`` only when ``traj.stride == 1`` (``approximate`` flags this).
    """
    d = bregman_rows(anchor, problem, traj.u)
    best = np.minimum.accumulate(d)
    if ergodic:
        means = np.cumsum(traj.u, axis=0) / np.arange(1, len(traj) + 1)[:, None]
        erg = bregman_rows(anchor, problem, means)
    else:
        erg = np.full_like(d, np.nan)
    return BregmanSeries(traj.k.copy(), d, best, erg, approximate=traj.stride != 1)


@dataclass
class AuditReport:
    """Per-step terms of the energy inequality.

    Entry ``p`` concerns the step from state ``p`` to ``p + 1``:
    ``lhs = D(u_{p+1}) + phi_{p+1}`` and
    ``rhs = phi_p + (gamma_{p+1} - gamma_p)/2 ||v*||^2 + xi_{p+1} + zeta_{p+1}``,
    where ``xi`` and ``zeta`` are the larger of their two variants.
    """

    k: np.ndarray
    bregman: np.ndarray
    phi: np.ndarray
    xi_const: np.ndarray
    xi_step: np.ndarray
    zeta_limit: np.ndarray
    zeta_lower: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    slack: np.ndarray

    @property
    def max_violation(self):
        return float(max(0.0, -np.min(self.slack))) if self.slack.size else 0.0


def audit_lemma34(anchor: Anchor, problem, traj: Trajectory, schedule: Schedule, beta_v=None):
    """Audit the one-step energy inequality along an unrelaxed FDR trajectory.

    ``gamma_p`` below denotes the step used *from* state ``p`` (that is,
    ``schedule.gamma_at(p + 1)``). Two variants of each auxiliary term are
    computed:

    * ``xi``: constant prefactor ``|gamma_lo - beta_V| / (2 gamma beta_V)``
      versus the per-step ``|gamma_p - beta_V| / (2 gamma_p beta_V)``;
    * ``zeta``: ``|gamma_{p+1} - gamma_p| / (2 gamma^2)`` versus the same
      with ``gamma_lo^2``, both times ``||z_{p+1} - x*||^2``,

    with ``gamma`` the limit step and ``gamma_lo`` the smallest step used.
    """
    problem = _as_fdr(problem)
    if traj.stride != 1:
        raise InvalidInputError("the audit needs every iterate (stride 1)")
    if not schedule.constant_lambda or schedule.lam != 1.0:
        raise InvalidInputError("the audit requires lambda_k = 1")
    if np.any(traj.lam[1:] != 1.0):
        raise InvalidInputError("trajectory was not run with lambda_k = 1")
    bv = problem.smooth.beta_v if beta_v is None else beta_v
    n = len(traj)
    gam = np.array([schedule.gamma_at(p + 1) for p in range(n)])
    if not np.allclose(gam[: n - 1], traj.gamma[1:], rtol=0, atol=0):
        raise InvalidInputError("trajectory steps do not match the schedule")
    g_lim = schedule.gamma
    g_lo = float(gam.min())
    v = problem.v
    vs = anchor.v_star
    xs = anchor.x_star

    z_perp = traj.z - traj.z @ v.projector
    phi = (np.sum((z_perp + gam[:, None] * vs) ** 2, axis=1)
           + np.sum((traj.x - xs) ** 2, axis=1)) / (2.0 * gam)
    d = bregman_rows(anchor, problem, traj.u)
    dz2 = np.sum(np.diff(traj.z, axis=0) ** 2, axis=1)
    zx2 = np.sum((traj.z[1:] - xs) ** 2, axis=1)
    dg = np.abs(np.diff(gam))
    xi_const = abs(g_lo - bv) / (2.0 * g_lim * bv) * dz2
    xi_step = np.abs(gam[:-1] - bv) / (2.0 * gam[:-1] * bv) * dz2
    zeta_limit = dg / (2.0 * g_lim**2) * zx2
    zeta_lower = dg / (2.0 * g_lo**2) * zx2
    lhs = d[1:] + phi[1:]
    rhs = (phi[:-1] + 0.5 * np.diff(gam) * float(vs @ vs)
           + np.maximum(xi_const, xi_step) + np.maximum(zeta_limit, zeta_lower))
    return AuditReport(
        k=traj.k[:-1].copy(), bregman=d, phi=phi,
        xi_const=xi_const, xi_step=xi_step, zeta_limit=zeta_limit, zeta_lower=zeta_lower,
        lhs=lhs, rhs=rhs, slack=rhs - lhs,
    )


@dataclass(frozen=True)
class IdentificationReport:
    k_identified: Optional[int]
    record_index: Optional[int]
    target: object
    margin: Optional[float] = None

    @property
    def identified(self):
        return self.k_identified is not None


def signatures(traj: Trajectory, reg: Regularizer, which="u", tol=None):
    rows = getattr(traj, which)
    return [reg.signature(r, tol) for r in rows]


def first_permanent_match(sigs, target):
    """Index from which every entry of ``sigs`` equals ``target`` (or None)."""
    i = len(sigs)
    while i > 0 and sigs[i - 1] == target:
        i -= 1
    return i if i < len(sigs) else None


def detect_identification(traj: Trajectory, reg: Regularizer, target: ManifoldSignature,
                          tol=None, which="u", margin=None):
    """Earliest recorded iteration after which ``which`` stays on ``target``."""
    idx = first_permanent_match(signatures(traj, reg, which, tol), target)
    if idx is None:
        return IdentificationReport(None, None, target, margin)
    return IdentificationReport(int(traj.k[idx]), idx, target, margin)


def fit_log_slope(series, window=None):
    """Per-iteration factor ``exp(slope)`` of a least-squares fit of ``log(value)`` on ``k``.

    ``series`` is a sequence of ``(k, value)`` pairs or a ``(k, values)``
    tuple of arrays; ``window = (k_lo, k_hi)`` restricts the fit.
    """
    if isinstance(series, tuple) and len(series) == 2 and np.ndim(series[0]) == 1:
        k, val = (np.asarray(a, dtype=float) for a in series)
    else:
        arr = np.asarray(series, dtype=float)
        k, val = arr[:, 0], arr[:, 1]
    if window is not None:
        sel = (k >= window[0]) & (k <= window[1])
        k, val = k[sel], val[sel]
    if k.size < 2:
        raise InvalidInputError("need at least two points in the window")
    if np.any(val <= 0):
        raise InvalidInputError("values must be positive to take logarithms")
    slope = np.polyfit(k, np.log(val), 1)[0]
    return float(np.exp(slope))
