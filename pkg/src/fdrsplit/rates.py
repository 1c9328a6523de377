"""Local linear rates from the linearized fixed-point maps.

Once the iterates have identified the active manifold, FDR (and TOS) behave
like a linear iteration ``z_{k+1} - z* ~ M (z_k - z*)``. This module
assembles ``M`` at an anchor, its limit projector and the predicted factor
``rho(M - M_inf)``, and compares the prediction with an observed trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
import numpy as np

from .diagnostics import Anchor, IdentificationReport
from .errors import InsufficientDataError, InvalidInputError, UnsupportedFeatureError
from .linalg import solve_spd, spectral_radius
from .regularizers import ProductRegularizer, Regularizer
from .solvers import FBProblem, GFBProblem, TOSProblem, Trajectory, gfb_to_product

EIG_ONE_TOL = 1e-10
MARGIN_TOL = 1e-6


@dataclass(frozen=True)
class LinearizationFDR:
    H_G: np.ndarray
    H_Rbar: np.ndarray
    W_Rbar: np.ndarray
    M_Rbar: np.ndarray
    M_gamma: np.ndarray
    M_gamma_lambda: np.ndarray
    M_inf: np.ndarray
    gamma: float
    lam: float
    polyhedral: bool

    @property
    def matrix(self):
        return self.M_gamma_lambda

    @property
    def limit(self):
        return self.M_inf


@dataclass(frozen=True)
class LinearizationTOS:
    H_F: np.ndarray
    H_Jtilde: np.ndarray
    H_Rtilde: np.ndarray
    W_Jtilde: np.ndarray
    W_Rtilde: np.ndarray
    M_Jtilde: np.ndarray
    M_Rtilde: np.ndarray
    L_gamma: np.ndarray
    L_gamma_lambda: np.ndarray
    L_inf: np.ndarray
    gamma: float
    lam: float
    polyhedral: bool

    @property
    def matrix(self):
        return self.L_gamma_lambda

    @property
    def limit(self):
        return self.L_inf


def limit_projector(m, tol=EIG_ONE_TOL):
    """Spectral projector of ``m`` onto its eigenvalue-1 eigenspace.

    Eigenvalue 1 of an averaged matrix is semisimple, so the projector is
    ``R (L^T R)^{-1} L^T`` with ``R`` and ``L`` spanning the right and left
    null spaces of ``m - I``.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    mult = int(np.sum(np.abs(np.linalg.eigvals(m) - 1.0) <= tol))
    if mult == 0:
        return np.zeros((n, n))
    u, _, vt = np.linalg.svd(m - np.eye(n))
    right = vt[n - mult:].T
    left = u[:, n - mult:]
    return right @ np.linalg.solve(left.T @ right, left.T)


def _w_and_m(reg: Regularizer, x_star, gamma):
    if not hasattr(reg, "_tangent") or reg.kind == "Nuclear":
        raise UnsupportedFeatureError(f"no linearization for {reg.kind}")
    sig = reg.signature(x_star)
    t = reg.tangent_projector(sig)
    h = gamma * (t @ reg.riemannian_hessian(x_star, sig) @ t)
    h = 0.5 * (h + h.T)
    w = solve_spd(np.eye(t.shape[0]) + h, np.eye(t.shape[0]))
    w = 0.5 * (w + w.T)
    return h, w, t @ w @ t


def curved_margin(reg: Regularizer, x_star, g):
    """Smallest non-degeneracy margin over the non-polyhedral components of ``reg``."""
    if reg.polyhedral:
        return float("inf")
    if isinstance(reg, ProductRegularizer):
        return min(
            curved_margin(p, b / s, s * gb)
            for p, s, b, gb in zip(reg.parts, reg.scales, reg._blocks(x_star), reg._blocks(g))
        )
    return reg.nondegeneracy_margin(x_star, g)


def _check_margin(reg: Regularizer, x_star, g, what):
    margin = curved_margin(reg, x_star, g)
    if not margin > MARGIN_TOL:
        raise InvalidInputError(
            f"{what}: non-degeneracy margin {margin:.3g} is not positive on a curved manifold"
        )


def build_fdr_linearization(anchor: Anchor, problem, gamma, lam=1.0):
    """``M_gamma = Id + 2 M_R P_V - M_R - P_V - gamma M_R H_G`` at the anchor."""
    if isinstance(problem, FBProblem):
        problem = problem.as_fdr()
    if not 0 < lam < 2:
        raise InvalidInputError("lambda out of range")
    x_star = anchor.x_star
    h_g = problem.smooth.hessian()
    g = anchor.v_star - problem.smooth.grad(x_star)
    _check_margin(problem.reg, x_star, g, "R")
    h_r, w_r, m_r = _w_and_m(problem.reg, x_star, gamma)
    n = x_star.size
    eye = np.eye(n)
    p = problem.v.projector
    m_g = eye + 2.0 * m_r @ p - m_r - p - gamma * m_r @ h_g
    m_gl = (1.0 - lam) * eye + lam * m_g
    return LinearizationFDR(
        H_G=h_g, H_Rbar=h_r, W_Rbar=w_r, M_Rbar=m_r, M_gamma=m_g,
        M_gamma_lambda=m_gl, M_inf=limit_projector(m_gl),
        gamma=float(gamma), lam=float(lam), polyhedral=problem.reg.polyhedral,
    )


def build_tos_linearization(anchor: Anchor, problem: TOSProblem, gamma, lam=1.0):
    """``L_gamma = Id + 2 M_R M_J - M_R - M_J - gamma M_R H_F M_J`` at the anchor."""
    x_star = anchor.x_star
    g_j = (anchor.z_star - x_star) / gamma
    g_r = -g_j - problem.smooth.grad(x_star)
    _check_margin(problem.reg_j, x_star, g_j, "J")
    _check_margin(problem.reg_r, x_star, g_r, "R")
    h_f = problem.smooth.hessian()
    h_j, w_j, m_j = _w_and_m(problem.reg_j, x_star, gamma)
    h_r, w_r, m_r = _w_and_m(problem.reg_r, x_star, gamma)
    eye = np.eye(x_star.size)
    l_g = eye + 2.0 * m_r @ m_j - m_r - m_j - gamma * m_r @ h_f @ m_j
    l_gl = (1.0 - lam) * eye + lam * l_g
    return LinearizationTOS(
        H_F=h_f, H_Jtilde=h_j, H_Rtilde=h_r, W_Jtilde=w_j, W_Rtilde=w_r,
        M_Jtilde=m_j, M_Rtilde=m_r, L_gamma=l_g, L_gamma_lambda=l_gl,
        L_inf=limit_projector(l_gl), gamma=float(gamma), lam=float(lam),
        polyhedral=problem.reg_r.polyhedral and problem.reg_j.polyhedral,
    )


def predicted_rate(lin):
    """``rho(M_{gamma,lambda} - M_inf)``."""
    return spectral_radius(lin.matrix - lin.limit)


EXACT = "polyhedral-quadratic-exact"
PROJECTED = "projected-sequence"


@dataclass(frozen=True)
class RateCertificate:
    predicted_rho: float
    observed_factor: float
    window: tuple
    n_points: int
    tol_rel: float
    theorem_case: str
    k_identified: int
    dominated_by_schedule: bool = False

    @property
    def rel_error(self):
        return abs(self.observed_factor - self.predicted_rho) / self.predicted_rho

    @property
    def verdict(self):
        return self.rel_error <= self.tol_rel

    def as_dict(self):
        return {
            "predicted_rho": self.predicted_rho,
            "observed_factor": self.observed_factor,
            "window_start": self.window[0],
            "window_end": self.window[1],
            "n_points": self.n_points,
            "theorem_case": self.theorem_case,
            "k_identified": self.k_identified,
            "rel_error": self.rel_error,
            "tol_rel": self.tol_rel,
            "verdict": "match" if self.verdict else "mismatch",
            "dominated_by_schedule": self.dominated_by_schedule,
        }


def _is_constant(a):
    a = a[np.isfinite(a)]
    return a.size == 0 or bool(np.all(a == a[0]))


def certify(lin, anchor: Anchor, traj: Trajectory, ident: IdentificationReport,
            tol_rel=0.1, case=None, min_points=30):
    """Compare the observed post-identification factor with ``predicted_rate(lin)``.

    The case is chosen automatically: polyhedral regularizers with a constant
    schedule use ``||z_k - z*||`` (exact case), anything else uses
    ``||(Id - M_inf)(z_k - z*)||``. The fit covers the second half of the
    post-identification records whose distance is clear of rounding noise.
    """
    if not ident.identified:
        raise InsufficientDataError("no identification iteration: cannot certify a local rate")
    stationary = _is_constant(traj.gamma) and _is_constant(traj.lam)
    if case is None:
        case = EXACT if (lin.polyhedral and stationary) else PROJECTED
    if case not in (EXACT, PROJECTED):
        raise InvalidInputError(f"unknown theorem case {case!r}")
    diff = traj.z - anchor.z_star
    if case == PROJECTED:
        diff = diff - diff @ lin.limit.T
    dist = np.linalg.norm(diff, axis=1)
    scale = max(1.0, float(np.linalg.norm(anchor.z_star)))
    usable = (traj.k >= ident.k_identified) & (dist > 10 * np.finfo(float).eps * scale)
    if usable.sum() < min_points:
        raise InsufficientDataError(
            f"only {int(usable.sum())} usable records after identification (need {min_points})"
        )
    # stay well above the accuracy of the anchor itself
    fit = usable & (dist > 1e-11 * scale)
    ks = traj.k[fit]
    if ks.size < min_points:
        ks = traj.k[usable]
        fit = usable
    k_mid = ks[0] + (ks[-1] - ks[0]) // 2
    sel = fit & (traj.k >= k_mid)
    if sel.sum() < 2:
        raise InsufficientDataError("fit window holds fewer than two records")
    slope = np.polyfit(traj.k[sel].astype(float), np.log(dist[sel]), 1)[0]
    observed = float(np.exp(slope))
    rho = predicted_rate(lin)
    dominated = (not stationary) and observed > rho * (1.0 + tol_rel)
    return RateCertificate(
        predicted_rho=float(rho), observed_factor=observed,
        window=(int(traj.k[sel][0]), int(traj.k[sel][-1])), n_points=int(sel.sum()),
        tol_rel=float(tol_rel), theorem_case=case, k_identified=int(ident.k_identified),
        dominated_by_schedule=bool(dominated),
    )


def product_trajectory(problem: GFBProblem, traj: Trajectory) -> Trajectory:
    """Express a GFB trajectory in the coordinates of ``gfb_product_problem``."""
    s = np.sqrt(problem.weights)

    def lift_x(x):
        return (np.asarray(x)[:, None, :] * s[None, :, None]).reshape(len(traj), -1)

    z = np.array([gfb_to_product(problem, zi) for zi in traj.z])
    u = np.array([gfb_to_product(problem, ui) for ui in traj.u])
    final = replace(traj.final, z=gfb_to_product(problem, traj.final.z),
                    x=np.tile(traj.final.x, problem.m) * np.repeat(s, problem.dim),
                    u=gfb_to_product(problem, traj.final.u))
    return replace(traj, z=z, x=lift_x(traj.x), u=u, final=final)
