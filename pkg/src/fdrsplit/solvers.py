"""Non-stationary FDR, FB, GFB and TOS iterations.

All four schemes share one driver loop (:func:`_run`) which handles the
schedule, stopping on ``||z_k - z_{k-1}||``, recording and blow-up
detection. Iteration ``k`` (``k >= 1``) uses ``gamma_k`` and ``lambda_k``
to map ``z_{k-1}`` to ``z_k``; record ``k = 0`` is the initial state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidInputError, NonFiniteInputError, NumericalFailureError
from .functions import RestrictedSmooth, SmoothQuadratic
from .linalg import Subspace, as_vector
from .regularizers import Regularizer

# ---------------------------------------------------------------- schedules

GAMMA_RULES = ("constant", "power_decay", "geometric")


@dataclass(frozen=True)
class Schedule:
    """Step-size and relaxation sequences.

    ``gamma_rule`` is one of

    * ``constant``:    ``gamma_k = gamma``
    * ``power_decay``: ``gamma_k = (1 + 1/k**exponent) * gamma``
    * ``geometric``:   ``gamma_k = (1 + ratio**k) * gamma``

    so ``gamma`` is always the limit. ``k_offset`` shifts the index fed to the
    decay formula (the first iteration evaluates it at ``1 + k_offset``).
    ``lambda_fn``, when given, overrides the constant relaxation ``lam``.
    """

    gamma: float
    gamma_rule: str = "constant"
    exponent: float = 1.0
    ratio: float = 0.5
    lam: float = 1.0
    lambda_fn: Optional[Callable[[int], float]] = None
    k_offset: int = 0

    def __post_init__(self):
        if self.gamma_rule not in GAMMA_RULES:
            raise InvalidInputError(f"unknown gamma rule {self.gamma_rule!r}")
        if not self.gamma > 0:
            raise InvalidInputError("gamma must be positive")

    @classmethod
    def constant(cls, gamma, lam=1.0):
        return cls(gamma, "constant", lam=lam)

    @classmethod
    def power_decay(cls, gamma, exponent, lam=1.0, k_offset=0):
        return cls(gamma, "power_decay", exponent=exponent, lam=lam, k_offset=k_offset)

    @classmethod
    def geometric(cls, gamma, ratio, lam=1.0, k_offset=0):
        return cls(gamma, "geometric", ratio=ratio, lam=lam, k_offset=k_offset)

    @property
    def stationary(self):
        return self.gamma_rule == "constant"

    @property
    def constant_lambda(self):
        return self.lambda_fn is None

    def gamma_formula(self, k):
        """The decay formula at index ``k``, ignoring ``k_offset``."""
        if self.gamma_rule == "constant":
            return self.gamma
        if self.gamma_rule == "power_decay":
            return (1.0 + 1.0 / k**self.exponent) * self.gamma
        return (1.0 + self.ratio**k) * self.gamma

    def gamma_at(self, k):
        return self.gamma_formula(k + self.k_offset)

    def lambda_at(self, k):
        return float(self.lambda_fn(k)) if self.lambda_fn is not None else self.lam

    def gammas(self, n, start=1):
        return np.array([self.gamma_at(k) for k in range(start, start + n)])

    def lambdas(self, n, start=1):
        return np.array([self.lambda_at(k) for k in range(start, start + n)])


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, name, passed, reason):
        self.checks.append((name, bool(passed), reason))

    @property
    def ok(self):
        return all(p for _, p, _ in self.checks)

    def failures(self):
        return [(n, r) for n, p, r in self.checks if not p]

    def __str__(self):
        return "\n".join(f"[{'pass' if p else 'FAIL'}] {n}: {r}" for n, p, r in self.checks)


def validate_schedule(s: Schedule, beta_v, horizon=10000):
    """Check the step-size/relaxation conditions against modulus ``beta_v``.

    (i) bounds on ``gamma_k`` and (ii) the open interval for ``lambda_k`` are
    checked numerically over ``k = 1..horizon``; (iii) divergence of
    ``sum lambda_k ((4 beta_v - gamma_k)/(2 beta_v) - lambda_k)`` and (iv)
    summability of ``sum lambda_k |gamma_k - gamma|`` are decided per family.
    """
    if not beta_v > 0:
        raise InvalidInputError("beta_v must be positive")
    rep = ValidationReport()
    g = s.gammas(horizon)
    lam = s.lambdas(horizon)
    gmax = 2.0 * beta_v
    lo, hi = float(g.min()), float(g.max())
    bad = np.nonzero((g <= 0) | (g >= gmax))[0]
    if bad.size:
        k = int(bad[0]) + 1
        rep.add("gamma bounds", False, f"gamma_{k} = {g[k - 1]:.6g} outside ]0, 2*beta_V = {gmax:.6g}[")
    else:
        rep.add("gamma bounds", True, f"{lo:.6g} <= gamma_k <= {hi:.6g} < {gmax:.6g}")

    ub = (4.0 * beta_v - g) / (2.0 * beta_v)
    bad = np.nonzero((lam <= 0) | (lam >= ub))[0]
    if bad.size:
        k = int(bad[0]) + 1
        rep.add("lambda bounds", False, f"lambda_{k} = {lam[k - 1]:.6g} outside ]0, {ub[k - 1]:.6g}[")
    else:
        rep.add("lambda bounds", True, "lambda_k inside ]0, (4 beta_V - gamma_k)/(2 beta_V)[")

    gap = (4.0 * beta_v - hi) / (2.0 * beta_v)
    if s.constant_lambda:
        ok = 0 < s.lam < gap
        rep.add(
            "relaxation divergence",
            ok,
            "constant lambda strictly inside the interval, terms bounded below"
            if ok
            else f"constant lambda {s.lam} not below {(4.0 * beta_v - hi) / (2.0 * beta_v):.6g}",
        )
    else:
        terms = lam * (ub - lam)
        ok = bool(np.all(terms > 0))
        rep.add(
            "relaxation divergence",
            ok,
            f"custom lambda: checked positivity over {horizon} terms only "
            f"(partial sum {terms.sum():.6g}); divergence not decidable",
        )

    if s.gamma_rule == "constant":
        rep.add("step-size summability", True, "gamma_k = gamma, all terms zero")
    elif s.gamma_rule == "power_decay":
        ok = s.exponent > 1
        rep.add(
            "step-size summability",
            ok,
            f"|gamma_k - gamma| ~ k^-{s.exponent}: " + ("summable" if ok else "not summable"),
        )
    else:
        ok = 0 < abs(s.ratio) < 1
        rep.add(
            "step-size summability",
            ok,
            f"|gamma_k - gamma| ~ {s.ratio}^k: " + ("geometric, summable" if ok else "not summable"),
        )
    return rep


# ---------------------------------------------------------------- problems


@dataclass(frozen=True, eq=False)
class FDRProblem:
    """``min G(x) + R(x) + i_V(x)`` with ``G = F o P_V``."""

    smooth: RestrictedSmooth
    reg: Regularizer

    @classmethod
    def build(cls, k_matrix, f_target, reg, v: Optional[Subspace] = None):
        q = SmoothQuadratic(k_matrix, f_target)
        v = v if v is not None else Subspace.whole(q.dim)
        return cls(RestrictedSmooth(q, v), reg)

    @property
    def v(self):
        return self.smooth.v

    @property
    def dim(self):
        return self.smooth.dim

    def objective(self, x):
        """``Phi(x) = R(x) + G(x)``; the constraint is not included."""
        return self.reg.eval(x) + self.smooth.eval(x)

    def objective_rows(self, xs):
        return self.reg.eval_rows(xs) + self.smooth.eval_rows(xs)


@dataclass(frozen=True, eq=False)
class FBProblem:
    smooth: SmoothQuadratic
    reg: Regularizer

    @property
    def dim(self):
        return self.smooth.dim

    @property
    def beta(self):
        from .functions import lipschitz_moduli

        return lipschitz_moduli(self.smooth, Subspace.whole(self.dim))[0]

    def objective(self, x):
        return self.reg.eval(x) + self.smooth.eval(x)

    def objective_rows(self, xs):
        return self.reg.eval_rows(xs) + self.smooth.eval_rows(xs)

    def as_fdr(self):
        return FDRProblem(RestrictedSmooth(self.smooth, Subspace.whole(self.dim)), self.reg)


@dataclass(frozen=True, eq=False)
class GFBProblem:
    smooth: SmoothQuadratic
    regs: Sequence[Regularizer]
    weights: Optional[Sequence[float]] = None

    def __post_init__(self):
        regs = tuple(self.regs)
        m = len(regs)
        if m < 1:
            raise InvalidInputError("at least one regularizer is required")
        w = np.full(m, 1.0 / m) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (m,) or np.any(w <= 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidInputError("weights must lie in ]0,1] and sum to 1")
        if m > 1 and np.any(w >= 1):
            raise InvalidInputError("weights must lie in ]0,1[")
        object.__setattr__(self, "regs", regs)
        object.__setattr__(self, "weights", tuple(w.tolist()))

    @property
    def dim(self):
        return self.smooth.dim

    @property
    def m(self):
        return len(self.regs)

    def objective(self, x):
        return self.smooth.eval(x) + sum(r.eval(x) for r in self.regs)

    def objective_rows(self, xs):
        return self.smooth.eval_rows(xs) + sum(r.eval_rows(xs) for r in self.regs)


@dataclass(frozen=True, eq=False)
class TOSProblem:
    """``min F(x) + R(x) + J(x)``; ``J`` is handled in the ``x``-update."""

    smooth: SmoothQuadratic
    reg_r: Regularizer
    reg_j: Regularizer

    @property
    def dim(self):
        return self.smooth.dim

    def objective(self, x):
        return self.smooth.eval(x) + self.reg_r.eval(x) + self.reg_j.eval(x)

    def objective_rows(self, xs):
        return self.smooth.eval_rows(xs) + self.reg_r.eval_rows(xs) + self.reg_j.eval_rows(xs)


# ---------------------------------------------------------------- state & trajectory


@dataclass(frozen=True)
class SolverState:
    z: np.ndarray
    x: np.ndarray
    u: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class RunOptions:
    max_iter: int = 1000
    residual_tol: float = 0.0
    record_stride: int = 1
    seed: Optional[int] = None
    z0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidInputError("max_iter must be at least 1")
        if self.residual_tol < 0:
            raise InvalidInputError("residual_tol must be non-negative")
        if self.record_stride < 1:
            raise InvalidInputError("record_stride must be at least 1")


@dataclass
class Trajectory:
    """Recorded iterates of one run.

    ``z`` rows are the (possibly product-space) ``z_k``; ``x`` and ``u`` rows
    live in the base space except for GFB, whose ``u`` stacks the ``u_i``.
    """

    method: str
    stride: int
    k: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    residual: np.ndarray
    z: np.ndarray
    x: np.ndarray
    u: np.ndarray
    stop_reason: str
    final: SolverState

    def __len__(self):
        return self.k.size

    @property
    def converged(self):
        return self.stop_reason == "residual"

    @property
    def terminal_residual(self):
        return float(self.residual[-1])

    def at(self, k):
        """Row index of iteration ``k`` (must have been recorded)."""
        i = np.searchsorted(self.k, k)
        if i >= self.k.size or self.k[i] != k:
            raise KeyError(f"iteration {k} was not recorded")
        return int(i)


def _run(method, step, state, schedule, opts):
    rec = {"k": [0], "gamma": [math.nan], "lam": [math.nan], "res": [math.nan],
           "z": [state.z], "x": [state.x], "u": [state.u]}
    reason = "max_iter"
    last_recorded = 0
    for k in range(1, opts.max_iter + 1):
        g = schedule.gamma_at(k)
        lam = schedule.lambda_at(k)
        try:
            new = step(state, g, lam)
        except NonFiniteInputError as e:
            # inputs were checked up front, so this is a breakdown mid-iteration
            raise NumericalFailureError(f"{method}: non-finite iterate at k = {k}", last=state) from e
        if not (np.all(np.isfinite(new.z)) and np.all(np.isfinite(new.u))):
            raise NumericalFailureError(f"{method}: non-finite iterate at k = {k}", last=state)
        res = float(np.linalg.norm(new.z - state.z))
        state = new
        stop = res <= opts.residual_tol
        if k % opts.record_stride == 0 or stop or k == opts.max_iter:
            rec["k"].append(k)
            rec["gamma"].append(g)
            rec["lam"].append(lam)
            rec["res"].append(res)
            rec["z"].append(state.z)
            rec["x"].append(state.x)
            rec["u"].append(state.u)
            last_recorded = k
        if stop:
            reason = "residual"
            break
    assert last_recorded == state.k
    return Trajectory(
        method=method,
        stride=opts.record_stride,
        k=np.array(rec["k"]),
        gamma=np.array(rec["gamma"]),
        lam=np.array(rec["lam"]),
        residual=np.array(rec["res"]),
        z=np.array(rec["z"]),
        x=np.array(rec["x"]),
        u=np.array(rec["u"]),
        stop_reason=reason,
        final=state,
    )


def _z0(opts, n):
    if opts.z0 is None:
        return np.zeros(n)
    return as_vector(opts.z0, n, "z0").copy()


def _require_valid(schedule, modulus, what, horizon):
    rep = validate_schedule(schedule, modulus, horizon)
    if not rep.ok:
        raise InvalidInputError(f"{what}: invalid schedule\n{rep}")
    return rep


# ---------------------------------------------------------------- FDR


def fdr_init(problem: FDRProblem, z0=None):
    z = np.zeros(problem.dim) if z0 is None else as_vector(z0, problem.dim, "z0").copy()
    x = problem.v.project(z)
    return SolverState(z, x, x.copy(), 0)


def fdr_step(state: SolverState, gamma, lam, problem: FDRProblem) -> SolverState:
    """One non-stationary FDR update with step ``gamma`` and relaxation ``lam``."""
    x, z = state.x, state.z
    u = problem.reg.prox(gamma, 2.0 * x - z - gamma * problem.smooth.grad(x))
    z_new = z + lam * (u - x)
    x_new = problem.v.project(z_new)
    return SolverState(z_new, x_new, u, state.k + 1)


def fdr_run(problem: FDRProblem, schedule: Schedule, opts: RunOptions = RunOptions()):
    _require_valid(schedule, problem.smooth.beta_v, "fdr", min(opts.max_iter, 100000))
    state = fdr_init(problem, opts.z0)
    return _run("fdr", lambda s, g, l: fdr_step(s, g, l, problem), state, schedule, opts)


def apply_fixed_point_fdr(gamma, problem: FDRProblem, z):
    """``F_gamma(z) = 1/2 (Id + R_{gamma R} R_V)(Id - gamma grad G)(z)``."""
    if not 0 < gamma < 2 * problem.smooth.beta_v:
        raise InvalidInputError("gamma must lie in ]0, 2 beta_V[")
    z = as_vector(z, problem.dim, "z")
    w = z - gamma * problem.smooth.grad(z)
    refl_v = 2.0 * problem.v.project(w) - w
    refl_r = 2.0 * problem.reg.prox(gamma, refl_v) - refl_v
    return 0.5 * (w + refl_r)


def apply_relaxed_fdr(gamma, lam, problem, z):
    return (1.0 - lam) * z + lam * apply_fixed_point_fdr(gamma, problem, z)


# ---------------------------------------------------------------- FB


def fb_step(state, gamma, lam, problem: FBProblem):
    x = state.x
    p = problem.reg.prox(gamma, x - gamma * problem.smooth.grad(x))
    x_new = (1.0 - lam) * x + lam * p
    return SolverState(x_new, x_new, p, state.k + 1)


def fb_run(problem: FBProblem, schedule: Schedule, opts: RunOptions = RunOptions()):
    """Non-stationary forward-backward; ``z = x`` in the trajectory."""
    _require_valid(schedule, problem.beta, "fb", min(opts.max_iter, 100000))
    x0 = _z0(opts, problem.dim)
    state = SolverState(x0, x0, x0.copy(), 0)
    return _run("fb", lambda s, g, l: fb_step(s, g, l, problem), state, schedule, opts)


# ---------------------------------------------------------------- GFB


def gfb_step(state, gamma, lam, problem: GFBProblem):
    n, w = problem.dim, problem.weights
    x = state.x
    zs = state.z.reshape(problem.m, n)
    fwd = 2.0 * x - gamma * problem.smooth.grad(x)
    us = np.empty_like(zs)
    for i, r in enumerate(problem.regs):
        us[i] = r.prox(gamma / w[i], fwd - zs[i])
    zs_new = zs + lam * (us - x)
    x_new = np.asarray(w) @ zs_new
    return SolverState(zs_new.ravel(), x_new, us.ravel(), state.k + 1)


def gfb_run(problem: GFBProblem, gamma, lam=1.0, opts: RunOptions = RunOptions(), schedule=None):
    """Generalized forward-backward with ``m`` shadow variables stacked in ``z``."""
    from .functions import lipschitz_moduli

    schedule = schedule or Schedule.constant(gamma, lam)
    beta = lipschitz_moduli(problem.smooth, Subspace.whole(problem.dim))[0]
    _require_valid(schedule, beta, "gfb", min(opts.max_iter, 100000))
    z0 = _z0(opts, problem.m * problem.dim)
    x0 = np.asarray(problem.weights) @ z0.reshape(problem.m, problem.dim)
    state = SolverState(z0, x0, np.tile(x0, problem.m), 0)
    return _run("gfb", lambda s, g, l: gfb_step(s, g, l, problem), state, schedule, opts)


def gfb_product_problem(problem: GFBProblem) -> FDRProblem:
    """FDR problem on the rescaled product space equivalent to ``problem``.

    With ``s_i = sqrt(w_i)`` and ``y_i = s_i z_i`` the weighted product-space
    FDR iteration is a Euclidean FDR iteration for
    ``F(sum_i s_i y_i) + sum_i R_i(y_i / s_i) + i_S(y)`` where
    ``S = {y : y_i / s_i all equal}``.
    """
    from .regularizers import ProductRegularizer

    n, m = problem.dim, problem.m
    s = np.sqrt(problem.weights)
    k_big = np.hstack([si * problem.smooth.k_matrix for si in s])
    basis = np.concatenate([si * np.eye(n) for si in s], axis=0)
    v = Subspace.span(basis, m * n)
    reg = ProductRegularizer(problem.regs, s, [n] * m)
    return FDRProblem(RestrictedSmooth(SmoothQuadratic(k_big, problem.smooth.f_target), v), reg)


def gfb_to_product(problem: GFBProblem, z):
    """Map stacked GFB variables ``(z_i)`` to product-space FDR coordinates."""
    s = np.sqrt(problem.weights)
    return (np.asarray(z).reshape(problem.m, problem.dim) * s[:, None]).ravel()


# ---------------------------------------------------------------- TOS


def tos_init(problem: TOSProblem, gamma, z0=None):
    z = np.zeros(problem.dim) if z0 is None else as_vector(z0, problem.dim, "z0").copy()
    x = problem.reg_j.prox(gamma, z)
    return SolverState(z, x, x.copy(), 0)


def tos_step(state, gamma, lam, problem: TOSProblem):
    x, z = state.x, state.z
    u = problem.reg_r.prox(gamma, 2.0 * x - z - gamma * problem.smooth.grad(x))
    z_new = z + lam * (u - x)
    x_new = problem.reg_j.prox(gamma, z_new)
    return SolverState(z_new, x_new, u, state.k + 1)


def tos_run(problem: TOSProblem, gamma, lam=1.0, opts: RunOptions = RunOptions(), schedule=None):
    """Three-operator splitting with constant step ``gamma``."""
    from .functions import lipschitz_moduli

    schedule = schedule or Schedule.constant(gamma, lam)
    if not schedule.stationary:
        raise InvalidInputError("TOS requires a constant step size")
    beta = lipschitz_moduli(problem.smooth, Subspace.whole(problem.dim))[0]
    _require_valid(schedule, beta, "tos", min(opts.max_iter, 100000))
    state = tos_init(problem, schedule.gamma, opts.z0)
    return _run("tos", lambda s, g, l: tos_step(s, g, l, problem), state, schedule, opts)


def apply_fixed_point_tos(gamma, problem: TOSProblem, z):
    """``T_gamma = Id - prox_J + prox_R o (2 prox_J - Id - gamma grad F o prox_J)``.

    The prox of ``J`` is the one applied first (to ``z``), matching the
    ``x``-update of the TOS iteration.
    """
    z = as_vector(z, problem.dim, "z")
    pj = problem.reg_j.prox(gamma, z)
    inner = 2.0 * pj - z - gamma * problem.smooth.grad(pj)
    return z - pj + problem.reg_r.prox(gamma, inner)


def apply_relaxed_tos(gamma, lam, problem, z):
    return (1.0 - lam) * z + lam * apply_fixed_point_tos(gamma, problem, z)


def reference_run(run_fn, opts: RunOptions, factor=10, tol=1e-14, min_iter=20000):
    """Run ``run_fn(opts)`` ``factor`` times longer (at least ``min_iter``) at a tight tolerance."""
    n = max(factor * opts.max_iter, min_iter)
    ref = RunOptions(
        max_iter=n,
        residual_tol=tol,
        record_stride=n,
        seed=opts.seed,
        z0=opts.z0,
    )
    return run_fn(ref)
