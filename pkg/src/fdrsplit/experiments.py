"""Synthetic problem families, schedule presets and end-to-end runs.

Two families are provided:

* ``lasso_constrained``: ``1/2 ||Kx - f||^2 + mu ||x||_1`` subject to
  ``x in V`` (FDR), or without the constraint (FB);
* ``group_tv``: ``1/2 ||Kx - f||^2 + mu1 ||x||_{1,2} + mu2 ||Dx||_1``
  (TOS and GFB).
"""
from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .diagnostics import (
    Anchor,
    BregmanSeries,
    IdentificationReport,
    bregman_series,
    detect_identification,
    first_permanent_match,
    make_anchor,
    make_tos_anchor,
)
from .errors import FDRError, InvalidInputError
from .functions import SmoothQuadratic, lipschitz_moduli
from .linalg import Subspace
from .rates import (
    RateCertificate,
    build_fdr_linearization,
    build_tos_linearization,
    certify,
    product_trajectory,
)
from .regularizers import L1Norm, GroupL12, TV1D
from .solvers import (
    FBProblem,
    FDRProblem,
    GFBProblem,
    RunOptions,
    Schedule,
    TOSProblem,
    Trajectory,
    ValidationReport,
    fb_run,
    fdr_run,
    gfb_product_problem,
    gfb_run,
    reference_run,
    tos_run,
    validate_schedule,
)

FAMILIES = ("lasso_constrained", "group_tv")
METHODS = {"lasso_constrained": ("fdr", "fb"), "group_tv": ("tos", "gfb")}
SUBSPACE_RULES = ("support", "vector")


@dataclass
class ProblemSpec:
    """Parameters of a synthetic instance; ``None`` fields take family defaults.

    ``subspace_rule`` (lasso only): ``support`` spans the coordinates of the
    support of ``x0`` plus ``d - s`` random directions; ``vector`` spans
    ``x0`` itself plus ``d - 1`` random directions.
    """

    family: str = "lasso_constrained"
    m: Optional[int] = None
    n: Optional[int] = None
    s: int = 8
    d: int = 40
    subspace_rule: str = "support"
    block_size: int = 8
    active_blocks: int = 4
    jumps_per_block: int = 1
    noise: float = 0.01
    mu: float = 0.2
    mu1: float = 0.3
    mu2: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        lasso = self.family == "lasso_constrained"
        if self.m is None:
            self.m = 100 if lasso else 128
        if self.n is None:
            self.n = 200 if lasso else 256
        if self.m <= 0 or self.n <= 0:
            raise InvalidInputError("dimensions must be positive")
        if self.noise < 0:
            raise InvalidInputError("noise must be nonnegative")
        if lasso:
            if self.subspace_rule not in SUBSPACE_RULES:
                raise InvalidInputError(f"subspace_rule must be one of {SUBSPACE_RULES}")
            if not 0 < self.s <= self.n:
                raise InvalidInputError("need 0 < s <= n")
            if not 0 < self.d <= self.n:
                raise InvalidInputError("need 0 < d <= n")
            if self.subspace_rule == "support" and self.d < self.s:
                raise InvalidInputError(f"d = {self.d} < s = {self.s}: V cannot contain x0")
            if self.mu <= 0:
                raise InvalidInputError("mu must be positive")
        else:
            if self.n % self.block_size:
                raise InvalidInputError("block_size must divide n")
            if not 0 < self.active_blocks <= self.n // self.block_size:
                raise InvalidInputError("active_blocks out of range")
            if not 0 <= self.jumps_per_block < self.block_size:
                raise InvalidInputError("jumps_per_block must be below block_size")
            if self.mu1 <= 0 or self.mu2 <= 0:
                raise InvalidInputError("mu1 and mu2 must be positive")


@dataclass
class ProblemInstance:
    spec: ProblemSpec
    k_matrix: np.ndarray
    f: np.ndarray
    x0: np.ndarray
    v: Optional[Subspace] = None

    @property
    def smooth(self):
        return SmoothQuadratic(self.k_matrix, self.f)

    def fdr_problem(self):
        return FDRProblem.build(self.k_matrix, self.f, L1Norm(self.spec.mu), self.v)

    def fb_problem(self):
        return FBProblem(self.smooth, L1Norm(self.spec.mu))

    def group_reg(self):
        return GroupL12.contiguous(self.spec.mu1, self.spec.n, self.spec.block_size)

    def tv_reg(self):
        return TV1D(self.spec.mu2, self.spec.n)

    def tos_problem(self):
        return TOSProblem(self.smooth, self.group_reg(), self.tv_reg())

    def gfb_problem(self):
        return GFBProblem(self.smooth, [self.group_reg(), self.tv_reg()])

    def problem(self, method):
        if method not in METHODS[self.spec.family]:
            raise InvalidInputError(
                f"method {method!r} does not apply to {self.spec.family} "
                f"(use one of {METHODS[self.spec.family]})"
            )
        return getattr(self, f"{method}_problem")()

    def same_as(self, other):
        return (self.spec == other.spec and np.array_equal(self.k_matrix, other.k_matrix)
                and np.array_equal(self.f, other.f))


def generate(spec: ProblemSpec) -> ProblemInstance:
    """Draw a seeded instance; identical specs give bit-identical data."""
    rng = np.random.default_rng(spec.seed)
    m, n = spec.m, spec.n
    k_matrix = rng.standard_normal((m, n)) / np.sqrt(m)
    x0 = np.zeros(n)
    if spec.family == "lasso_constrained":
        supp = np.sort(rng.choice(n, spec.s, replace=False))
        x0[supp] = rng.choice([-1.0, 1.0], spec.s)
    else:
        bs = spec.block_size
        blocks = np.sort(rng.choice(n // bs, spec.active_blocks, replace=False))
        for b in blocks:
            cuts = np.sort(rng.choice(np.arange(1, bs), spec.jumps_per_block, replace=False))
            edges = np.concatenate([[0], cuts, [bs]])
            # alternate signs so every cut is a genuine jump
            vals = rng.choice([-1.0, 1.0]) * (-1.0) ** np.arange(edges.size - 1)
            for lo, hi, val in zip(edges[:-1], edges[1:], vals):
                x0[b * bs + lo:b * bs + hi] = val
    f = k_matrix @ x0 + spec.noise * rng.standard_normal(m)
    v = None
    if spec.family == "lasso_constrained":
        if spec.subspace_rule == "support":
            base = np.eye(n)[:, supp]
            extra = rng.standard_normal((n, spec.d - spec.s))
        else:
            base = x0[:, None]
            extra = rng.standard_normal((n, spec.d - 1))
        v = Subspace.span(np.hstack([base, extra]), n)
    return ProblemInstance(spec, k_matrix, f, x0, v)


# ---------------------------------------------------------------- presets

PRESETS = ("stationary", "case1", "case2", "case3", "case4")


def make_schedule(preset, beta, lam=1.0) -> Schedule:
    """Step-size presets converging to ``beta``.

    ``case1``: ``(1 + 1/k^1.1) beta``, ``case2``: ``(1 + 1/k^2) beta``,
    ``case3``: ``(1 + 0.999^k) beta``, ``case4``: ``(1 + 0.5^k) beta``.
    The two power-law cases start at ``k = 2`` since ``k = 1`` gives ``2 beta``,
    which is outside the admissible open interval.
    """
    if preset == "stationary":
        return Schedule.constant(beta, lam)
    if preset == "case1":
        return Schedule.power_decay(beta, 1.1, lam, k_offset=1)
    if preset == "case2":
        return Schedule.power_decay(beta, 2.0, lam, k_offset=1)
    if preset == "case3":
        return Schedule.geometric(beta, 0.999, lam)
    if preset == "case4":
        return Schedule.geometric(beta, 0.5, lam)
    raise InvalidInputError(f"unknown preset {preset!r}; choose from {PRESETS}")


def step_modulus(instance: ProblemInstance, method):
    """``beta_V`` for FDR, ``beta`` otherwise."""
    if method == "fdr":
        return instance.fdr_problem().smooth.beta_v
    return lipschitz_moduli(instance.smooth, Subspace.whole(instance.spec.n))[0]


# ---------------------------------------------------------------- runs

ANCHOR_TOL = 1e-12

CSV_HEADER = ["k", "gamma_k", "lambda_k", "objective", "bregman", "best_bregman",
              "ergodic_bregman", "dist_z", "dist_x", "dist_u", "signature_size", "identified"]


@dataclass
class RunReport:
    method: str
    preset: str
    spec: ProblemSpec
    trajectory: Trajectory
    anchor: Anchor
    validation: ValidationReport
    bregman: Optional[BregmanSeries]
    identification: IdentificationReport
    margin: float
    objective: np.ndarray
    dist_z: np.ndarray
    dist_x: np.ndarray
    dist_u: np.ndarray
    signature_size: np.ndarray
    anchor_mode: str = "own"
    certificate: Optional[RateCertificate] = None
    certificate_error: Optional[str] = None
    certificate_exception: Optional[Exception] = field(default=None, repr=False)
    wall_clock: float = 0.0
    csv_path: Optional[str] = None
    plot_paths: list = field(default_factory=list)

    def summary(self):
        c = self.certificate
        return {
            "method": self.method,
            "preset": self.preset,
            "seed": self.spec.seed,
            "iterations": int(self.trajectory.k[-1]),
            "stop_reason": self.trajectory.stop_reason,
            "terminal_dist_z": float(self.dist_z[-1]),
            "k_identified": self.identification.k_identified,
            "margin": self.margin,
            "anchor_mode": self.anchor_mode,
            "certificate": c.as_dict() if c else None,
            "certificate_error": self.certificate_error,
            "schedule_ok": self.validation.ok,
            "wall_clock": self.wall_clock,
            "csv": self.csv_path,
            "plots": list(self.plot_paths),
        }


def _run_fn(instance, method, problem, schedule):
    if method == "fdr":
        return lambda o: fdr_run(problem, schedule, o)
    if method == "fb":
        return lambda o: fb_run(problem, schedule, o)
    if method == "gfb":
        return lambda o: gfb_run(problem, schedule.gamma, schedule.lam, o, schedule=schedule)
    return lambda o: tos_run(problem, schedule.gamma, schedule.lam, o, schedule=schedule)


def run_experiment(instance, method, preset="stationary", opts: RunOptions = RunOptions(),
                   lam=1.0, out_dir=None, plot=False, tol_rel=0.1, ref_factor=10,
                   anchor_mode="own") -> RunReport:
    """Run one method/preset on an instance and collect every diagnostic.

    The anchor comes from a ``ref_factor`` times longer run stopped at
    residual ``1e-14``: with ``anchor_mode="own"`` the run's own schedule
    (falling back to the constant limit step if that reference does not
    converge), with ``"stationary"`` the constant limit step.
    """
    if isinstance(instance, ProblemSpec):
        instance = generate(instance)
    t0 = time.perf_counter()
    problem = instance.problem(method)
    beta = step_modulus(instance, method)
    schedule = make_schedule(preset, beta, lam)
    if method == "tos" and not schedule.stationary:
        raise InvalidInputError("TOS supports the stationary preset only")
    validation = validate_schedule(schedule, beta, min(opts.max_iter, 100000))
    if not validation.ok:
        raise InvalidInputError(f"invalid schedule\n{validation}")
    run = _run_fn(instance, method, problem, schedule)
    traj = run(opts)
    gamma = schedule.gamma
    lam_lim = schedule.lambda_at(opts.max_iter)
    # The fixed-point set need not be a singleton, so each run is measured
    # against its own limit; the stationary operator is the fallback when
    # the schedule is too slow for the reference run to converge.
    used_anchor = anchor_mode
    if anchor_mode not in ("own", "stationary"):
        raise InvalidInputError("anchor_mode must be 'own' or 'stationary'")
    ref = None
    if anchor_mode == "own":
        ref = reference_run(run, opts, factor=ref_factor)
        if ref.terminal_residual > ANCHOR_TOL:
            ref, used_anchor = None, "stationary"
    if ref is None:
        stat = Schedule.constant(gamma, lam_lim)
        ref = reference_run(_run_fn(instance, method, problem, stat), opts, factor=ref_factor)

    if method == "tos":
        anchor = make_tos_anchor(ref, gamma, problem.reg_j)
        x_star = anchor.x_star
        g_j = (anchor.z_star - x_star) / gamma
        margin = min(problem.reg_r.nondegeneracy_margin(x_star, -g_j - problem.smooth.grad(x_star)),
                     problem.reg_j.nondegeneracy_margin(x_star, g_j))
        sig_r = [problem.reg_r.signature(u) for u in traj.u]
        sig_j = [problem.reg_j.signature(x) for x in traj.x]
        i_r = first_permanent_match(sig_r, problem.reg_r.signature(x_star))
        i_j = first_permanent_match(sig_j, problem.reg_j.signature(x_star))
        idx = None if i_r is None or i_j is None else max(i_r, i_j)
        ident = IdentificationReport(None if idx is None else int(traj.k[idx]), idx,
                                     (sig_r[-1], sig_j[-1]), margin)
        sizes = np.array([a.size + b.size for a, b in zip(sig_r, sig_j)])
        breg = None
        lin_fn = lambda: build_tos_linearization(anchor, problem, gamma, lam_lim)
        cert_traj, cert_anchor = traj, anchor
        u_ref = np.tile(x_star, 1)
    else:
        if method == "gfb":
            fdr = gfb_product_problem(problem)
            ptraj = product_trajectory(problem, traj)
            pref = product_trajectory(problem, ref)
        else:
            fdr = problem.as_fdr() if method == "fb" else problem
            ptraj, pref = traj, ref
        cert_anchor = make_anchor(pref, gamma, fdr.v)
        xs = cert_anchor.x_star
        target = fdr.reg.signature(xs)
        margin = fdr.reg.nondegeneracy_margin(xs, cert_anchor.v_star - fdr.smooth.grad(xs))
        ident = detect_identification(ptraj, fdr.reg, target, margin=margin)
        sizes = np.array([fdr.reg.signature(u).size for u in ptraj.u])
        breg = bregman_series(cert_anchor, fdr, ptraj)
        lin_fn = lambda: build_fdr_linearization(cert_anchor, fdr, gamma, lam_lim)
        cert_traj, anchor = ptraj, cert_anchor
        if method == "gfb":
            # report distances in the native (unscaled) coordinates
            anchor = Anchor(ref.final.z.copy(), ref.final.x.copy(), gamma, anchor.v_star)
        u_ref = anchor.x_star if method != "gfb" else np.tile(anchor.x_star, problem.m)

    certificate, cert_exc = None, None
    try:
        certificate = certify(lin_fn(), cert_anchor, cert_traj, ident, tol_rel)
    except FDRError as e:
        cert_exc = e

    report = RunReport(
        method=method, preset=preset, spec=instance.spec, trajectory=traj, anchor=anchor,
        validation=validation, bregman=breg, identification=ident, margin=float(margin),
        objective=problem.objective_rows(traj.x),
        dist_z=np.linalg.norm(traj.z - anchor.z_star, axis=1),
        dist_x=np.linalg.norm(traj.x - anchor.x_star, axis=1),
        dist_u=np.linalg.norm(traj.u - u_ref, axis=1),
        signature_size=sizes, anchor_mode=used_anchor, certificate=certificate,
        certificate_error=None if cert_exc is None else f"{type(cert_exc).__name__}: {cert_exc}",
        certificate_exception=cert_exc,
    )
    report.wall_clock = time.perf_counter() - t0
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        stem = f"{instance.spec.family}_{method}_{preset}_seed{instance.spec.seed}"
        report.csv_path = write_csv(report, os.path.join(out_dir, stem + ".csv"))
        if plot:
            report.plot_paths = plot_report(report, out_dir, stem)
        with open(os.path.join(out_dir, stem + ".json"), "w") as fh:
            json.dump(report.summary(), fh, indent=2, default=_json_default)
    return report


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o).__name__)


def _fmt(v):
    return format(float(v), ".17g")


def csv_rows(report: RunReport):
    tr = report.trajectory
    k_id = report.identification.k_identified
    nan = np.full(len(tr), np.nan)
    b = report.bregman
    d, best, erg = (b.d, b.best, b.ergodic) if b is not None else (nan, nan, nan)
    for i in range(len(tr)):
        yield [
            str(int(tr.k[i])), _fmt(tr.gamma[i]), _fmt(tr.lam[i]), _fmt(report.objective[i]),
            _fmt(d[i]), _fmt(best[i]), _fmt(erg[i]), _fmt(report.dist_z[i]),
            _fmt(report.dist_x[i]), _fmt(report.dist_u[i]), str(int(report.signature_size[i])),
            "1" if k_id is not None and tr.k[i] >= k_id else "0",
        ]


def write_csv(report: RunReport, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(csv_rows(report))
    return path


def read_csv(path):
    """Load an emitted CSV into a dict of numpy columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_HEADER:
        raise InvalidInputError(f"{path}: unexpected header")
    cols = np.array(rows[1:], dtype=float).T if len(rows) > 1 else np.zeros((len(CSV_HEADER), 0))
    return dict(zip(CSV_HEADER, cols))


# ---------------------------------------------------------------- plots


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "fdrsplit"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_report(report: RunReport, out_dir, stem):
    """Log-log Bregman plot and semi-log distance plot with the predicted rate line."""
    plt = _pyplot()
    tr = report.trajectory
    paths = []
    if report.bregman is not None:
        b = report.bregman
        k1 = tr.k + 1
        fig, ax = plt.subplots(figsize=(5, 4))
        for y, lab in ((b.best, "best D(u_i)"), (b.ergodic, "D(ergodic mean)")):
            ok = y > 0
            ax.loglog(k1[ok], y[ok], label=lab)
        ax.loglog(k1, b.best[b.best > 0][0] / k1 if np.any(b.best > 0) else 1 / k1, "k--", label="O(1/k)")
        ax.set_xlabel("k + 1")
        ax.set_ylabel("Bregman divergence")
        ax.legend()
        fig.tight_layout()
        p = os.path.join(out_dir, stem + "_bregman.svg")
        _save(fig, p)
        plt.close(fig)
        paths.append(p)
    fig, ax = plt.subplots(figsize=(5, 4))
    ok = report.dist_z > 0
    ax.semilogy(tr.k[ok], report.dist_z[ok], label="||z_k - z*||")
    c = report.certificate
    k_id = report.identification.k_identified
    if c is not None and k_id is not None:
        i = int(np.searchsorted(tr.k, k_id))
        ks = tr.k[i:]
        line = report.dist_z[i] * c.predicted_rho ** (ks - k_id)
        keep = line > 1e-17
        ax.semilogy(ks[keep], line[keep], "r--", label=f"rho = {c.predicted_rho:.4f}")
    ax.set_xlabel("k")
    ax.set_ylabel("distance")
    ax.legend()
    fig.tight_layout()
    p = os.path.join(out_dir, stem + "_distance.svg")
    _save(fig, p)
    plt.close(fig)
    paths.append(p)
    return paths


# ---------------------------------------------------------------- comparison


@dataclass
class ComparisonTable:
    labels: list
    k: np.ndarray
    dist_z: np.ndarray
    summary: list

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k"] + [f"dist_z[{lab}]" for lab in self.labels])
            for i, k in enumerate(self.k):
                w.writerow([str(int(k))] + [_fmt(v) for v in self.dist_z[:, i]])
        return path

    def plot(self, path):
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(5, 4))
        for lab, row in zip(self.labels, self.dist_z):
            ok = row > 0
            ax.semilogy(self.k[ok], row[ok], label=lab)
        ax.set_xlabel("k")
        ax.set_ylabel("||z_k - z*||")
        ax.legend()
        fig.tight_layout()
        _save(fig, path)
        plt.close(fig)
        return path


def compare_runs(reports, labels=None) -> ComparisonTable:
    """Align ``||z_k - z*||`` of several runs on the same instance.

    Each run is measured against its own anchor.
    """
    if len(reports) < 2:
        raise InvalidInputError("need at least two reports to compare")
    spec0 = reports[0].spec
    for r in reports[1:]:
        if asdict(r.spec) != asdict(spec0):
            raise InvalidInputError("reports come from different instances")
    labels = labels or [f"{r.method}:{r.preset}" for r in reports]
    ks = reports[0].trajectory.k
    for r in reports[1:]:
        ks = np.intersect1d(ks, r.trajectory.k)
    rows = []
    for r in reports:
        idx = np.searchsorted(r.trajectory.k, ks)
        rows.append(r.dist_z[idx])
    summary = []
    for lab, r in zip(labels, reports):
        c = r.certificate
        summary.append({
            "label": lab,
            "terminal_dist_z": float(r.dist_z[-1]),
            "terminal_dist_x": float(r.dist_x[-1]),
            "k_identified": r.identification.k_identified,
            "observed_factor": c.observed_factor if c else None,
            "predicted_rho": c.predicted_rho if c else None,
        })
    return ComparisonTable(list(labels), ks, np.array(rows), summary)


def spec_from_dict(d):
    """Build a :class:`ProblemSpec` from string values (config files)."""
    types = {f.name: f.type for f in fields(ProblemSpec)}
    kw = {}
    for key, val in d.items():
        if key not in types:
            raise InvalidInputError(f"unknown problem key {key!r}")
        t = types[key]
        try:
            if "int" in t:
                kw[key] = int(val)
            elif "float" in t:
                kw[key] = float(val)
            else:
                kw[key] = str(val)
        except ValueError as e:
            raise InvalidInputError(f"bad value for {key}: {val!r}") from e
    return ProblemSpec(**kw)


SPEC_KEYS = tuple(f.name for f in fields(ProblemSpec))
