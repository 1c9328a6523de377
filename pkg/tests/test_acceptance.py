"""Acceptance criteria, one test each.

Every test prints a single PASS/FAIL line (outside pytest's capture) before
asserting, so ``pytest -v`` output doubles as the acceptance report.
Shared long runs are cached and reduced to small summaries to keep memory flat.
"""
import math
from functools import lru_cache

import numpy as np
import pytest

from oracles import CASES, brute_prox, brute_subspace_prox
from fdrsplit.diagnostics import Anchor, audit_lemma34, signatures
from fdrsplit.experiments import ProblemSpec, generate, make_schedule, run_experiment, step_modulus
from fdrsplit.linalg import Subspace
from fdrsplit.rates import build_fdr_linearization
from fdrsplit.regularizers import GroupL12, SubspaceIndicator
from fdrsplit.solvers import (
    RunOptions,
    apply_fixed_point_fdr,
    apply_fixed_point_tos,
    fdr_run,
    gfb_product_problem,
    gfb_run,
    gfb_to_product,
)

LONG = 5000


def report(capsys, num, name, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {num:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


@lru_cache(maxsize=None)
def lasso_summary(seed, preset="stationary", method="fdr", rule="support"):
    """Run a lasso instance for ``LONG`` iterations and keep what the criteria need."""
    rep = run_experiment(ProblemSpec(seed=seed, subspace_rule=rule), method, preset, RunOptions(max_iter=LONG))
    out = {
        "dist_z": rep.dist_z[-1],
        "z_norm": float(np.linalg.norm(rep.anchor.z_star)),
        "k_identified": rep.identification.k_identified,
        "margin": rep.margin,
        "certificate": rep.certificate,
        "objective": rep.objective,
        "x_star": rep.anchor.x_star,
        "z_star": rep.anchor.z_star,
        "v_star": rep.anchor.v_star,
        "gamma": rep.anchor.gamma,
    }
    # a run stopped at zero residual sits on an exact fixed point: later iterates repeat it
    out["stopped_at"] = int(rep.trajectory.k[-1])
    if rep.bregman is not None:
        b = rep.bregman
        out["scaled_best"] = (b.scaled_best[b.at(50)], (LONG + 1) * b.best[-1])
        out["min_d"] = float(b.d.min())
    if method == "fdr" and rule == "support" and seed < 10 and preset in ("stationary", "case4"):
        inst = generate(ProblemSpec(seed=seed))
        problem = inst.fdr_problem()
        sched = make_schedule(preset, step_modulus(inst, "fdr"))
        out["audit"] = audit_lemma34(rep.anchor, problem, rep.trajectory, sched).max_violation
    if rep.identification.identified:
        sigs = signatures(rep.trajectory, rep_reg(rep), "u")
        out["stable"] = all(s == sigs[-1] for s in sigs[rep.identification.record_index:])
    return out


def rep_reg(rep):
    return generate(rep.spec).fdr_problem().reg


@lru_cache(maxsize=None)
def group_tv_pair(seed):
    inst = generate(ProblemSpec(family="group_tv", seed=seed))
    opts = RunOptions(max_iter=1000)
    tos = run_experiment(inst, "tos", opts=opts, tol_rel=0.15)
    gfb = run_experiment(inst, "gfb", opts=opts, tol_rel=0.15)
    i = tos.trajectory.at(200)
    return tos.certificate, tos.certificate_error, tos.dist_x[i], gfb.dist_x[gfb.trajectory.at(200)]


# ---------------------------------------------------------------- 1


def test_c01_prox_oracle(capsys):
    r = np.random.default_rng(2024)
    worst, kinds = 0.0, []
    for kind, reg, params, n in CASES:
        for _ in range(25):
            x = r.uniform(-2, 2, n)
            g = r.uniform(0.3, 1.5)
            worst = max(worst, np.abs(reg.prox(g, x) - brute_prox(kind, params, g, x)).max())
        kinds.append(kind)
    basis = r.standard_normal((3, 2))
    sub = SubspaceIndicator(Subspace.span(basis, 3))
    for _ in range(25):
        x = r.uniform(-2, 2, 3)
        worst = max(worst, np.abs(sub.prox(1.0, x) - brute_subspace_prox(basis, x)).max())
    kinds.append("SubspaceIndicator")
    report(capsys, 1, "prox oracle equivalence", worst <= 1e-4,
           f"max |prox - brute force| = {worst:.2e} over {len(kinds)} kinds x 25 inputs (tol 1e-4)")


# ---------------------------------------------------------------- 2


def test_c02_averagedness(capsys):
    worst = -np.inf
    for seed in range(5):
        r = np.random.default_rng(seed)
        lasso = generate(ProblemSpec(seed=seed))
        fdr = lasso.fdr_problem()
        tv = generate(ProblemSpec(family="group_tv", seed=seed))
        tos = tv.tos_problem()
        beta_v, beta = fdr.smooth.beta_v, step_modulus(tv, "tos")
        for _ in range(100):
            a, b = r.standard_normal((2, fdr.dim)) * 2
            g = r.uniform(0.05, 1.95) * beta_v
            d = np.linalg.norm(apply_fixed_point_fdr(g, fdr, a) - apply_fixed_point_fdr(g, fdr, b))
            worst = max(worst, d - np.linalg.norm(a - b))
            a, b = r.standard_normal((2, tos.dim)) * 2
            g = r.uniform(0.05, 1.95) * beta
            d = np.linalg.norm(apply_fixed_point_tos(g, tos, a) - apply_fixed_point_tos(g, tos, b))
            worst = max(worst, d - np.linalg.norm(a - b))
    report(capsys, 2, "operator averagedness", worst <= 1e-9,
           f"max (||Ta - Tb|| - ||a - b||) = {worst:.2e} over 5 seeds x 100 pairs x 2 operators (tol 1e-9)")


# ---------------------------------------------------------------- 3


def test_c03_bregman_rate(capsys):
    bad, min_d = [], np.inf
    for seed in range(10):
        s = lasso_summary(seed)
        at50, at_end = s["scaled_best"]
        min_d = min(min_d, s["min_d"])
        if not (at_end <= at50 and s["min_d"] >= -1e-9):
            bad.append(seed)
    report(capsys, 3, "Bregman best-iterate rate", not bad,
           f"(k+1) min D at k={LONG} <= value at k=50 on seeds 0-9, failures {bad}; min D = {min_d:.2e}")


# ---------------------------------------------------------------- 4


def test_c04_inequality_audit(capsys):
    worst = max(lasso_summary(seed, preset)["audit"]
                for seed in range(10) for preset in ("stationary", "case4"))
    report(capsys, 4, "energy inequality audit", worst <= 1e-8,
           f"max violation = {worst:.2e} over seeds 0-9, stationary and case4 (tol 1e-8)")


# ---------------------------------------------------------------- 5


def test_c05_fb_objective_rate(capsys):
    worst_inc, worst_ratio = -np.inf, 0.0
    for seed in range(10):
        s = lasso_summary(seed, method="fb")
        inst = generate(ProblemSpec(seed=seed))
        gap = s["objective"] - inst.fb_problem().objective(s["x_star"])
        worst_inc = max(worst_inc, float(np.diff(gap[1:]).max()))
        scaled = (np.arange(gap.size) + 1) * gap
        worst_ratio = max(worst_ratio, (LONG + 1) * gap[-1] / scaled[1:101].max())
    ok = worst_inc <= 1e-10 and worst_ratio <= 0.01
    report(capsys, 5, "FB objective rate", ok,
           f"max gap increase = {worst_inc:.2e} (tol 1e-10), "
           f"max (k+1)gap ratio k={LONG} vs k<=100 = {worst_ratio:.2e} (tol 1e-2), seeds 0-9")


# ---------------------------------------------------------------- 6


def test_c06_finite_identification(capsys):
    eligible, early, unstable = [], [], []
    for seed in range(20):
        s = lasso_summary(seed)
        if not s["margin"] > 1e-6:
            continue
        eligible.append(seed)
        if s["k_identified"] is None or not s["stable"]:
            unstable.append(seed)
        elif s["k_identified"] < 2000:
            early.append(seed)
    need = math.ceil(18 * len(eligible) / 20)
    ok = not unstable and len(early) >= need
    report(capsys, 6, "finite identification", ok,
           f"{len(early)}/{len(eligible)} eligible seeds identify before k=2000 (need {need}); "
           f"not identified or unstable: {unstable}")


# ---------------------------------------------------------------- 7


def test_c07_exact_local_rate(capsys):
    rows, ok = [], True
    for seed in range(5):
        c = lasso_summary(seed)["certificate"]
        good = c is not None and c.theorem_case == "polyhedral-quadratic-exact" and c.rel_error <= 0.10
        ok &= good
        rows.append(f"{seed}:{c.observed_factor:.5f}/{c.predicted_rho:.5f}" if c else f"{seed}:none")
    report(capsys, 7, "exact local linear rate", ok,
           "observed/predicted per seed " + " ".join(rows) + " (tol 10%)")


# ---------------------------------------------------------------- 8


def test_c08_schedule_ordering(capsys):
    # On "support" instances every schedule reaches rounding level by k = 5000, so
    # the ordering is checked up to a noise floor; "vector" instances keep the
    # slow schedules well above it and exercise the ordering itself.
    def ge(a, b, floor):
        return a >= b or (a <= floor and b <= floor)

    def close(a, b, floor):
        return (a <= floor and b <= floor) or (min(a, b) > 0 and max(a, b) <= 2 * min(a, b))

    presets = ("case1", "case3", "case4", "stationary")
    bad, rows = [], []
    for rule in ("support", "vector"):
        for seed in range(5):
            d = {p: lasso_summary(seed, p, rule=rule)["dist_z"] for p in presets}
            floor = 1e-12 * max(1.0, lasso_summary(seed, rule=rule)["z_norm"])
            if not (ge(d["case1"], d["case3"], floor) and ge(d["case3"], d["case4"], floor)
                    and close(d["case4"], d["stationary"], floor)):
                bad.append((rule, seed))
            rows.append(f"{rule[0]}{seed}:" + "/".join(f"{d[p]:.1e}" for p in presets))
    report(capsys, 8, "schedule ordering", not bad,
           "case1>=case3>=case4~stationary at k=5000 (noise floor 1e-12 max(1,||z*||)), "
           "support (s) and vector (v) subspaces: " + " ".join(rows) + f"; failures {bad}")


# ---------------------------------------------------------------- 9


def test_c09_tos_rate(capsys):
    rows, ok = [], True
    for seed in range(5):
        cert, err, e_tos, e_gfb = group_tv_pair(seed)
        rate_ok = cert is not None and cert.rel_error <= 0.15
        twin_ok = max(e_tos, e_gfb) <= 2 * min(e_tos, e_gfb)
        ok &= rate_ok and twin_ok
        rate = f"{cert.observed_factor:.4f}/{cert.predicted_rho:.4f}" if cert else f"none ({err})"
        rows.append(f"{seed}:{rate},err {e_tos:.1e}/{e_gfb:.1e}")
    report(capsys, 9, "TOS local rate and GFB agreement", ok,
           "observed/predicted (tol 15%), ||x_200 - x*|| tos/gfb (within 2x): " + " ".join(rows))


# ---------------------------------------------------------------- 10


def test_c10_gfb_product_equivalence(capsys):
    inst = generate(ProblemSpec(family="group_tv", seed=0))
    gfb = inst.gfb_problem()
    prod = gfb_product_problem(gfb)
    g = prod.smooth.beta_v
    z0 = np.random.default_rng(0).standard_normal(2 * inst.spec.n)
    a = gfb_run(gfb, g, 1.0, RunOptions(max_iter=500, z0=z0))
    b = fdr_run(prod, make_schedule("stationary", g), RunOptions(max_iter=500, z0=gfb_to_product(gfb, z0)))
    err = max(np.abs(gfb_to_product(gfb, za) - zb).max() for za, zb in zip(a.z, b.z))
    report(capsys, 10, "GFB equals FDR on the product space", err <= 1e-10,
           f"max iterate difference over 500 iterations = {err:.2e} (tol 1e-10)")


# ---------------------------------------------------------------- 11


def test_c11_linearization_fidelity(capsys):
    worst, rad = 0.0, 1e-5
    for seed in range(5):
        s = lasso_summary(seed)
        problem = generate(ProblemSpec(seed=seed)).fdr_problem()
        anchor = Anchor(s["z_star"], s["x_star"], s["gamma"], s["v_star"])
        lin = build_fdr_linearization(anchor, problem, s["gamma"])
        r = np.random.default_rng(seed)
        for _ in range(20):
            e = r.standard_normal(problem.dim)
            e *= rad / np.linalg.norm(e)
            step = apply_fixed_point_fdr(s["gamma"], problem, anchor.z_star + e) - anchor.z_star
            worst = max(worst, np.linalg.norm(step - lin.M_gamma @ e) / rad)
    report(capsys, 11, "linearization fidelity", worst <= 1e-3,
           f"max ||F(z*+e) - z* - M e|| / ||e|| = {worst:.2e} at radius 1e-5, seeds 0-4 x 20 (tol 1e-3)")


# ---------------------------------------------------------------- 12


def test_c12_group_hessian(capsys):
    r = np.random.default_rng(12)
    worst, t = 0.0, 1e-5
    for _ in range(20):
        reg = GroupL12.contiguous(r.uniform(0.1, 2.0), 24, 4)
        x = r.standard_normal(24)
        x[r.choice(24, 8, replace=False)] = 0.0
        for b in r.choice(6, 2, replace=False):
            x[4 * b:4 * b + 4] = 0.0
        sig = reg.signature(x)
        tp = reg.tangent_projector(sig)
        hess = reg.riemannian_hessian(x, sig)
        idx = np.nonzero(np.diag(tp) > 0.5)[0]

        def grad(y):
            # gradient of the smooth representative: the sum of norms over active blocks
            out = np.zeros_like(y)
            for b in sig.pattern:
                sl = slice(4 * b, 4 * b + 4)
                out[sl] = reg.mu * y[sl] / np.linalg.norm(y[sl])
            return out

        for _ in range(5):
            h = np.zeros(24)
            h[idx] = r.standard_normal(idx.size)
            fd = tp @ (grad(x + t * h) - grad(x - t * h)) / (2 * t)
            worst = max(worst, np.linalg.norm(hess @ h - fd) / np.linalg.norm(fd))
    report(capsys, 12, "group Riemannian Hessian", worst <= 1e-5,
           f"max relative error vs central differences = {worst:.2e} (tol 1e-5)")


@pytest.fixture(autouse=True, scope="module")
def _clear_cache():
    yield
    lasso_summary.cache_clear()
    group_tv_pair.cache_clear()
