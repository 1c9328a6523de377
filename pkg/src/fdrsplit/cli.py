"""Command-line interface.

Subcommands::

    generate   draw an instance and save it (npz) with its configuration
    run        run one method/preset, write CSV, JSON summary and plots
    rate       run and print the local-rate certificate
    compare    run several presets/methods on one instance and tabulate
    audit      audit the energy inequality along an unrelaxed FDR run

Configuration files are flat ``key = value`` text; ``#`` starts a comment.
Problem keys are the fields of :class:`fdrsplit.experiments.ProblemSpec`;
run keys are listed in ``RUN_KEYS``. Command-line flags override the file.

Exit codes: 0 success, 2 invalid input, 3 numerical failure,
4 insufficient data.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .diagnostics import audit_lemma34, make_anchor
from .errors import FDRError, InvalidInputError
from .experiments import (
    METHODS,
    PRESETS,
    SPEC_KEYS,
    compare_runs,
    generate,
    make_schedule,
    run_experiment,
    spec_from_dict,
    step_modulus,
)
from .functions import lipschitz_moduli
from .linalg import Subspace
from .solvers import RunOptions, fdr_run, fb_run, reference_run

RUN_KEYS = {
    "method": str,
    "preset": str,
    "max_iter": int,
    "tol": float,
    "stride": int,
    "lam": float,
    "tol_rel": float,
    "anchor_mode": str,
    "plot": lambda v: str(v).strip().lower() in ("1", "true", "yes", "on"),
}


def read_config(path):
    """Parse a ``key = value`` file into a dict of strings."""
    out = {}
    try:
        fh = open(path)
    except OSError as e:
        raise InvalidInputError(f"cannot read config {path}: {e.strerror}") from e
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInputError(f"{path}:{lineno}: expected key = value")
            key, val = (t.strip() for t in line.split("=", 1))
            if key not in SPEC_KEYS and key not in RUN_KEYS:
                raise InvalidInputError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = val
    return out


def _settings(args):
    cfg = read_config(args.config) if args.config else {}
    for flag, key in (("seed", "seed"), ("preset", "preset"), ("method", "method"),
                      ("max_iter", "max_iter"), ("tol", "tol"), ("stride", "stride")):
        val = getattr(args, flag, None)
        if val is not None:
            cfg[key] = str(val)
    spec = spec_from_dict({k: v for k, v in cfg.items() if k in SPEC_KEYS})
    run = {}
    for key, conv in RUN_KEYS.items():
        if key in cfg:
            try:
                run[key] = conv(cfg[key])
            except ValueError as e:
                raise InvalidInputError(f"bad value for {key}: {cfg[key]!r}") from e
    run.setdefault("method", METHODS[spec.family][0])
    run.setdefault("preset", "stationary")
    run.setdefault("max_iter", 1000)
    run.setdefault("tol", 0.0)
    run.setdefault("stride", 1)
    return spec, run


def _opts(run):
    return RunOptions(max_iter=run["max_iter"], residual_tol=run["tol"],
                      record_stride=run["stride"])


def _split(val):
    return [v.strip() for v in val.split(",") if v.strip()]


def _emit(obj):
    print(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def cmd_generate(args):
    spec, _ = _settings(args)
    inst = generate(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    stem = os.path.join(args.out_dir, f"{spec.family}_seed{spec.seed}")
    arrays = {"K": inst.k_matrix, "f": inst.f, "x0": inst.x0}
    if inst.v is not None:
        arrays["V_basis"] = inst.v.basis
    np.savez(stem + ".npz", **arrays)
    with open(stem + ".cfg", "w") as fh:
        for key in SPEC_KEYS:
            fh.write(f"{key} = {getattr(spec, key)}\n")
    beta = lipschitz_moduli(inst.smooth, Subspace.whole(spec.n))[0]
    info = {"instance": stem + ".npz", "config": stem + ".cfg", "beta": beta}
    if inst.v is not None:
        info["beta_v"] = inst.fdr_problem().smooth.beta_v
        info["dim_v"] = inst.v.dim
    _emit(info)
    return 0


def _run(args, plot_default):
    spec, run = _settings(args)
    return run_experiment(
        spec, run["method"], run["preset"], _opts(run), lam=run.get("lam", 1.0),
        out_dir=args.out_dir, plot=run.get("plot", plot_default),
        tol_rel=run.get("tol_rel", 0.1), anchor_mode=run.get("anchor_mode", "own"),
    )


def cmd_run(args):
    _emit(_run(args, plot_default=True).summary())
    return 0


def cmd_rate(args):
    rep = _run(args, plot_default=False)
    if rep.certificate is None:
        raise rep.certificate_exception
    _emit(rep.certificate.as_dict())
    return 0


def cmd_compare(args):
    spec, run = _settings(args)
    methods = _split(args.method or run["method"])
    presets = _split(args.preset or run["preset"])
    if len(methods) * len(presets) < 2:
        raise InvalidInputError("compare needs at least two method/preset combinations")
    inst = generate(spec)
    reports, labels = [], []
    for m in methods:
        for p in presets:
            reports.append(run_experiment(inst, m, p, _opts(run), lam=run.get("lam", 1.0),
                                          out_dir=args.out_dir, plot=False,
                                          tol_rel=run.get("tol_rel", 0.1),
                                          anchor_mode=run.get("anchor_mode", "own")))
            labels.append(f"{m}:{p}")
    table = compare_runs(reports, labels)
    os.makedirs(args.out_dir, exist_ok=True)
    stem = os.path.join(args.out_dir, f"compare_{spec.family}_seed{spec.seed}")
    table.write_csv(stem + ".csv")
    table.plot(stem + ".svg")
    _emit({"csv": stem + ".csv", "plot": stem + ".svg", "runs": table.summary})
    return 0


def cmd_audit(args):
    spec, run = _settings(args)
    if spec.family != "lasso_constrained":
        raise InvalidInputError("audit applies to the lasso_constrained family")
    if run.get("lam", 1.0) != 1.0:
        raise InvalidInputError("the audit requires lambda = 1")
    if run["stride"] != 1:
        raise InvalidInputError("the audit requires stride = 1")
    inst = generate(spec)
    method = run["method"]
    problem = inst.problem(method)
    schedule = make_schedule(run["preset"], step_modulus(inst, method))
    runner = fdr_run if method == "fdr" else fb_run
    opts = _opts(run)
    traj = runner(problem, schedule, opts)
    ref = reference_run(lambda o: runner(problem, schedule, o), opts)
    fdr = problem if method == "fdr" else problem.as_fdr()
    anchor = make_anchor(ref, schedule.gamma, fdr.v)
    rep = audit_lemma34(anchor, fdr, traj, schedule)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, f"audit_{method}_{run['preset']}_seed{spec.seed}.csv")
    cols = ("k", "lhs", "rhs", "slack", "xi_const", "xi_step", "zeta_limit", "zeta_lower")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*(getattr(rep, c) for c in cols)):
            w.writerow([str(int(row[0]))] + [format(float(v), ".17g") for v in row[1:]])
    _emit({"csv": path, "steps": int(rep.slack.size), "max_violation": rep.max_violation,
           "min_slack": float(rep.slack.min()) if rep.slack.size else 0.0})
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="fdrsplit", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--out-dir", default="out", help="output directory (default: out)")
        sp.add_argument("--seed", type=int)
        return sp

    def running(sp, multi=False):
        suffix = " (comma-separated list)" if multi else ""
        sp.add_argument("--method", help=f"fdr | fb | tos | gfb{suffix}")
        sp.add_argument("--preset", help=f"one of {', '.join(PRESETS)}{suffix}")
        sp.add_argument("--max-iter", type=int)
        sp.add_argument("--tol", type=float, help="stop when ||z_k - z_{k-1}|| <= tol")
        sp.add_argument("--stride", type=int, help="record every stride-th iterate")
        return sp

    common(sub.add_parser("generate", help="draw and save an instance"))
    running(common(sub.add_parser("run", help="run one method/preset")))
    running(common(sub.add_parser("rate", help="print the local-rate certificate")))
    running(common(sub.add_parser("compare", help="compare presets/methods")), multi=True)
    running(common(sub.add_parser("audit", help="audit the energy inequality")))
    return p


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "rate": cmd_rate,
            "compare": cmd_compare, "audit": cmd_audit}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FDRError as e:
        print(f"fdrsplit: error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
