"""Command-line front end: simulate, probe, reduce, plan."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .attacks import AttackTrace, reduce_gba_to_bba
from .bench import ExperimentConfig, run_experiment
from .filters import (
    bucket_counts,
    build_transform,
    default_tolerance,
    estimate_features,
    probe_side,
)
from .mechanism import Budget, BucketGrid
from .protocol import dap_plan


def _parse_dataset(text: str) -> dict:
    kind, _, rest = text.partition(":")
    if kind == "beta":
        a, b, n = rest.split(",")
        return {"type": "beta", "a": float(a), "b": float(b), "n": int(n)}
    if kind == "csv":
        parts = rest.split(":")
        spec = {"type": "csv", "path": parts[0]}
        if len(parts) > 1:
            spec["column"] = parts[1]
        if len(parts) > 3:
            spec["clip"] = [float(parts[2]), float(parts[3])]
        return spec
    raise ValueError(f"unknown dataset spec {text!r} (use beta:a,b,n or csv:path[:column])")


def _cmd_simulate(args) -> int:
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        if args.out:
            cfg.out = args.out
    else:
        attack = {"kind": args.dist, "lo": args.range.split(":")[0], "hi": args.range.split(":")[1]}
        cfg = ExperimentConfig(
            dataset=_parse_dataset(args.dataset),
            eps_list=[float(e) for e in args.eps.split(",")],
            eps0=args.eps0,
            gamma=args.gamma,
            attack=attack if args.gamma > 0 else {"kind": "none"},
            schemes=args.schemes.split(","),
            trials=args.trials,
            seed=args.seed,
            out=args.out,
            workers=args.workers,
        )
    result = run_experiment(cfg)  # writes the outputs when cfg.out is set
    if cfg.out:
        from pathlib import Path

        csv_path = Path(cfg.out)
        print(f"wrote {csv_path} and {csv_path.with_suffix('.json')}")
    for eps in cfg.eps_list:
        for scheme in cfg.schemes:
            print(f"mse scheme={scheme} eps={eps:g}: {result.cell_mse(scheme, eps):.6g}")
    return 0


def _cmd_probe(args) -> int:
    # Reports are already perturbed values; read them raw, no normalization.
    import csv as _csv

    with open(args.reports, newline="") as fh:
        rows = list(_csv.reader(fh))
    idx = int(args.column) if str(args.column).lstrip("-").isdigit() else rows[0].index(args.column)
    start = 0 if str(args.column).lstrip("-").isdigit() else 1
    reports = np.array([float(r[idx]) for r in rows[start:] if r])

    budget = Budget(args.eps)
    grid = BucketGrid.for_reports(reports.size, budget)
    counts = bucket_counts(reports, grid)
    tau = default_tolerance(budget)
    probe = probe_side(
        build_transform(budget, grid, "left"),
        build_transform(budget, grid, "right"),
        counts,
        tau=tau,
    )
    features = estimate_features(probe.winning_pair, probe.side, counts)
    print(
        json.dumps(
            {
                "side": features.side,
                "gamma_hat": features.gamma_hat,
                "m_hat": features.m_hat,
                "var_left": probe.var_left,
                "var_right": probe.var_right,
                "n_reports": counts.n_reports,
            },
            indent=2,
        )
    )
    return 0


def _cmd_reduce(args) -> int:
    if args.values_file:
        values = np.loadtxt(args.values_file, delimiter=",").ravel()
    else:
        values = np.array([float(v) for v in args.values.split(",")])
    trace = AttackTrace(values=values, reference_mean=args.ref)
    reduced = reduce_gba_to_bba(trace, args.ref)
    print(
        json.dumps(
            {
                "input_count": int(values.size),
                "output_count": int(reduced.values.size),
                "deviation_sum": trace.deviation_sum,
                "reduced_deviation_sum": reduced.deviation_sum,
                "reduced_values": reduced.values.tolist(),
            },
            indent=2,
        )
    )
    return 0


def _cmd_plan(args) -> int:
    rng = np.random.default_rng(args.seed)
    plan = dap_plan(args.n, args.eps, args.eps0, rng)
    print(f"h={plan.h}")
    for t in range(plan.h):
        size = int(np.sum(plan.assignment == t))
        print(
            f"group {t}: eps={plan.budgets[t]:g} users={size} "
            f"reports_per_user={plan.reports_per_user[t]} "
            f"expected_reports={plan.expected_reports(t)}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dapmean", description="LDP mean estimation under poisoning")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a full defense-vs-attack experiment")
    sim.add_argument("--config", help="JSON config file (overrides the flags)")
    sim.add_argument("--dataset", default="beta:2,5,100000")
    sim.add_argument("--eps", default="1.0", help="comma-separated budget list")
    sim.add_argument("--eps0", type=float, default=1.0 / 16.0)
    sim.add_argument("--gamma", type=float, default=0.25)
    sim.add_argument("--range", default="0.75*C:C", help="poison range lo:hi (exprs in C, O)")
    sim.add_argument("--dist", default="uniform", choices=["uniform", "gaussian", "point", "input", "evasive"])
    sim.add_argument("--schemes", default="ostrich,trimming,dap_emf_star")
    sim.add_argument("--trials", type=int, default=20)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--out", help="output CSV path (JSON summary written alongside)")
    sim.set_defaults(func=_cmd_simulate)

    probe = sub.add_parser("probe", help="probe attacker features from a CSV of reports")
    probe.add_argument("--reports", required=True)
    probe.add_argument("--column", default="0")
    probe.add_argument("--eps", type=float, required=True)
    probe.set_defaults(func=_cmd_probe)

    red = sub.add_parser("reduce", help="merge a two-sided trace into a one-sided one")
    red.add_argument("--values", help="comma-separated values")
    red.add_argument("--values-file", help="file with one value per line")
    red.add_argument("--ref", type=float, default=0.0)
    red.set_defaults(func=_cmd_reduce)

    plan = sub.add_parser("plan", help="print the group plan for given budgets")
    plan.add_argument("--eps", type=float, required=True)
    plan.add_argument("--eps0", type=float, required=True)
    plan.add_argument("--n", type=int, required=True)
    plan.add_argument("--seed", type=int, default=0)
    plan.set_defaults(func=_cmd_plan)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
