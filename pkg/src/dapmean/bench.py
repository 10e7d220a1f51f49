"""Dataset synthesis/ingestion and the seeded Monte-Carlo experiment runner.

A run compares defense schemes on identical per-trial inputs (same attacker
identities, same honest values) and reports per-trial estimates plus the
MSE against the honest users' true mean.  All randomness derives from one
master seed via counter-based spawn keys, so results are byte-reproducible
even when trials execute in parallel.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import attacks
from .attacks import AttackStrategy
from .mechanism import Budget, Dataset, normalize_dataset, pm_perturb
from .protocol import ConfigurationError, baseline_run, ostrich, run_dap, trimming

SCHEMES = ("ostrich", "trimming", "baseline", "dap_emf", "dap_emf_star", "dap_cemf_star")


def gen_beta(a: float, b: float, n: int, seed) -> Dataset:
    """n Beta(a, b) samples, min-max normalized onto [-1, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("beta shape parameters must be positive")
    rng = np.random.default_rng(seed)
    return normalize_dataset(rng.beta(a, b, size=n))


def load_csv(path, column, clip: tuple[float, float] | None = None) -> Dataset:
    """Load one numeric column from a CSV file and min-max normalize it.

    ``column`` is a header name or a zero-based index.  Rows whose value does
    not parse are skipped and counted; with ``clip`` set, values outside the
    interval are dropped before normalization.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty file")

    idx: int
    start = 0
    if isinstance(column, int) or (isinstance(column, str) and column.lstrip("-").isdigit()):
        idx = int(column)
        # A non-numeric first row is a header, not data.
        try:
            float(rows[0][idx])
        except (ValueError, IndexError):
            start = 1
    else:
        header = rows[0]
        if column not in header:
            raise KeyError(f"{path}: no column named {column!r}")
        idx = header.index(column)
        start = 1

    values, bad = [], 0
    for row in rows[start:]:
        try:
            values.append(float(row[idx]))
        except (ValueError, IndexError):
            bad += 1
    if bad:
        warnings.warn(f"{path}: skipped {bad} unparsable rows", stacklevel=2)
    arr = np.asarray(values, dtype=float)
    if clip is not None:
        lo, hi = clip
        arr = arr[(arr >= lo) & (arr <= hi)]
    if arr.size < 2:
        raise ValueError(f"{path}: fewer than 2 usable rows ({bad} unparsable)")
    ds = normalize_dataset(arr)
    return ds


def mse(estimates, truth: float) -> float:
    """Mean squared error of the estimates against the truth."""
    e = np.asarray(estimates, dtype=float)
    if e.size == 0:
        raise ValueError("no estimates")
    return float(np.mean(np.square(e - truth)))


@dataclass
class ExperimentConfig:
    """Everything a run needs; JSON-serializable.

    ``dataset`` is {"type": "beta", "a", "b", "n"} or
    {"type": "csv", "path", "column", "clip": [lo, hi] | null}.
    ``attack`` is {"kind": "none" | "uniform" | "gaussian" | "point" |
    "input" | "evasive", ...} with range endpoints given as numbers or
    expressions in C and O (e.g. "0.75*C").
    """

    dataset: dict
    eps_list: list[float]
    eps0: float = 1.0 / 16.0
    gamma: float = 0.25
    attack: dict = field(default_factory=lambda: {"kind": "uniform", "lo": "0.75*C", "hi": "C"})
    schemes: list[str] = field(default_factory=lambda: ["ostrich", "trimming", "dap_emf_star"])
    trials: int = 20
    seed: int = 0
    out: str | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if not self.schemes:
            raise ConfigurationError("schemes must be nonempty")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ConfigurationError(f"unknown schemes: {sorted(unknown)}")
        if not (0.0 <= self.gamma < 0.5):
            raise ConfigurationError("gamma must be in [0, 0.5)")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def build_attack(spec: dict, default_reference: float = 0.0) -> AttackStrategy | None:
    """Attack strategy from its config dictionary.

    ``default_reference`` is what "O" resolves to in range expressions when
    the config does not pin one; the runner passes the dataset's true mean.
    """
    kind = spec.get("kind", "none")
    ref = spec.get("reference_mean", default_reference)
    if kind == "none":
        return None
    if kind in ("uniform", "gaussian", "point"):
        return attacks.poison_strategy(
            lo=spec.get("lo", "0.75*C"),
            hi=spec.get("hi", "C"),
            dist=kind,
            mu=spec.get("mu"),
            sigma=spec.get("sigma"),
            value=spec.get("value"),
            reference_mean=ref,
            side=spec.get("side", "right"),
        )
    if kind == "input":
        return attacks.input_manipulation_strategy(spec.get("g", 1.0))
    if kind == "evasive":
        return attacks.evasive_strategy(
            a=spec.get("a", 0.2),
            lo=spec.get("lo", "C/2"),
            hi=spec.get("hi", "C"),
            evasive=spec.get("evasive", "-C/2"),
            reference_mean=ref,
        )
    raise ConfigurationError(f"unknown attack kind {kind!r}")


def build_dataset(spec: dict, seed: int) -> Dataset:
    kind = spec.get("type", "beta")
    if kind == "beta":
        return gen_beta(spec.get("a", 2.0), spec.get("b", 5.0), int(spec.get("n", 100_000)), seed)
    if kind == "csv":
        clip = spec.get("clip")
        return load_csv(spec["path"], spec.get("column", 0), tuple(clip) if clip else None)
    raise ConfigurationError(f"unknown dataset type {kind!r}")


@dataclass(frozen=True)
class TrialRecord:
    scheme: str
    epsilon: float
    trial: int
    estimate: float
    sq_error: float
    diagnostics: dict


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    records: list[TrialRecord]

    def cell_mse(self, scheme: str, epsilon: float) -> float:
        errs = [
            r.sq_error
            for r in self.records
            if r.scheme == scheme and r.epsilon == epsilon and not math.isnan(r.sq_error)
        ]
        return mse_from_sq(errs)


def mse_from_sq(sq_errors) -> float:
    e = np.asarray(list(sq_errors), dtype=float)
    if e.size == 0:
        return float("nan")
    return float(e.mean())


def _run_trial(
    config: ExperimentConfig,
    dataset: Dataset,
    attack: AttackStrategy | None,
    eps_index: int,
    epsilon: float,
    trial: int,
) -> list[TrialRecord]:
    """All schemes on one (epsilon, trial) cell, sharing identities and values."""
    ss = np.random.SeedSequence(config.seed, spawn_key=(1 + eps_index, trial))
    streams = {
        name: np.random.default_rng(child)
        for name, child in zip(
            ("identity", "single", "baseline", "dap_emf", "dap_emf_star", "dap_cemf_star"),
            ss.spawn(6),
        )
    }
    values = dataset.values
    n_users = values.size
    m = int(math.floor(config.gamma * n_users))
    attacker_idx = streams["identity"].choice(n_users, size=m, replace=False)
    mask = np.zeros(n_users, dtype=bool)
    mask[attacker_idx] = True
    truth = float(values[~mask].mean()) if m else float(values.mean())

    # One shared single-budget collection for the unprotected baselines.
    single = None
    if "ostrich" in config.schemes or "trimming" in config.schemes:
        budget = Budget(epsilon)
        rng = streams["single"]
        honest = pm_perturb(values[~mask], budget, rng)
        poison = (
            np.asarray(attack(m, budget, rng), dtype=float)
            if (m and attack is not None)
            else pm_perturb(values[mask], budget, rng)
        )
        single = np.concatenate([honest, poison])

    records = []
    for scheme in config.schemes:
        diag: dict = {}
        try:
            if scheme == "ostrich":
                est = ostrich(single)
            elif scheme == "trimming":
                est = trimming(single, side=config.attack.get("side", "right"))
            elif scheme == "baseline":
                res = baseline_run(
                    values,
                    mask,
                    eps_alpha=epsilon / 16.0,
                    eps_beta=epsilon * 15.0 / 16.0,
                    attack=attack,
                    rng=streams["baseline"],
                )
                est = res.mean
                diag = {"gamma_hat": res.features.gamma_hat, "side": res.side}
            else:
                variant = scheme.removeprefix("dap_")
                res = run_dap(
                    values,
                    mask,
                    eps=epsilon,
                    eps0=min(config.eps0, epsilon),
                    attack=attack,
                    rng=streams[scheme],
                    filter_variant=variant,
                )
                est = res.mean
                diag = {
                    "gamma_hat": res.gamma_hat,
                    "side": res.side,
                    "group_gamma_hats": [g.features.gamma_hat for g in res.estimates],
                }
            sq = (est - truth) ** 2
        except Exception as exc:  # record, keep the other schemes running
            est, sq = float("nan"), float("nan")
            diag = {"error": f"{type(exc).__name__}: {exc}"}
        records.append(
            TrialRecord(
                scheme=scheme,
                epsilon=epsilon,
                trial=trial,
                estimate=float(est),
                sq_error=float(sq),
                diagnostics=diag,
            )
        )
    return records


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every (scheme, epsilon, trial) cell and optionally write CSV + JSON."""
    dataset = build_dataset(
        config.dataset, np.random.SeedSequence(config.seed, spawn_key=(0,))
    )
    attack = build_attack(config.attack, default_reference=dataset.true_mean)
    tasks = [
        (ei, eps, t)
        for ei, eps in enumerate(config.eps_list)
        for t in range(config.trials)
    ]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(
                pool.map(lambda args: _run_trial(config, dataset, attack, *args), tasks)
            )
    else:
        chunks = [_run_trial(config, dataset, attack, *args) for args in tasks]
    records = [r for chunk in chunks for r in chunk]
    result = ExperimentResult(config=config, records=records)
    if config.out:
        write_outputs(result)
    return result


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_outputs(result: ExperimentResult) -> tuple[Path, Path]:
    """Long-form CSV plus a JSON summary next to it."""
    cfg = result.config
    csv_path = Path(cfg.out)
    json_path = csv_path.with_suffix(".json")
    attack = cfg.attack
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["scheme", "epsilon", "gamma", "range_lo", "range_hi", "trial", "estimate", "sq_error"]
        )
        for r in result.records:
            w.writerow(
                [
                    r.scheme,
                    _fmt(r.epsilon),
                    _fmt(cfg.gamma),
                    attack.get("lo", ""),
                    attack.get("hi", ""),
                    r.trial,
                    _fmt(r.estimate),
                    _fmt(r.sq_error),
                ]
            )
    cells = []
    for eps in cfg.eps_list:
        for scheme in cfg.schemes:
            cell = [r for r in result.records if r.scheme == scheme and r.epsilon == eps]
            errs = [r.sq_error for r in cell if not math.isnan(r.sq_error)]
            cells.append(
                {
                    "scheme": scheme,
                    "epsilon": eps,
                    "mse": mse_from_sq(errs) if errs else None,
                    "trials": len(cell),
                    "failed": len(cell) - len(errs),
                    "diagnostics": [r.diagnostics for r in cell],
                }
            )
    with json_path.open("w") as fh:
        json.dump({"config": asdict(cfg), "cells": cells}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path
