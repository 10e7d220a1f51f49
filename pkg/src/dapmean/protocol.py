"""End-to-end defenses: two-budget baseline, grouped aggregation, naive baselines.

The grouped protocol assigns each user a single random per-group budget,
probes attacker features inside every group, removes the estimated poison
contribution from each group mean, and combines the group means with
minimum-variance weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackStrategy
from .filters import (
    ByzantineFeatures,
    ObservedCounts,
    SideProbe,
    bucket_counts,
    build_transform,
    cemf_star,
    default_tolerance,
    emf,
    emf_star,
    estimate_features,
    poison_mean,
    probe_side,
)
from .mechanism import Budget, BucketGrid, pm_perturb, worst_case_variance


class ConfigurationError(ValueError):
    """Raised for invalid protocol parameters."""


class DegenerateFilterError(ValueError):
    """Raised when the filter attributes (almost) all reports to attackers."""


FILTER_VARIANTS = ("emf", "emf_star", "cemf_star")


@dataclass(frozen=True)
class GroupPlan:
    """Group assignment with halving budgets and per-group report multiplicity."""

    budgets: np.ndarray  # shape (h,), budgets[t] = eps / 2^t
    assignment: np.ndarray  # shape (N,), group index per user
    reports_per_user: np.ndarray  # shape (h,), eps / budgets[t]

    @property
    def h(self) -> int:
        return int(self.budgets.size)

    @property
    def n_users(self) -> int:
        return int(self.assignment.size)

    def group_members(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == t)

    def expected_reports(self, t: int) -> int:
        return int(np.sum(self.assignment == t)) * int(self.reports_per_user[t])


def dap_plan(n_users: int, eps: float, eps0: float, rng: np.random.Generator) -> GroupPlan:
    """Split users into h = ceil(log2(eps/eps0)) + 1 equal-sized random groups.

    Group budgets halve from eps down to eps0; users in group t report
    eps/eps_t times so every user spends exactly eps.  If eps/eps0 is not a
    power of two, eps0 is rounded down until it is.  Remainder users go to
    the largest-budget groups.
    """
    if eps0 > eps:
        raise ConfigurationError("eps0 must not exceed eps")
    if eps <= 0 or eps0 <= 0:
        raise ConfigurationError("budgets must be positive")
    h = int(math.ceil(math.log2(eps / eps0))) + 1 if eps0 < eps else 1
    budgets = eps / np.power(2.0, np.arange(h))
    reports = np.power(2, np.arange(h))

    base = n_users // h
    sizes = np.full(h, base)
    sizes[: n_users - base * h] += 1
    assignment = np.repeat(np.arange(h), sizes)
    rng.shuffle(assignment)
    return GroupPlan(budgets=budgets, assignment=assignment, reports_per_user=reports)


@dataclass(frozen=True)
class GroupReports:
    """Collected reports of one group."""

    index: int
    budget: Budget
    reports: np.ndarray
    n_attacker_reports: int  # ground truth, diagnostics only


def dap_collect(
    values: np.ndarray,
    attacker_mask: np.ndarray,
    plan: GroupPlan,
    attack: AttackStrategy | None,
    rng: np.random.Generator,
) -> list[GroupReports]:
    """Collect per-group reports: honest users perturb, attackers fabricate.

    Every user in group t submits ``reports_per_user[t]`` reports; honest
    reports are independent perturbations of the user's value at the group
    budget, attacker reports are fresh draws from the attack strategy.
    """
    values = np.asarray(values, dtype=float)
    attacker_mask = np.asarray(attacker_mask, dtype=bool)
    if values.size != plan.n_users or attacker_mask.size != plan.n_users:
        raise ConfigurationError("plan does not cover all users")
    groups = []
    for t in range(plan.h):
        budget = Budget(float(plan.budgets[t]))
        reps = int(plan.reports_per_user[t])
        members = plan.group_members(t)
        honest = members[~attacker_mask[members]]
        n_poison = int(attacker_mask[members].sum()) * reps
        honest_reports = pm_perturb(np.repeat(values[honest], reps), budget, rng)
        if n_poison and attack is not None:
            poison_reports = np.asarray(attack(n_poison, budget, rng), dtype=float)
        else:
            poison_reports = np.empty(0)
        reports = np.concatenate([honest_reports, poison_reports])
        rng.shuffle(reports)
        groups.append(
            GroupReports(
                index=t, budget=budget, reports=reports, n_attacker_reports=n_poison
            )
        )
    return groups


@dataclass(frozen=True)
class GroupEstimate:
    """Intra-group mean estimate with the probed attacker features."""

    index: int
    budget: Budget
    mean: float
    m_hat: float
    n_hat: float
    features: ByzantineFeatures
    probe: SideProbe | None = None


def intra_group_mean(
    reports: np.ndarray,
    y_hat: np.ndarray,
    poison_midpoints: np.ndarray,
    budget: Budget,
    eps_total: float,
    index: int = 0,
    features: ByzantineFeatures | None = None,
    probe: SideProbe | None = None,
) -> GroupEstimate:
    """Group mean with the estimated poison contribution removed.

    Subtracts N_t * sum_j(y_j * nu_j), the reconstructed poison sum, and
    divides by the estimated number of honest reports.  The attacker report
    count is clamped to [0, N_t - 1] so probe noise cannot blow up the
    denominator.
    """
    reports = np.asarray(reports, dtype=float)
    n_t = reports.size
    gamma_hat = float(np.sum(y_hat))
    m_hat = float(np.clip(np.round(gamma_hat * n_t), 0, n_t - 1))
    if gamma_hat >= 1.0:
        raise DegenerateFilterError("filter attributed all reports to attackers")
    poison_sum = n_t * float(np.dot(y_hat, poison_midpoints))
    # Rescale the poison sum to the clamped count so both terms stay consistent.
    if gamma_hat > 0.0:
        poison_sum *= m_hat / (gamma_hat * n_t)
    mean = (reports.sum() - poison_sum) / (n_t - m_hat)
    n_hat = max((n_t - m_hat) * budget.epsilon / eps_total, 0.0)
    if features is None:
        features = ByzantineFeatures(
            side="right", gamma_hat=gamma_hat, y_hat=np.asarray(y_hat, float), m_hat=m_hat
        )
    return GroupEstimate(
        index=index,
        budget=budget,
        mean=float(mean),
        m_hat=m_hat,
        n_hat=float(n_hat),
        features=features,
        probe=probe,
    )


@dataclass(frozen=True)
class AggregateResult:
    """Final mean, the group weights, and the predicted worst-case variance."""

    mean: float
    weights: np.ndarray
    predicted_variance: float


def optimal_weights(epsilons: np.ndarray, n_hats: np.ndarray) -> np.ndarray:
    """Minimum-variance weights for combining group means.

    The group-mean worst-case variance is Var_worst(eps_t)/n_t, so the
    optimal weights are proportional to n_t / Var_worst(eps_t), i.e. to
    n_t^2 / B_t with B_t = n_t * Var_worst(eps_t).
    """
    b = np.array([n * worst_case_variance(e) for e, n in zip(epsilons, n_hats)])
    score = np.where(b > 0.0, np.square(n_hats) / np.where(b > 0.0, b, 1.0), 0.0)
    total = score.sum()
    if total <= 0.0:
        raise ConfigurationError("no group carries signal")
    return score / total


def aggregate_means(estimates: list[GroupEstimate]) -> AggregateResult:
    """Combine group means with minimum-variance weights."""
    if not estimates:
        raise ConfigurationError("need at least one group estimate")
    eps = np.array([g.budget.epsilon for g in estimates])
    n_hats = np.array([g.n_hat for g in estimates])
    means = np.array([g.mean for g in estimates])
    w = optimal_weights(eps, n_hats)
    b = np.array([n * worst_case_variance(e) for e, n in zip(eps, n_hats)])
    with np.errstate(divide="ignore"):
        inv = np.where(b > 0.0, np.square(n_hats) / np.where(b > 0.0, b, 1.0), 0.0)
    predicted = float(1.0 / inv.sum()) if inv.sum() > 0 else float("inf")
    return AggregateResult(mean=float(np.dot(w, means)), weights=w, predicted_variance=predicted)


def ostrich(reports) -> float:
    """Average every report, ignoring attackers."""
    r = np.asarray(reports, dtype=float)
    if r.size == 0:
        raise ValueError("no reports")
    return float(r.mean())


def trimming(reports, side: str = "right") -> float:
    """Drop the extreme 50% of reports on the poisoned side, average the rest."""
    r = np.sort(np.asarray(reports, dtype=float))
    if r.size == 0:
        raise ValueError("no reports")
    half = r.size // 2
    kept = r[: r.size - half] if side == "right" else r[half:]
    return float(kept.mean())


def _probe_group(
    reports: np.ndarray, budget: Budget, max_iter: int
) -> tuple[BucketGrid, SideProbe, ObservedCounts]:
    grid = BucketGrid.for_reports(reports.size, budget)
    counts = bucket_counts(reports, grid)
    tau = default_tolerance(budget)
    m_l = build_transform(budget, grid, side="left")
    m_r = build_transform(budget, grid, side="right")
    return grid, probe_side(m_l, m_r, counts, tau=tau, max_iter=max_iter), counts


@dataclass(frozen=True)
class DapResult:
    """Aggregated mean plus per-group diagnostics."""

    mean: float
    aggregate: AggregateResult
    estimates: list[GroupEstimate]
    side: str
    gamma_hat: float


def run_dap(
    values: np.ndarray,
    attacker_mask: np.ndarray,
    eps: float,
    eps0: float,
    attack: AttackStrategy | None,
    rng: np.random.Generator,
    filter_variant: str = "emf_star",
    max_iter: int = 10_000,
) -> DapResult:
    """Full grouped run: plan, collect, probe, filter, estimate, aggregate.

    The poisoned side is probed in every group; the attacker proportion fed
    to the constrained filters comes from the smallest-budget group, where
    the probe is most accurate.
    """
    if filter_variant not in FILTER_VARIANTS:
        raise ConfigurationError(f"unknown filter variant {filter_variant!r}")
    plan = dap_plan(values.size, eps, eps0, rng)
    groups = dap_collect(values, attacker_mask, plan, attack, rng)

    probes = []
    for g in groups:
        grid, probe, counts = _probe_group(g.reports, g.budget, max_iter)
        probes.append((grid, probe, counts))

    # The attacker proportion comes from the smallest-budget (last) group,
    # where the probe sees the most reports per user; the poisoned side is
    # each group's own call.
    _, low_probe, low_counts = probes[-1]
    side = low_probe.side
    low_features = estimate_features(low_probe.winning_pair, side, low_counts)
    gamma_hat = min(low_features.gamma_hat, 0.999)

    estimates = []
    for g, (grid, probe, counts) in zip(groups, probes):
        group_side = probe.side
        transform = build_transform(g.budget, grid, side=group_side)
        tau = default_tolerance(g.budget)
        if filter_variant == "emf":
            pair = probe.winning_pair
        elif filter_variant == "emf_star":
            pair = emf_star(transform, counts, gamma_hat, tau=tau, max_iter=max_iter)
        else:
            pair = cemf_star(
                transform,
                counts,
                gamma_hat,
                tau=tau,
                max_iter=max_iter,
                prior_y=probe.winning_pair.y_hat,
            )
        features = estimate_features(pair, group_side, counts)
        estimates.append(
            intra_group_mean(
                g.reports,
                pair.y_hat,
                transform.poison_midpoints,
                g.budget,
                eps_total=eps,
                index=g.index,
                features=features,
                probe=probe,
            )
        )
    agg = aggregate_means(estimates)
    return DapResult(
        mean=agg.mean, aggregate=agg, estimates=estimates, side=side, gamma_hat=gamma_hat
    )


@dataclass(frozen=True)
class BaselineResult:
    """Two-budget baseline estimate with its probe diagnostics."""

    mean: float
    features: ByzantineFeatures
    side: str


def baseline_run(
    values: np.ndarray,
    attacker_mask: np.ndarray,
    eps_alpha: float,
    eps_beta: float,
    attack: AttackStrategy | None,
    rng: np.random.Generator,
    attack_on_alpha: bool = True,
    alpha_ratio_cap: float = 0.25,
    max_iter: int = 10_000,
) -> BaselineResult:
    """Two-budget protocol: probe features on the small budget, estimate on the large.

    Every honest user perturbs twice (eps_alpha and eps_beta).  Attackers
    inject per their strategy into both streams; with
    ``attack_on_alpha=False`` they behave honestly on the probing stream,
    which is the protocol's known flaw.
    """
    if eps_alpha > alpha_ratio_cap * eps_beta:
        raise ConfigurationError(
            f"eps_alpha must be at most {alpha_ratio_cap} * eps_beta"
        )
    values = np.asarray(values, dtype=float)
    attacker_mask = np.asarray(attacker_mask, dtype=bool)
    n_users = values.size
    m = int(attacker_mask.sum())
    b_alpha, b_beta = Budget(eps_alpha), Budget(eps_beta)

    honest = values[~attacker_mask]
    alpha_honest = pm_perturb(honest, b_alpha, rng)
    beta_honest = pm_perturb(honest, b_beta, rng)
    if m and attack is not None and attack_on_alpha:
        alpha_poison = np.asarray(attack(m, b_alpha, rng), dtype=float)
    else:
        alpha_poison = pm_perturb(values[attacker_mask], b_alpha, rng)
    if m and attack is not None:
        beta_poison = np.asarray(attack(m, b_beta, rng), dtype=float)
    else:
        beta_poison = pm_perturb(values[attacker_mask], b_beta, rng)
    alpha_reports = np.concatenate([alpha_honest, alpha_poison])
    beta_reports = np.concatenate([beta_honest, beta_poison])

    grid, probe, counts = _probe_group(alpha_reports, b_alpha, max_iter)
    side = probe.side
    pair = probe.winning_pair
    features = estimate_features(pair, side, counts)
    m_hat = float(np.clip(features.m_hat, 0, n_users - 1))

    if m_hat > 0 and pair.poison_mass > 0:
        transform = build_transform(b_alpha, grid, side=side)
        m_alpha = poison_mean(pair, transform)
        # Poison means on the two streams live on different [-C, C] scales;
        # map through the shared deviation from the probe reference (0).
        m_beta = m_alpha
        mean = (beta_reports.sum() - m_hat * m_beta) / (n_users - m_hat)
    else:
        mean = beta_reports.mean()
    return BaselineResult(mean=float(mean), features=features, side=side)
