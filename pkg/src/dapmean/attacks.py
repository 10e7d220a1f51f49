"""Generators for colluding-attacker behavior.

Covers one-sided (biased) attacks, two-sided general attacks and their
constructive reduction to a one-sided attack with the same deviation sum,
attackers who disguise as honest users by perturbing a chosen input, and
evasive attacks that plant a fraction of their reports on the opposite side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mechanism import Budget, DomainError, pm_perturb


class NotBiasedError(ValueError):
    """Raised when a poison range crosses the reference mean."""


@dataclass(frozen=True)
class PoisonSpec:
    """One-sided poison value recipe.

    Attributes:
        gamma: attacker proportion m/N in [0, 0.5).
        range_lo, range_hi: poison value range inside [-C, C].
        dist: "uniform", "gaussian" or "point".
        mu, sigma: gaussian parameters (defaults: midpoint and quarter-width
            of the range, used when the caller gives none).
        value: the point-mass location for dist="point" (defaults to range_hi).
        evasion_fraction: fraction of reports planted on the opposite side.
        side: "left" or "right" of the reference mean.
    """

    gamma: float = 0.25
    range_lo: float = 0.0
    range_hi: float = 1.0
    dist: str = "uniform"
    mu: float | None = None
    sigma: float | None = None
    value: float | None = None
    evasion_fraction: float = 0.0
    side: str = "right"

    def __post_init__(self) -> None:
        if not (0.0 <= self.gamma < 0.5):
            raise ValueError(f"gamma must be in [0, 0.5), got {self.gamma}")
        if self.range_lo > self.range_hi:
            raise ValueError("range_lo must not exceed range_hi")
        if self.dist not in ("uniform", "gaussian", "point"):
            raise ValueError(f"unknown distribution {self.dist!r}")
        if not (0.0 <= self.evasion_fraction <= 1.0):
            raise ValueError("evasion_fraction must be in [0, 1]")
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")


@dataclass(frozen=True)
class AttackTrace:
    """Poison values reported by attackers, with the reference mean that defines sides."""

    values: np.ndarray
    reference_mean: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def deviation_sum(self) -> float:
        return float(np.sum(self.values - self.reference_mean))

    def is_one_sided(self) -> bool:
        v = self.values
        return not (np.any(v < self.reference_mean) and np.any(v > self.reference_mean))


def _draw(spec: PoisonSpec, m: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.range_lo, spec.range_hi
    if spec.dist == "uniform":
        return rng.uniform(lo, hi, size=m)
    if spec.dist == "point":
        v = spec.value if spec.value is not None else hi
        if not (lo <= v <= hi):
            raise ValueError("point value outside poison range")
        return np.full(m, float(v))
    # Gaussian, rejection-truncated to the poison range.
    mu = spec.mu if spec.mu is not None else 0.5 * (lo + hi)
    sigma = spec.sigma if spec.sigma is not None else 0.25 * (hi - lo)
    out = np.empty(m)
    filled = 0
    while filled < m:
        cand = rng.normal(mu, sigma, size=max(2 * (m - filled), 16))
        cand = cand[(cand >= lo) & (cand <= hi)]
        take = min(cand.size, m - filled)
        out[filled : filled + take] = cand[:take]
        filled += take
    return out


def gen_bba(
    spec: PoisonSpec,
    m: int,
    budget: Budget,
    rng: np.random.Generator,
    reference_mean: float = 0.0,
) -> AttackTrace:
    """Draw m one-sided poison values from the spec's distribution.

    The poison range must lie entirely on the spec's side of the reference
    mean and inside [-C, C].
    """
    c = budget.c_bound
    if spec.range_lo < -c or spec.range_hi > c:
        raise DomainError(f"poison range outside [-{c}, {c}]")
    if spec.side == "right" and spec.range_lo < reference_mean:
        raise NotBiasedError("right-side poison range crosses the reference mean")
    if spec.side == "left" and spec.range_hi > reference_mean:
        raise NotBiasedError("left-side poison range crosses the reference mean")
    if m < 0:
        raise ValueError("m must be non-negative")
    return AttackTrace(values=_draw(spec, m, rng), reference_mean=reference_mean)


def gen_gba(
    left_spec: PoisonSpec,
    right_spec: PoisonSpec,
    m_left: int,
    m_right: int,
    budget: Budget,
    rng: np.random.Generator,
    reference_mean: float = 0.0,
) -> AttackTrace:
    """Union of a left-side and a right-side one-sided draw."""
    if left_spec.side != "left" or right_spec.side != "right":
        raise ValueError("gen_gba needs one left-side and one right-side spec")
    left = gen_bba(left_spec, m_left, budget, rng, reference_mean)
    right = gen_bba(right_spec, m_right, budget, rng, reference_mean)
    return AttackTrace(
        values=np.concatenate([left.values, right.values]),
        reference_mean=reference_mean,
    )


def reduce_gba_to_bba(trace: AttackTrace, o: float, bound: float | None = None) -> AttackTrace:
    """Merge a two-sided trace into a one-sided trace with the same deviation sum.

    Iteratively removes the most extreme value on the minority side together
    with a minimal opposing subset, replacing them with the single value that
    carries their combined deviation.  The output lies entirely on the side
    of the input's deviation-sum sign, has at most as many values, and
    preserves the deviation sum exactly (up to float rounding).  A trace with
    zero deviation sum reduces to the empty trace.
    """
    v = np.asarray(trace.values, dtype=float)
    if bound is not None and v.size and (v.min() < -bound or v.max() > bound):
        raise DomainError(f"trace values outside [-{bound}, {bound}]")
    if not (np.any(v < o) and np.any(v > o)):
        return AttackTrace(values=v.copy(), reference_mean=o)
    dev_sum = float(np.sum(v - o))
    if dev_sum == 0.0:
        return AttackTrace(values=np.empty(0), reference_mean=o)

    # Mirror so the dominant side is always the left (negative deviations).
    flip = dev_sum > 0.0
    dev = -(v - o) if flip else (v - o)

    keep = sorted(dev[dev <= 0.0].tolist())  # most negative first
    minority = sorted(dev[dev > 0.0].tolist())  # ascending, pop() gives the largest
    while minority:
        acc = minority.pop()
        absorbed = 0
        while acc > 0.0 and absorbed < len(keep):
            acc += keep[absorbed]
            absorbed += 1
        # Total deviation is negative, so the dominant side always covers acc.
        keep = keep[absorbed:]
        keep.insert(0, acc)
        keep.sort()

    out_dev = np.asarray(keep)
    out = o + (-out_dev if flip else out_dev)
    return AttackTrace(values=out, reference_mean=o)


def gen_input_manipulation(
    g: float, m: int, budget: Budget, rng: np.random.Generator
) -> AttackTrace:
    """Attackers disguise as honest users: perturb the chosen input g normally."""
    if not (-1.0 <= g <= 1.0):
        raise DomainError("manipulated input must lie in [-1, 1]")
    if m == 0:
        return AttackTrace(values=np.empty(0))
    return AttackTrace(values=pm_perturb(np.full(m, float(g)), budget, rng))


def gen_evasive(
    spec: PoisonSpec,
    m: int,
    evasive_value: float,
    rng: np.random.Generator,
    reference_mean: float = 0.0,
) -> AttackTrace:
    """floor(a*m) copies of the evasive value plus (m - floor(a*m)) true poison values."""
    if spec.side == "right" and evasive_value > reference_mean:
        raise ValueError("evasive value must lie on the side opposite the poison range")
    if spec.side == "left" and evasive_value < reference_mean:
        raise ValueError("evasive value must lie on the side opposite the poison range")
    n_evasive = int(np.floor(spec.evasion_fraction * m))
    true_values = _draw(spec, m - n_evasive, rng)
    values = np.concatenate([np.full(n_evasive, float(evasive_value)), true_values])
    return AttackTrace(values=values, reference_mean=reference_mean)


def evasion_bounds(
    m: int, n: int, a: float, c: float, o: float, o_prime: float
) -> tuple[float, float, float]:
    """Utility bounds of an evasive attack and their gap.

    Returns (U_max, U_eva, delta) where U_max is the estimation shift of an
    all-at-C attack, U_eva the shift when a fraction ``a`` of reports sits at
    the pessimistic mean, and delta = U_max - U_eva = m a (C - O') / (m + n).
    The two routes to delta are checked against each other.
    """
    if m <= 0 or n <= 0:
        raise ValueError("m and n must be positive")
    u_max = (m * c + n * o) / (m + n) - o
    u_eva = (m * (a * o_prime + (1.0 - a) * c) + n * o) / (m + n) - o
    delta = m * a * (c - o_prime) / (m + n)
    if abs((u_max - u_eva) - delta) > 1e-12 * max(1.0, abs(delta)):
        raise AssertionError("evasion bound identity violated beyond tolerance")
    return u_max, u_eva, delta


# --- report-level strategies -------------------------------------------------
#
# The grouped protocol fabricates attacker reports per budget stream, so a
# strategy is a callable (count, budget, rng) -> values.  Poison ranges are
# given as expressions in C (the stream's output bound) and O (a reference
# mean), e.g. "0.75*C" or "O".

AttackStrategy = Callable[[int, Budget, np.random.Generator], np.ndarray]


def resolve_endpoint(expr, c: float, o: float) -> float:
    """Evaluate a range endpoint given as a number or an expression in C and O."""
    if isinstance(expr, (int, float)):
        return float(expr)
    return float(eval(expr, {"__builtins__": {}}, {"C": c, "O": o}))


def poison_strategy(
    lo="0.75*C",
    hi="C",
    dist: str = "uniform",
    mu: float | None = None,
    sigma: float | None = None,
    value: float | None = None,
    reference_mean: float = 0.0,
    side: str = "right",
) -> AttackStrategy:
    """One-sided poison reports with range endpoints resolved per budget."""

    def strategy(count: int, budget: Budget, rng: np.random.Generator) -> np.ndarray:
        c = budget.c_bound
        spec = PoisonSpec(
            range_lo=resolve_endpoint(lo, c, reference_mean),
            range_hi=resolve_endpoint(hi, c, reference_mean),
            dist=dist,
            mu=mu,
            sigma=sigma,
            value=value,
            side=side,
        )
        return gen_bba(spec, count, budget, rng, reference_mean).values

    return strategy


def input_manipulation_strategy(g: float) -> AttackStrategy:
    """Disguised attackers: every report is a normal perturbation of g."""

    def strategy(count: int, budget: Budget, rng: np.random.Generator) -> np.ndarray:
        return gen_input_manipulation(g, count, budget, rng).values

    return strategy


def evasive_strategy(
    a: float,
    lo="C/2",
    hi="C",
    evasive="-C/2",
    reference_mean: float = 0.0,
) -> AttackStrategy:
    """Right-side poison with a fraction ``a`` of reports planted at the evasive value."""

    def strategy(count: int, budget: Budget, rng: np.random.Generator) -> np.ndarray:
        c = budget.c_bound
        spec = PoisonSpec(
            range_lo=resolve_endpoint(lo, c, reference_mean),
            range_hi=resolve_endpoint(hi, c, reference_mean),
            evasion_fraction=a,
            side="right",
        )
        ev = resolve_endpoint(evasive, c, reference_mean)
        return gen_evasive(spec, count, ev, rng, reference_mean).values

    return strategy
