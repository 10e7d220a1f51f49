"""Privacy budgets, value domains, bucket grids and the piecewise perturbation primitive.

Everything downstream (attack generation, EM filtering, the grouped
protocol) is built on the objects in this module: a privacy budget with its
derived output bound ``C``, uniform bucket grids over the input/output
domains, dataset normalization, and the piecewise mechanism itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InvalidBudgetError(ValueError):
    """Raised when a privacy budget is non-positive."""


class DomainError(ValueError):
    """Raised when a value lies outside its legal domain."""


class DegenerateRangeError(ValueError):
    """Raised when a dataset has no spread to normalize over."""


@dataclass(frozen=True)
class Budget:
    """A privacy budget epsilon and its derived perturbation-domain bound.

    The perturbed output domain is ``[-C, C]`` with
    ``C = (e^(eps/2) + 1) / (e^(eps/2) - 1)``, which is > 1 and strictly
    decreasing in epsilon.
    """

    epsilon: float

    def __post_init__(self) -> None:
        if not (self.epsilon > 0):
            raise InvalidBudgetError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def c_bound(self) -> float:
        t = math.exp(self.epsilon / 2.0)
        return (t + 1.0) / (t - 1.0)

    def low_edge(self, v):
        """Left endpoint l(v) of the high-probability output band."""
        c = self.c_bound
        return (c + 1.0) / 2.0 * np.asarray(v, dtype=float) - (c - 1.0) / 2.0

    def high_edge(self, v):
        """Right endpoint r(v) = l(v) + C - 1 of the high-probability band."""
        return self.low_edge(v) + self.c_bound - 1.0

    @property
    def high_band_prob(self) -> float:
        """Probability that the output lands inside [l(v), r(v)]."""
        t = math.exp(self.epsilon / 2.0)
        return t / (t + 1.0)


def worst_case_variance(epsilon: float) -> float:
    """Worst-case per-report variance of the piecewise mechanism.

    Attained at inputs v = +/-1:
    ``1/(e^(eps/2)-1) + (e^(eps/2)+3) / (3 (e^(eps/2)-1)^2)``.
    """
    t = math.exp(epsilon / 2.0)
    return 1.0 / (t - 1.0) + (t + 3.0) / (3.0 * (t - 1.0) ** 2)


@dataclass(frozen=True)
class ValueDomain:
    """A closed interval of legal values."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (self.lo < self.hi):
            raise DomainError(f"empty domain [{self.lo}, {self.hi}]")

    def contains(self, values) -> bool:
        v = np.asarray(values, dtype=float)
        return bool(np.all((v >= self.lo) & (v <= self.hi)))


def pm_perturb(v, budget: Budget, rng: np.random.Generator):
    """Perturb values in [-1, 1] with the piecewise mechanism.

    With probability ``e^(eps/2)/(e^(eps/2)+1)`` the output is uniform on
    the band [l(v), r(v)]; otherwise it is uniform on the complement
    ``[-C, l(v)) U (r(v), C]``.  The output is an unbiased estimator of v.

    Args:
        v: scalar or array of values in [-1, 1].
        budget: privacy budget.
        rng: seeded random generator.

    Returns:
        Perturbed value(s) in [-C, C], same shape as ``v``.
    """
    arr = np.asarray(v, dtype=float)
    if arr.size and (arr.min() < -1.0 or arr.max() > 1.0):
        raise DomainError("input values must lie in [-1, 1]")
    c = budget.c_bound
    lo = budget.low_edge(arr)
    hi = lo + c - 1.0
    in_band = rng.random(arr.shape) < budget.high_band_prob
    out = np.empty_like(arr)

    # High-probability band: uniform on [l(v), r(v)].
    u = rng.random(arr.shape)
    out = lo + u * (c - 1.0)

    # Low-probability tails: uniform on [-C, l(v)) U (r(v), C], total length C+1.
    w = rng.random(arr.shape) * (c + 1.0)
    left_len = lo + c
    tail = np.where(w < left_len, -c + w, hi + (w - left_len))
    out = np.where(in_band, out, tail)
    if np.isscalar(v):
        return float(out)
    return out


def _even_floor(x: float) -> int:
    k = int(math.floor(x))
    return k if k % 2 == 0 else k - 1


@dataclass(frozen=True)
class BucketGrid:
    """Uniform discretization of the input and output value domains.

    The input domain [-1, 1] is split into ``d`` buckets and the output
    domain [-C, C] into ``d_out`` buckets.  Both counts are even: the
    output grid is split into two halves for side probing, and the EM
    filter's bookkeeping splits the input grid at d/2.
    """

    d: int
    d_out: int
    c_bound: float
    split: int = field(default=-1)

    def __post_init__(self) -> None:
        if self.d <= 0 or self.d % 2 != 0:
            raise ValueError(f"d must be a positive even integer, got {self.d}")
        if self.d_out <= 0 or self.d_out % 2 != 0:
            raise ValueError(f"d_out must be a positive even integer, got {self.d_out}")
        if self.split < 0:
            object.__setattr__(self, "split", self.d_out // 2)
        if not (0 < self.split < self.d_out):
            raise ValueError(f"split index {self.split} out of range")

    @classmethod
    def for_reports(cls, n_reports: int, budget: Budget, o_prime: float = 0.0) -> "BucketGrid":
        """Default grid: d_out = floor(sqrt(N)) and d scaled by (C-1)/(C+1), both even.

        When ``o_prime`` is nonzero the output grid is split at the bucket
        edge nearest to it, so the poison half covers the reachable poison
        range.
        """
        if n_reports < 16:
            raise ValueError("too few reports to size a bucket grid")
        d_out = max(4, _even_floor(math.sqrt(n_reports)))
        t = math.exp(budget.epsilon / 2.0)
        d = max(2, _even_floor(d_out * (t - 1.0) / (t + 1.0)))
        c = budget.c_bound
        split = d_out // 2
        if o_prime != 0.0:
            edges = np.linspace(-c, c, d_out + 1)
            split = int(np.clip(np.argmin(np.abs(edges - o_prime)), 1, d_out - 1))
        return cls(d=d, d_out=d_out, c_bound=c, split=split)

    @property
    def input_edges(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.d + 1)

    @property
    def output_edges(self) -> np.ndarray:
        return np.linspace(-self.c_bound, self.c_bound, self.d_out + 1)

    @property
    def input_midpoints(self) -> np.ndarray:
        e = self.input_edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def output_midpoints(self) -> np.ndarray:
        e = self.output_edges
        return 0.5 * (e[:-1] + e[1:])

    def poison_indices(self, side: str) -> np.ndarray:
        """Output-bucket indices forming the poison block for the given side."""
        if side == "right":
            return np.arange(self.split, self.d_out)
        if side == "left":
            return np.arange(0, self.split)
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def transition_prob(input_bucket: int, output_bucket: int, budget: Budget, grid: BucketGrid) -> float:
    """Probability that the mechanism maps an input bucket into an output bucket.

    The representative value of the input bucket is its midpoint; the
    two-level output density is integrated exactly over the output bucket.
    """
    col = transition_column(input_bucket, budget, grid)
    return float(col[output_bucket])


def transition_column(input_bucket: int, budget: Budget, grid: BucketGrid) -> np.ndarray:
    """All d_out transition probabilities for one input bucket (sums to 1)."""
    if not (0 <= input_bucket < grid.d):
        raise IndexError(f"input bucket {input_bucket} out of range")
    v = grid.input_midpoints[input_bucket]
    c = budget.c_bound
    lo = float(budget.low_edge(v))
    hi = lo + c - 1.0
    dens_high = budget.high_band_prob / (c - 1.0)
    dens_low = (1.0 - budget.high_band_prob) / (c + 1.0)
    edges = grid.output_edges
    a, b = edges[:-1], edges[1:]
    overlap = np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)
    probs = overlap * dens_high + (b - a - overlap) * dens_low
    return np.clip(probs, 0.0, 1.0)


def perturbation_matrix(budget: Budget, grid: BucketGrid) -> np.ndarray:
    """The d_out x d matrix of bucket transition probabilities for normal users."""
    return np.column_stack([transition_column(k, budget, grid) for k in range(grid.d)])


@dataclass(frozen=True)
class Dataset:
    """Normalized user values in [-1, 1] and their true mean."""

    values: np.ndarray
    true_mean: float

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.size and (v.min() < -1.0 or v.max() > 1.0):
            raise DomainError("dataset values must lie in [-1, 1]")

    @property
    def n(self) -> int:
        return int(self.values.size)


def normalize_dataset(raw) -> Dataset:
    """Min-max normalize raw values onto [-1, 1].

    x -> 2 (x - min) / (max - min) - 1.  Requires at least two distinct
    values; a constant dataset has no usable range.
    """
    x = np.asarray(raw, dtype=float)
    if x.size < 2:
        raise DegenerateRangeError("need at least 2 values to normalize")
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        raise DegenerateRangeError("constant dataset cannot be normalized")
    v = 2.0 * (x - lo) / (hi - lo) - 1.0
    return Dataset(values=v, true_mean=float(v.mean()))
