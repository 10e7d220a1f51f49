"""A first look at the perturbation mechanism.

Every user maps a private value v in [-1, 1] to a noisy report in [-C, C].
The report is drawn from a two-level density: a narrow high band around v,
and a low band everywhere else.  The report is unbiased, so averaging many
reports recovers the mean -- until someone starts lying.
"""

import numpy as np

from dapmean import Budget, pm_perturb, worst_case_variance

rng = np.random.default_rng(0)

print("How the output domain grows as the privacy budget shrinks:")
for eps in (4.0, 2.0, 1.0, 0.5, 0.25, 0.0625):
    b = Budget(eps)
    print(f"  eps = {eps:>6.4f}: reports live in [-{b.c_bound:.2f}, {b.c_bound:.2f}], "
          f"worst-case variance {worst_case_variance(eps):.2f}")

print()
v = 0.3
b = Budget(1.0)
n = 200_000
reports = pm_perturb(np.full(n, v), b, rng)
print(f"{n} perturbations of v = {v} at eps = 1:")
print(f"  empirical mean   {reports.mean():+.4f}  (true value {v:+.4f})")
print(f"  empirical var    {reports.var():.3f}   (worst-case bound {worst_case_variance(1.0):.3f})")

in_band = np.mean((reports >= b.low_edge(v)) & (reports <= b.high_edge(v)))
print(f"  fraction in the high band around v: {in_band:.3f} "
      f"(design value {b.high_band_prob:.3f})")

print()
print("The same mean, estimated from a whole population:")
values = rng.beta(2, 5, 100_000) * 2 - 1
reports = pm_perturb(values, b, rng)
print(f"  true mean      {values.mean():+.4f}")
print(f"  estimated mean {reports.mean():+.4f}")
