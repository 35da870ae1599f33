"""
Displacements of a Mallows product permutation
===============================================

Draw windows of consecutive values, then hold the histogram of one
coordinate against the closed-form single-site law.
"""

import numpy as np

from qmallows import measures
from qmallows.qseries import MallowsParams
from qmallows.sampler import make_rng, sample_windows
from qmallows.stats import EmpiricalDist, chi_square_gof, tv_distance

p = MallowsParams(q=0.6, alpha=2.0)
rng = make_rng(seed=1)

# 50000 windows of 8 consecutive values starting at position 0
X, tv_bound = sample_windows(p, 0, 8, 50_000, rng)
print("first windows\n", X[:3])
print("truncation TV bound", tv_bound)

# alpha > 1 pushes the displacement up; the law peaks near p.center
d = X[:, 3] - 3
emp = EmpiricalDist.from_samples(d)
law = {x: measures.pmf_single(p, 0, x).prob for x in range(-40, 41)}

print("\n  d   empirical   exact")
for x in range(p.center - 4, p.center + 5):
    print(f"{x:3d}   {emp.freqs().get(x, 0):.5f}     {law[x]:.5f}")

stat, dof, pval = chi_square_gof(emp, law)
print(f"\nchi-square {stat:.1f} on {dof} dof, p = {pval:.3f}")
print("TV", round(tv_distance(emp, law), 4))

# neighbours are q-exchangeable: swapping two adjacent values costs a factor q
up = np.mean((X[:, 0] == -1) & (X[:, 1] == 0))
down = np.mean((X[:, 0] == 0) & (X[:, 1] == -1))
print("\nratio of swapped to sorted pair", round(down / up, 3), "vs q =", p.q)
