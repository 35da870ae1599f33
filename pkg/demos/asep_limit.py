"""
From six vertices to exclusion
==============================

With b1 = eps and b2 = q eps, T = t/eps rows of the six-vertex model
behave like the exclusion process run for time t.  The distance between
the two height laws shrinks as eps does.
"""

import numpy as np

from qmallows import sixvertex as sv
from qmallows.sampler import make_rng
from qmallows.stats import EmpiricalDist, tv_distance

q, t, n = 0.5, 2.0, 50_000
cuts = [sv.CutQuery(0, -1), sv.CutQuery(-1, 0), sv.CutQuery(1, 1)]
rng = make_rng(5)

ref = EmpiricalDist.from_samples(sv.asep_step_heights(q, t, cuts, n, rng))
print("mean heights, exclusion:", np.round(np.average(ref.support, axis=0, weights=ref.counts), 3))

for eps in [0.4, 0.2, 0.1, 0.05]:
    h = sv.asep_limit_heights(q, eps, t, cuts, n, rng)
    print(f"eps={eps:<5} T={int(t / eps):3d}  mean {np.round(h.mean(axis=0), 3)}  TV {tv_distance(EmpiricalDist.from_samples(h), ref):.4f}")
