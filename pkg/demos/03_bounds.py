"""Entropy bounds on the discarded Schmidt weight, and what they promise.

For a target with Schmidt spectrum lam, dropping all but the d largest values
throws away weight eps.  The bounds below cap eps using only the entropy of
the spectrum, and a small eps guarantees a small fidelity loss per step.
"""

import numpy as np

from qdimred.bounds import bounds_report, finite_fidelity_check
from qdimred.imps import canonicalize, random_imps
from qdimred.processes import WalkSpec, cyclic_walk_model, qsample_imps

target = canonicalize(qsample_imps(cyclic_walk_model(WalkSpec(128, "normal", 0.1))))
lam = target.spectrum.values
print(f"largest Schmidt values: {np.round(lam[:8], 4)}")
for d in (3, 5, 7):
    rep = bounds_report(target.spectrum, d)
    print(f"d={d}: eps={rep.epsilon:.2e}  entropy bound={rep.thm2_bound:.3f}  "
          f"QFDR bound (leading term)={rep.thm1_bound:.2e}")

print("\nFinite-length check of overlap >= 1 - L*eps on a random target:")
small = canonicalize(random_imps(4, 2, np.random.default_rng(0)))
for L in (2, 4, 6):
    chk = finite_fidelity_check(small, 2, L)
    print(f"  L={L}: overlap {chk.overlap:.4f} >= {chk.lower_bound:.4f}  {chk.passed}")
