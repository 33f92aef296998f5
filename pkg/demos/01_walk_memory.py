"""How much memory does a cyclic random walk need, and how much can we drop?

A particle hops around N sites on a ring with a small random shift each step.
Its ideal quantum model stores about 3.4 bits.  We shrink that memory to a
handful of dimensions in two ways and measure the damage as a quantum
fidelity divergence rate (QFDR, bits per step).  A classical coarse-graining
with the same number of states is shown for comparison.
"""

import warnings

from qdimred.classical import walk_classical_rate
from qdimred.divergences import qfdr
from qdimred.imps import canonicalize, memory_costs
from qdimred.processes import WalkSpec, cyclic_walk_model, qsample_imps
from qdimred.truncation import TieWarning, TruncationConfig, direct_truncate, variational_truncate

N = 64

for dist in ("uniform", "normal"):
    model = cyclic_walk_model(WalkSpec(N, dist, 0.1))
    target = canonicalize(qsample_imps(model))
    c_q, d_q = memory_costs(target)
    print(f"\n{dist} walk, N={N}: C_q = {c_q:.3f} bits, full dimension {target.bond_dim}")
    print("  d    direct        variational   classical")
    for d in (3, 5, 7):
        with warnings.catch_warnings():
            # mirror-symmetric spectra put ties exactly at some cuts
            warnings.simplefilter("ignore", TieWarning)
            direct = qfdr(target.left_op, direct_truncate(target, d)).rate
        cfg = TruncationConfig(d_tilde=d, restarts=4, screen_iters=20, max_iters=300,
                               raise_on_failure=False)
        var = variational_truncate(target, cfg)
        classical = walk_classical_rate(model, d).rate
        flag = "" if var.converged else "  (budget hit)"
        print(f"  {d}  {direct:.3e}     {var.qfdr:.3e}     {classical:.3e}{flag}")

print("\nFor the uniform walk, random starts reach far better fixed points than")
print("the direct cut even within a small budget.  For the normal walk the")
print("spectrum decays fast and the direct cut is already as good.")
