"""A qubit of memory for a long-range Ising chain.

The Dyson-Ising process emits spins whose couplings decay with distance.
Keeping the last L spins gives a 2**L state model.  We compress its q-sample
into a single qubit and compare against the best two-state classical model
found by a grid search over all two-state topologies.
"""

from qdimred.classical import two_state_search
from qdimred.imps import canonicalize, memory_costs
from qdimred.processes import DysonSpec, dyson_ising_model, qsample_imps
from qdimred.truncation import TruncationConfig, variational_truncate

print("  L     T    C_q     quantum QFDR   classical FDR   ratio")
for L in (3, 5):
    for T in (0.5, 2.0, 20.0):
        model = dyson_ising_model(DysonSpec(L, T))
        target = canonicalize(qsample_imps(model))
        quantum = variational_truncate(target, TruncationConfig(d_tilde=2, raise_on_failure=False))
        classical = two_state_search(model, grid_steps=41, refine_iters=20)
        print(f"  {L}  {T:5.1f}  {memory_costs(target)[0]:.3f}   {quantum.qfdr:.3e}      "
              f"{classical.rate:.3e}       {classical.rate / quantum.qfdr:6.1f}")

print("\nAt high temperature the qubit wins by an order of magnitude or more.")
print("Near the ordered regime both models are close, since long aligned runs")
print("are already well described by two classical states.")
