"""From a compressed model to a runnable circuit.

A left-canonical tensor is a set of Kraus operators.  Dilating them gives a
unitary acting on memory and one fresh output register per step.  We build
it for a one-qubit Dyson-Ising model, check it, steer the memory with a
given past and sample a long output string.
"""

import numpy as np

from qdimred.circuit import dilate, encode, simulate_measured
from qdimred.processes import DysonSpec, dyson_ising_model, qsample_imps
from qdimred.truncation import TruncationConfig, variational_truncate

model = dyson_ising_model(DysonSpec(3, 2.0))
res = variational_truncate(qsample_imps(model), TruncationConfig(d_tilde=2))
circuit = dilate(res.A_tilde)
print("unitary shape:", circuit.unitary.shape)
print("worst invariant residual:", max(circuit.check().values()))

memory = encode(circuit, list("000"))
print("memory after the past 000:\n", np.round(memory, 4))

samples = simulate_measured(circuit, 20_000, seed=1)
print("fraction of symbol 0:", np.mean(samples == 0).round(4))
print("one-step word probabilities:", np.round(circuit.word_probabilities(1), 4))
