"""Executable generators from left-canonical site tensors.

A left-canonical tensor ``{A^x}`` is a set of Kraus operators.  Dilating
it gives a unitary ``U`` on memory (first factor) times output register
(second factor) with ``U |j>|0> = sum_x (A^x |j>) |x>``.  Measuring the
output after each application reproduces the process.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ImpossibleHistoryError, NumericalError, PreconditionError, StructuralError
from .imps import SiteTensor, TransferMatrix, leading_eig
from .serialize import complex_from_obj, complex_to_obj

CIRCUIT_TOL = 1e-10
GS_SKIP = 1e-12
FORMAT_VERSION = 1


@dataclass(frozen=True)
class CircuitBundle:
    """Kraus set, dilated unitary and stationary memory state.

    Attributes
    ----------
    kraus : ndarray, shape (n_symbols, d, d)
    unitary : ndarray, shape (d * n_symbols, d * n_symbols)
        Row/column index ``j * n_symbols + x`` for memory ``j``, output ``x``.
    rho : ndarray, shape (d, d)
    alphabet : tuple of str
    """

    kraus: np.ndarray
    unitary: np.ndarray
    rho: np.ndarray
    alphabet: tuple

    @property
    def d(self) -> int:
        return self.kraus.shape[1]

    @property
    def n_symbols(self) -> int:
        return self.kraus.shape[0]

    def apply_channel(self, rho) -> np.ndarray:
        return np.einsum("xab,bc,xdc->ad", self.kraus, rho, self.kraus.conj())

    # -------------------------------------------------------------- checks

    def completeness_error(self) -> float:
        s = np.einsum("xba,xbc->ac", self.kraus.conj(), self.kraus)
        return float(np.linalg.norm(s - np.eye(self.d)))

    def unitarity_error(self) -> float:
        u = self.unitary
        return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))

    def column_error(self) -> float:
        """Distance between the ``|j>|0>`` columns and the Kraus set."""
        cols = self.unitary[:, :: self.n_symbols]
        return float(np.max(np.abs(cols - _kraus_columns(self.kraus)))) if self.d else 0.0

    def channel_error(self) -> float:
        """Worst gap between the unitary-with-ancilla map and the Kraus channel on a matrix basis."""
        d, n = self.d, self.n_symbols
        worst = 0.0
        for a in range(d):
            for b in range(d):
                e = np.zeros((d, d))
                e[a, b] = 1.0
                anc = np.zeros((n, n))
                anc[0, 0] = 1.0
                big = self.unitary @ np.kron(e, anc) @ self.unitary.conj().T
                reduced = np.einsum("axbx->ab", big.reshape(d, n, d, n))
                worst = max(worst, float(np.max(np.abs(reduced - self.apply_channel(e)))))
        return worst

    def rho_error(self) -> float:
        r = self.rho
        herm = np.max(np.abs(r - r.conj().T))
        fixed = np.max(np.abs(self.apply_channel(r) - r))
        neg = max(0.0, -float(np.min(np.linalg.eigvalsh((r + r.conj().T) / 2))))
        return float(max(herm, fixed, neg, abs(np.trace(r) - 1)))

    def word_probabilities(self, length: int) -> np.ndarray:
        """``Tr(A^w rho A^w^dagger)`` for every word, shape ``(n_symbols,) * length``."""
        states = self.rho[None]
        for _ in range(length):
            states = np.einsum("xab,wbc,xdc->wxad", self.kraus, states, self.kraus.conj())
            states = states.reshape(-1, self.d, self.d)
        probs = np.real(np.trace(states, axis1=1, axis2=2))
        return probs.reshape((self.n_symbols,) * length)

    def check(self, tol: float = CIRCUIT_TOL) -> dict:
        """All invariant residuals; raises when one exceeds ``tol``."""
        report = {
            "completeness": self.completeness_error(),
            "unitarity": self.unitarity_error(),
            "columns": self.column_error(),
            "channel": self.channel_error(),
            "rho": self.rho_error(),
        }
        bad = {k: v for k, v in report.items() if not v <= tol}
        if bad:
            raise NumericalError(f"circuit invariants violated: {bad}", achieved=max(bad.values()))
        return report

    @cached_property
    def site_tensor(self) -> SiteTensor:
        return SiteTensor(self.kraus, self.alphabet)

    # ------------------------------------------------------- serialization

    def to_json(self) -> str:
        return json.dumps({
            "version": FORMAT_VERSION,
            "d": self.d,
            "alphabet": list(self.alphabet),
            "unitary": complex_to_obj(self.unitary),
            "kraus": {s: complex_to_obj(self.kraus[k]) for k, s in enumerate(self.alphabet)},
            "rho": complex_to_obj(self.rho),
            "register_order": ["memory", "output"],
        })

    @classmethod
    def from_json(cls, text: str) -> "CircuitBundle":
        obj = json.loads(text)
        if obj.get("version") != FORMAT_VERSION:
            raise StructuralError(f"unsupported circuit format version {obj.get('version')}")
        alphabet = tuple(str(s) for s in obj["alphabet"])
        kraus = np.stack([complex_from_obj(obj["kraus"][s]) for s in alphabet])
        return cls(kraus, complex_from_obj(obj["unitary"]), complex_from_obj(obj["rho"]), alphabet)


def _kraus_columns(kraus) -> np.ndarray:
    """Column ``j`` holds ``sum_x (A^x |j>) |x>``, flattened memory-major."""
    n, d, _ = kraus.shape
    return np.transpose(kraus, (1, 0, 2)).reshape(d * n, d)


def _stationary_state(kraus) -> np.ndarray:
    a = SiteTensor(kraus)
    res = leading_eig(TransferMatrix(a.operand, a.operand), "right")
    r = res.vector
    r = (r + r.conj().T) / 2
    r = r / np.trace(r)
    if np.real(np.trace(r)) < 0:
        r = -r
    r = r.real.astype(kraus.dtype) if np.isrealobj(kraus) else r
    return r


def dilate(a_l) -> CircuitBundle:
    """Dilate a left-canonical tensor into a unitary circuit.

    The columns on ``|j>|0>`` are fixed by the Kraus operators; the other
    columns are completed by Gram-Schmidt on canonical basis vectors in
    index order, skipping vectors whose residual is below ``1e-12``.

    Raises
    ------
    PreconditionError
        If the tensor is not left-canonical within ``1e-10``.
    NumericalError
        If the completion runs out of independent vectors.
    """
    t = a_l if isinstance(a_l, SiteTensor) else SiteTensor(np.asarray(a_l))
    kraus = np.asarray(t.matrices)
    n, d, _ = kraus.shape
    eye_err = np.linalg.norm(np.einsum("xba,xbc->ac", kraus.conj(), kraus) - np.eye(d))
    if eye_err > CIRCUIT_TOL:
        raise PreconditionError(f"tensor is not left-canonical (error {eye_err:.2e})")
    dim = d * n
    dtype = np.result_type(kraus.dtype, float)
    u = np.zeros((dim, dim), dtype=dtype)
    fixed = _kraus_columns(kraus)
    u[:, ::n] = fixed
    basis = [fixed[:, j] for j in range(d)]
    free = [c for c in range(dim) if c % n != 0]
    seeds = iter(range(dim))
    for col in free:
        for s in seeds:
            v = np.zeros(dim, dtype=dtype)
            v[s] = 1.0
            for _ in range(2):  # re-orthogonalize once for accuracy
                for b in basis:
                    v = v - b * np.vdot(b, v)
            nrm = np.linalg.norm(v)
            if nrm >= GS_SKIP:
                break
        else:
            raise NumericalError("Gram-Schmidt completion ran out of basis vectors")
        v = v / nrm
        basis.append(v)
        u[:, col] = v
    return CircuitBundle(kraus, u, _stationary_state(kraus), tuple(t.symbols))


def encode(bundle: CircuitBundle, past) -> np.ndarray:
    """Memory state conditioned on a past, oldest symbol first.

    Raises
    ------
    ImpossibleHistoryError
        If the past has zero probability.
    """
    index = {s: k for k, s in enumerate(bundle.alphabet)}
    rho = bundle.rho
    for sym in past:
        key = str(sym)
        if key not in index:
            raise StructuralError(f"symbol {sym!r} not in alphabet {bundle.alphabet}")
        a = bundle.kraus[index[key]]
        rho = a @ rho @ a.conj().T
        tr = float(np.real(np.trace(rho)))
        if tr < 1e-300:
            raise ImpossibleHistoryError(f"past {tuple(past)} has zero probability")
        rho = rho / tr
    return rho


def simulate_measured(bundle: CircuitBundle, length: int, seed=None) -> np.ndarray:
    """Sample ``length`` symbol indices by measuring the output register each step."""
    rng = np.random.default_rng(seed)
    out = np.empty(length, dtype=int)
    rho = bundle.rho
    kraus = bundle.kraus
    for t in range(length):
        branches = np.einsum("xab,bc,xdc->xad", kraus, rho, kraus.conj())
        probs = np.clip(np.real(np.trace(branches, axis1=1, axis2=2)), 0.0, None)
        x = int(rng.choice(len(probs), p=probs / probs.sum()))
        out[t] = x
        rho = branches[x] / probs[x]
    return out
