"""Distortion measures between processes and between q-samples.

* QFDR: per-step decay of the overlap of two infinite q-samples, read off the
  leading eigenvalue ``mu_0`` of the mixed transfer matrix,
  ``R_F = -(1/2) log2 |mu_0|``.
* Statistical FDR: the same rate for the classical (Bhattacharyya) fidelity
  of the word distributions.  For unifilar models it equals the QFDR of the
  zero-phase q-samples.
* KL divergence rate, exactly for pairs of unifilar models and by Monte
  Carlo when the second process is given as an iMPS.

Enumeration oracles for all three are included for testing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _ops
from .errors import PreconditionError, ResourceError, StructuralError
from .imps import (
    MAX_SEQUENCES,
    SiteTensor,
    TransferMatrix,
    canonicalize,
    finite_qsample,
    leading_eig,
    uhlmann_fidelity,
)
from .processes import UnifilarModel, qsample_imps

NORM_TOL = 1e-10


@dataclass(frozen=True)
class DivergenceReport:
    """A divergence rate in bits per time step.

    ``method`` is ``"eigen"``, ``"closed_form"``, ``"monte_carlo"`` or
    ``"enumeration"``.  ``mu0``/``mu1`` are the leading and subleading
    eigenvalues for eigen-based rates; ``stderr`` is set for Monte Carlo.
    """

    rate: float
    method: str
    mu0: complex | None = None
    mu1: complex | None = None
    stderr: float | None = None
    seed: int | None = None
    flags: tuple = ()
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def pair(z):
            return None if z is None else [float(np.real(z)), float(np.imag(z))]
        return json.dumps({
            "method": self.method, "rate": self.rate, "mu0": pair(self.mu0),
            "mu1": pair(self.mu1), "stderr": self.stderr, "seed": self.seed,
            "flags": list(self.flags),
        })


def _operand(a):
    if isinstance(a, SiteTensor):
        return a.operand, a.symbols
    if isinstance(a, _ops.Operand):
        return a, None
    t = SiteTensor(np.asarray(a))
    return t.operand, t.symbols


def _check_normalized(op, label):
    eta = leading_eig(TransferMatrix(op, op), "right", subleading=False).value
    if abs(abs(eta) - 1.0) > NORM_TOL:
        raise PreconditionError(f"{label} is not normalized (leading eigenvalue {abs(eta):.12g})")


def qfdr(a, b, *, check: bool = True, subleading: bool = False) -> DivergenceReport:
    """Quantum fidelity divergence rate between two normalized iMPS.

    Parameters
    ----------
    a, b : SiteTensor
        Tensors over the same alphabet, each with unit leading transfer
        eigenvalue.  Bond dimensions may differ.
    check : bool
        Verify normalization of both inputs (one extra eigen solve each).
    """
    op_a, sym_a = _operand(a)
    op_b, sym_b = _operand(b)
    if op_a.n_symbols != op_b.n_symbols or (sym_a and sym_b and sym_a != sym_b):
        raise StructuralError("q-samples must share the same alphabet")
    if check:
        _check_normalized(op_a, "first tensor")
        _check_normalized(op_b, "second tensor")
    # put the larger tensor on top so the Arnoldi vector is (big, small)
    res = leading_eig(TransferMatrix(op_a, op_b), "right", subleading=subleading)
    mu0 = res.value
    rate = -0.5 * math.log2(abs(mu0)) if abs(mu0) > 0 else math.inf
    return DivergenceReport(max(rate, 0.0) if rate > -1e-12 else rate, "eigen",
                            mu0, res.subleading, extra={"residual": res.residual})


def statistical_fdr(p: UnifilarModel, q: UnifilarModel) -> DivergenceReport:
    """Statistical fidelity divergence rate between two unifilar models.

    Defined as ``-lim (1/2L) log2 sum_x sqrt(P(x) Q(x))`` over words of
    length ``L``; evaluated as the QFDR of the zero-phase q-samples.
    """
    if p.alphabet != q.alphabet:
        raise StructuralError("models must share the same alphabet")
    rep = qfdr(qsample_imps(p), qsample_imps(q), check=False, subleading=True)
    return DivergenceReport(rep.rate, "eigen", rep.mu0, rep.mu1, extra=rep.extra)


# ------------------------------------------------------------------ KL rates


def _check_map(p, q, state_map):
    state_map = np.asarray(state_map, dtype=int)
    if state_map.shape != (p.n_states,) or np.any((state_map < 0) | (state_map >= q.n_states)):
        raise StructuralError("state_map must send every state of p to a state of q")
    for j in range(p.n_states):
        k = state_map[j]
        for x in range(p.n_symbols):
            if p.emit[j, x] == 0:
                continue
            if q.emit[k, x] == 0:
                raise StructuralError(
                    f"q forbids symbol {p.alphabet[x]} from state {k} which p allows: KL is infinite")
            if state_map[p.next[j, x]] != q.next[k, x]:
                raise StructuralError(
                    f"state_map does not commute with the transitions at state {j}, symbol {x}")
    return state_map


def _pair_distribution(p, q):
    """Long-run distribution of the joint (p-state, q-state) chain driven by p.

    Starts from ``pi_p x pi_q`` and takes the Cesaro limit (via repeated
    squaring of the lazy chain), which covers non-synchronizing starts.
    """
    n = p.n_states * q.n_states
    if n > 4096:
        raise ResourceError("pair chain too large for the exact KL rate; pass a state_map")
    rows, cols, vals = [], [], []
    for j in range(p.n_states):
        for x in range(p.n_symbols):
            if p.emit[j, x] == 0:
                continue
            for k in range(q.n_states):
                k2 = q.next[k, x]
                if k2 < 0:
                    k2 = k  # q forbids x here; kept in place, flagged by the caller
                rows.append(j * q.n_states + k)
                cols.append(p.next[j, x] * q.n_states + k2)
                vals.append(p.emit[j, x])
    t = sp.csr_matrix((vals, (rows, cols)), shape=(n, n)).toarray()
    lazy = 0.5 * (t + np.eye(n))
    mu = np.outer(p.stationary, q.stationary).ravel()
    for _ in range(64):
        new = mu @ lazy
        lazy = lazy @ lazy
        if np.max(np.abs(new - mu)) < 1e-15:
            mu = new
            break
        mu = new
    return mu.reshape(p.n_states, q.n_states)


def kl_rate_exact(p: UnifilarModel, q: UnifilarModel, state_map=None) -> DivergenceReport:
    """Exact KL divergence rate ``D(p || q)`` in bits per step.

    With ``state_map`` (p-state to q-state, commuting with the transitions)
    the rate is ``sum_j pi_p(j) sum_x P(x|j) log2(P(x|j) / Q(x|map(j)))``.
    Without it the joint chain of both memories is used.

    Raises
    ------
    StructuralError
        When ``q`` assigns zero probability to a transition ``p`` uses
        (the rate is infinite) or the map is inconsistent.
    """
    if p.alphabet != q.alphabet:
        raise StructuralError("models must share the same alphabet")
    if state_map is not None:
        state_map = _check_map(p, q, state_map)
        weights = np.zeros((p.n_states, q.n_states))
        weights[np.arange(p.n_states), state_map] = p.stationary
    else:
        weights = _pair_distribution(p, q)
    rate = 0.0
    for j, k in zip(*np.nonzero(weights > 1e-15)):
        pj, qk = p.emit[j], q.emit[k]
        mask = pj > 0
        if np.any(qk[mask] == 0):
            raise StructuralError("q forbids a transition that p uses: KL rate is infinite")
        rate += weights[j, k] * float(np.sum(pj[mask] * np.log2(pj[mask] / qk[mask])))
    return DivergenceReport(max(rate, 0.0), "closed_form")


def _log2_p_batch(p: UnifilarModel, words: np.ndarray) -> np.ndarray:
    """Exact ``log2 P(word)`` for a batch of words (normalized forward algorithm)."""
    n, length = words.shape
    mats = []
    for x in range(p.n_symbols):
        j = np.nonzero(p.next[:, x] >= 0)[0]
        m = sp.csr_matrix((p.emit[j, x], (j, p.next[j, x])), shape=(p.n_states, p.n_states))
        mats.append(m.T.tocsr())  # alpha_new^T = M^T alpha^T
    alpha = np.tile(p.stationary, (n, 1))
    logp = np.zeros(n)
    for t in range(length):
        new = np.zeros_like(alpha)
        for x in np.unique(words[:, t]):
            sel = words[:, t] == x
            new[sel] = (mats[x] @ alpha[sel].T).T
        c = new.sum(axis=1)
        with np.errstate(divide="ignore"):
            logp += np.log2(c)
        alpha = new / np.where(c > 0, c, 1.0)[:, None]
    return logp


def kl_rate_mc(p: UnifilarModel, q_imps: SiteTensor, length: int = 2000, n_samples: int = 400,
               seed=42) -> DivergenceReport:
    """Monte Carlo estimate of ``D(p || q)`` where ``q`` is generated by an iMPS.

    Trajectories are drawn from ``p``; ``log2 P`` is exact and ``log2 Q``
    follows the Born rule ``Q(x) = Tr(A^x rho A^x^dagger)`` for the
    left-canonical form of ``q_imps`` and its steady state ``rho``, with the
    conditioned memory renormalized every step.  A trajectory whose ``Q``
    factor underflows below ``1e-300`` contributes ``+inf`` and is flagged.
    """
    from .processes import sample_sequence

    if len(q_imps.symbols) != p.n_symbols:
        raise StructuralError("models must share the same alphabet")
    bundle = canonicalize(q_imps, 0.0)
    a = bundle.A_l.matrices
    rho = bundle.rho
    children = np.random.SeedSequence(seed).spawn(n_samples)
    words = np.stack([sample_sequence(p, length, np.random.default_rng(c)) for c in children])
    logp = _log2_p_batch(p, words)
    sigma = np.broadcast_to(rho, (n_samples,) + rho.shape).astype(complex)
    logq = np.zeros(n_samples)
    dead = np.zeros(n_samples, dtype=bool)
    for t in range(length):
        m = a[words[:, t]]
        sigma = m @ sigma @ m.conj().transpose(0, 2, 1)
        c = np.real(np.trace(sigma, axis1=1, axis2=2))
        bad = c < 1e-300
        dead |= bad
        c = np.where(bad, 1.0, c)
        logq += np.log2(c)
        sigma = sigma / c[:, None, None]
    per = (logp - logq) / length
    per[dead] = math.inf
    flags = ("q_underflow",) if dead.any() else ()
    mean = float(math.fsum(per) / n_samples)
    stderr = float(np.std(per, ddof=1) / math.sqrt(n_samples)) if not dead.any() else math.inf
    return DivergenceReport(mean, "monte_carlo", stderr=stderr, seed=seed, flags=flags,
                            extra={"length": length, "n_samples": n_samples})


# ------------------------------------------------------------------ oracles


def _word_probs(model, length):
    if isinstance(model, UnifilarModel):
        return model.sequence_probabilities(length)
    return finite_qsample(model, length).probabilities


def _fit_rate(lengths, log2_values):
    slope = np.polyfit(np.asarray(lengths, float), np.asarray(log2_values, float), 1)[0]
    return -0.5 * slope


def brute_force_qfdr(a: SiteTensor, b: SiteTensor, lengths=(6, 8, 10)) -> float:
    """Rate from the exact fidelities of finite L-site reduced states (slope fit)."""
    logs = [math.log2(uhlmann_fidelity(finite_qsample(a, L), finite_qsample(b, L)))
            for L in lengths]
    return float(_fit_rate(lengths, logs))


def brute_force_statistical_fdr(p, q, lengths=(6, 8, 10)) -> float:
    """Rate from Bhattacharyya coefficients of enumerated word distributions.

    Each argument may be a :class:`UnifilarModel` or a :class:`SiteTensor`
    (whose Born-rule word distribution is used).
    """
    logs = []
    for L in lengths:
        n_sym = p.n_symbols if isinstance(p, UnifilarModel) else len(p.symbols)
        if n_sym ** L > MAX_SEQUENCES:
            raise ResourceError("too many sequences to enumerate")
        pp, qq = _word_probs(p, L), _word_probs(q, L)
        logs.append(math.log2(np.sum(np.sqrt(np.clip(pp, 0, None) * np.clip(qq, 0, None)))))
    return float(_fit_rate(lengths, logs))


def _support_word_probs(p: UnifilarModel, q: UnifilarModel, length: int):
    """Probabilities under ``p`` and ``q`` of every word that ``p`` can emit.

    Words are grown one symbol at a time with forward state masses, and
    prefixes that ``p`` forbids are dropped, so only the support is stored.
    """
    fp = p.stationary[None, :].copy()
    fq = q.stationary[None, :].copy()
    for _ in range(length):
        new_p, new_q = [], []
        for x in range(p.n_symbols):
            mp = np.zeros((fp.shape[0], p.n_states))
            for j in np.nonzero(p.emit[:, x] > 0)[0]:
                mp[:, p.next[j, x]] += fp[:, j] * p.emit[j, x]
            mq = np.zeros((fq.shape[0], q.n_states))
            for k in np.nonzero(q.emit[:, x] > 0)[0]:
                mq[:, q.next[k, x]] += fq[:, k] * q.emit[k, x]
            keep = mp.sum(axis=1) > 0
            new_p.append(mp[keep])
            new_q.append(mq[keep])
        fp, fq = np.concatenate(new_p), np.concatenate(new_q)
        if fp.shape[0] > MAX_SEQUENCES:
            raise ResourceError("too many sequences to enumerate")
    return fp.sum(axis=1), fq.sum(axis=1)


def block_kl(p, q, length: int) -> float:
    """``KL(P_L || Q_L)`` in bits between enumerated length-``L`` word distributions."""
    if isinstance(p, UnifilarModel) and isinstance(q, UnifilarModel):
        pp, qq = _support_word_probs(p, q, length)
    else:
        pp, qq = _word_probs(p, length).ravel(), _word_probs(q, length).ravel()
    mask = pp > 0
    if np.any(qq[mask] <= 0):
        return math.inf
    return float(np.sum(pp[mask] * np.log2(pp[mask] / qq[mask])))


def brute_force_kl_rate(p, q, length: int = 14) -> float:
    """Conditional block estimate ``KL_L - KL_{L-1}`` of the KL rate."""
    return block_kl(p, q, length) - block_kl(p, q, length - 1)
