"""Reduced-memory classical baselines.

Two constructions are provided: contiguous coarse-graining of cyclic-walk
states into ``d_c`` blocks, and an exhaustive search over every two-state,
two-symbol unifilar model (six topologies with two emission parameters
each).  The coarse-graining value is an achievable rate for that family
(``"construction value"``); the two-state search is the estimate of the
best classical rate at memory dimension two (``"lower-bound estimate"``).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from .divergences import DivergenceReport, _pair_distribution, kl_rate_exact, statistical_fdr
from .errors import NumericalError, PreconditionError, StructuralError
from .processes import UnifilarModel

CONSTRUCTION = "construction value"
LOWER_BOUND = "lower-bound estimate"
TIE_TOL = 1e-14


# ----------------------------------------------------------- coarse graining


@dataclass(frozen=True)
class CoarseGrainSpec:
    """Contiguous partition of ``N`` segments into ``d_c`` blocks.

    With ``K = N // d_c`` and ``r = N - K d_c`` the first ``r`` blocks hold
    ``K + 1`` segments and the rest hold ``K``.
    """

    N: int
    d_c: int

    def __post_init__(self):
        if not 1 <= self.d_c <= self.N:
            raise StructuralError(f"need 1 <= d_c <= N, got d_c={self.d_c}, N={self.N}")

    @property
    def K(self) -> int:
        return self.N // self.d_c

    @property
    def r(self) -> int:
        return self.N - self.K * self.d_c

    @property
    def partition(self) -> list[range]:
        blocks, start = [], 0
        for j in range(self.d_c):
            size = self.K + 1 if j < self.r else self.K
            blocks.append(range(start, start + size))
            start += size
        return blocks

    def block_of(self) -> np.ndarray:
        out = np.empty(self.N, dtype=int)
        for j, block in enumerate(self.partition):
            out[list(block)] = j
        return out


def _check_walk(m: UnifilarModel):
    n = m.n_states
    if m.n_symbols != n or np.any(m.next[m.emit > 0] != np.nonzero(m.emit > 0)[1]):
        raise PreconditionError("expected a walk model whose emitted symbol is the next state")
    shifted = np.stack([np.roll(m.emit[0], j) for j in range(n)])
    if np.max(np.abs(shifted - m.emit)) > 1e-10:
        raise PreconditionError("walk rows are not cyclic shifts of each other")


def coarse_grain_walk(m: UnifilarModel, d_c: int) -> UnifilarModel:
    """Merge contiguous walk segments into ``d_c`` memory states.

    ``P(y | block)`` averages ``P(y | S_k)`` over the block's segments with
    their (uniform) stationary weights, and the next state is the block
    containing the landing segment.  The alphabet is unchanged.
    """
    _check_walk(m)
    spec = CoarseGrainSpec(m.n_states, d_c)
    block = spec.block_of()
    pi = m.stationary
    emit = np.zeros((d_c, m.n_symbols))
    for j, seg in enumerate(spec.partition):
        idx = list(seg)
        w = pi[idx] / pi[idx].sum()
        emit[j] = w @ m.emit[idx]
    emit = emit / emit.sum(axis=1, keepdims=True)
    nxt = np.broadcast_to(block, (d_c, m.n_symbols)).copy()
    return UnifilarModel(emit, nxt, m.alphabet)


def walk_classical_rate(m: UnifilarModel, d_c: int) -> DivergenceReport:
    """Statistical FDR between a walk and its contiguous ``d_c``-state coarse-graining."""
    rep = statistical_fdr(m, coarse_grain_walk(m, d_c))
    return DivergenceReport(rep.rate, rep.method, rep.mu0, rep.mu1,
                            extra={**rep.extra, "label": CONSTRUCTION, "d_c": d_c})


# ----------------------------------------------------------- two-state search


@dataclass(frozen=True)
class TopologySpec:
    """Two-state, two-symbol unifilar topology.

    ``next[j][x]`` is the successor of state ``j`` on symbol ``x``; the free
    parameters are ``P(0 | state 0)`` and ``P(0 | state 1)``.
    """

    id: int
    next: tuple

    def model(self, params) -> UnifilarModel:
        a, b = (float(v) for v in params)
        emit = np.array([[a, 1.0 - a], [b, 1.0 - b]])
        return UnifilarModel(emit, np.array(self.next), ("0", "1"))


def two_state_topologies() -> list[TopologySpec]:
    """All strongly connected topologies, one representative per state relabeling.

    Both symbols are allowed from both states (a symbol can still be switched
    off by a parameter at 0 or 1).
    """
    seen, out = set(), []
    for flat in itertools.product((0, 1), repeat=4):
        nxt = ((flat[0], flat[1]), (flat[2], flat[3]))
        if 1 not in nxt[0] or 0 not in nxt[1]:
            continue  # not strongly connected
        swapped = tuple(tuple(1 - t for t in nxt[1 - j]) for j in range(2))
        key = min(nxt, swapped)
        if key in seen:
            continue
        seen.add(key)
        out.append(TopologySpec(len(out) + 1, nxt))
    return out


@dataclass(frozen=True)
class SearchResult:
    topology: TopologySpec
    params: tuple
    rate: float
    objective: str
    grid_steps: int
    refine_iters: int
    per_topology: tuple
    label: str = LOWER_BOUND

    @property
    def model(self) -> UnifilarModel:
        return self.topology.model(self.params)

    def to_json(self) -> str:
        return json.dumps({
            "topology_id": self.topology.id, "next": [list(r) for r in self.topology.next],
            "params": list(self.params), "rate": self.rate, "objective": self.objective,
            "grid_steps": self.grid_steps, "refine_iters": self.refine_iters,
            "per_topology": [list(t) for t in self.per_topology], "label": self.label,
        })


class _FdrFamily:
    """Mixed transfer matrices of ``p`` against one two-state topology.

    The operator acts on ``X`` of shape ``(d_p, 2)``; block ``k <- j`` is
    ``sum_{x: next(j, x) = k} sqrt(P(x|j)) A^x`` with ``A^x`` the sparse
    q-sample matrices of ``p``.
    """

    def __init__(self, p: UnifilarModel, topo: TopologySpec):
        self.d = p.n_states
        self.topo = topo
        self.mats = []
        for x in range(2):
            j = np.nonzero(p.next[:, x] >= 0)[0]
            self.mats.append(sp.csr_matrix((np.sqrt(p.emit[j, x]), (p.next[j, x], j)),
                                           shape=(self.d, self.d)))

    def weights(self, a, b):
        """``w[j][x]``: square-root emission weights of the candidate."""
        a, b = np.asarray(a, float), np.asarray(b, float)
        return ((np.sqrt(a), np.sqrt(1 - a)), (np.sqrt(b), np.sqrt(1 - b)))

    def matrix(self, a, b) -> sp.csr_matrix:
        w = self.weights(a, b)
        blocks = [[None, None], [None, None]]
        for j in range(2):
            for x in range(2):
                k = self.topo.next[j][x]
                term = float(w[j][x]) * self.mats[x]
                blocks[k][j] = term if blocks[k][j] is None else blocks[k][j] + term
        for k in range(2):
            for j in range(2):
                if blocks[k][j] is None:
                    blocks[k][j] = sp.csr_matrix((self.d, self.d))
        return sp.bmat(blocks, format="csr")

    def rate(self, a, b, v0=None):
        m = self.matrix(a, b)
        n = m.shape[0]
        if n <= 64:
            w = np.linalg.eigvals(m.toarray())
            mu = float(np.max(np.abs(w)))
            vec = None
        else:
            try:
                w, v = eigs(m, k=1, which="LM", v0=v0, tol=1e-14, maxiter=100_000)
            except ArpackNoConvergence as exc:
                raise NumericalError("two-state search eigen solve failed") from exc
            mu, vec = abs(w[0]), np.abs(v[:, 0])
        return (max(0.0, -0.5 * math.log2(mu)) if mu > 0 else math.inf), vec

    def grid_rates(self, a_vals, b_vals, iters=4000, tol=1e-10):
        """Approximate rates on a grid by a batched shifted power iteration."""
        aa, bb = np.meshgrid(a_vals, b_vals, indexing="ij")
        aa, bb = aa.ravel(), bb.ravel()
        w = self.weights(aa, bb)
        g = aa.size
        v = np.ones((2, self.d, g)) / math.sqrt(2 * self.d)
        est = np.zeros(g)
        for _ in range(iters):
            prod = [[self.mats[x] @ v[j] for x in range(2)] for j in range(2)]
            new = v.copy()  # shift by the identity: same Perron vector, aperiodic
            for j in range(2):
                for x in range(2):
                    new[self.topo.next[j][x]] += w[j][x][None, :] * prod[j][x]
            norm = np.sqrt(np.sum(new * new, axis=(0, 1)))
            new_est = norm  # ||(E + I) v|| for unit v
            v = new / norm
            done = np.max(np.abs(new_est - est)) < tol
            est = new_est
            if done:
                break
        mu = np.clip(est - 1.0, 1e-300, None)
        return np.maximum(0.0, -0.5 * np.log2(mu)).reshape(len(a_vals), len(b_vals))


class _KlFamily:
    """KL rate of ``p`` against one topology; the joint-memory weights do not
    depend on the emission parameters, so the rate is closed form on the grid."""

    def __init__(self, p: UnifilarModel, topo: TopologySpec):
        self.p = p
        self.topo = topo
        probe = topo.model((0.5, 0.5))
        mu = _pair_distribution(p, probe)  # (d_p, 2)
        self.w = mu.T @ p.emit              # w[k, x] = sum_j mu(j,k) P(x|j)
        pe = p.emit
        mask = pe > 0
        self.neg_entropy = float(np.sum(
            mu.sum(axis=1) * np.sum(np.where(mask, pe * np.log2(np.where(mask, pe, 1.0)), 0.0),
                                    axis=1)))

    def rate(self, a, b, v0=None):
        q = np.array([[a, 1 - a], [b, 1 - b]])
        val = self.neg_entropy
        for k in range(2):
            for x in range(2):
                if self.w[k, x] > 1e-15:
                    if q[k, x] <= 0:
                        return math.inf, None
                    val -= self.w[k, x] * math.log2(q[k, x])
        return max(val, 0.0), None

    def grid_rates(self, a_vals, b_vals):
        aa, bb = np.meshgrid(a_vals, b_vals, indexing="ij")
        q = [[aa, 1 - aa], [bb, 1 - bb]]
        val = np.full(aa.shape, self.neg_entropy)
        with np.errstate(divide="ignore"):
            for k in range(2):
                for x in range(2):
                    if self.w[k, x] > 1e-15:
                        val = val - self.w[k, x] * np.log2(q[k][x])
        return np.where(np.isfinite(val), np.maximum(val, 0.0), np.inf)


def two_state_search(p: UnifilarModel, objective: str = "fdr", grid_steps: int = 101,
                     refine_iters: int = 40) -> SearchResult:
    """Best two-state unifilar approximation of a binary process.

    For each topology the two parameters are scanned on the grid
    ``k / (grid_steps + 1)``; the best grid point is then refined by
    coordinate descent with a halving step (parameters may reach 0 or 1
    during refinement, which switches a transition off).  Ties go to the
    lowest topology id (rates within ``TIE_TOL`` count as equal).

    Parameters
    ----------
    objective : {"fdr", "kl"}
        Statistical FDR, or KL rate (infinite where supports disagree).

    Raises
    ------
    NumericalError
        If every candidate has infinite KL rate.
    """
    if p.n_symbols != 2:
        raise StructuralError("the two-state search needs a binary alphabet")
    if objective not in ("fdr", "kl"):
        raise ValueError("objective must be 'fdr' or 'kl'")
    grid = np.arange(1, grid_steps + 1) / (grid_steps + 1)
    per_topology = []
    best = None
    for topo in two_state_topologies():
        fam = _FdrFamily(p, topo) if objective == "fdr" else _KlFamily(p, topo)
        rates = fam.grid_rates(grid, grid)
        i, j = np.unravel_index(int(np.argmin(rates)), rates.shape)
        point = [float(grid[i]), float(grid[j])]
        cur, vec = fam.rate(*point)
        step = 1.0 / (grid_steps + 1)
        for _ in range(refine_iters):
            for c in range(2):
                for sign in (-1.0, 1.0):
                    trial = list(point)
                    trial[c] = min(1.0, max(0.0, trial[c] + sign * step))
                    if trial == point:
                        continue
                    val, v2 = fam.rate(*trial, v0=vec)
                    if val < cur:
                        cur, point, vec = val, trial, v2
            step /= 2
        per_topology.append((topo.id, point[0], point[1], cur))
        cand = (cur, topo.id, tuple(point))
        if best is None or cur < best[0][0] - TIE_TOL:
            best = (cand, topo)
    (rate, _, params), topo = best
    if not math.isfinite(rate):
        raise NumericalError("every two-state candidate has an infinite KL rate")
    return SearchResult(topo, params, float(rate), objective, grid_steps, refine_iters,
                        tuple(per_topology))


def classical_kl(p: UnifilarModel, model: UnifilarModel) -> DivergenceReport:
    """KL rate of ``p`` against a classical candidate (joint-memory chain)."""
    return kl_rate_exact(p, model)
