"""Unifilar generators of classical processes and their q-sample tensors.

Two families are built in: cyclic random walks on a ring cut into ``N``
equal intervals, and Dyson-Ising chains with power-law couplings truncated
at range ``L``.  Any other finite unifilar model can be supplied directly as
a :class:`UnifilarModel`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import integrate, special
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from .errors import ConvergenceError, NumericalError, ResourceError, StructuralError
from .imps import SiteTensor

ROW_TOL = 1e-12
STATIONARY_TOL = 1e-10


def _stationary(transition: np.ndarray) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix."""
    d = transition.shape[0]
    if d == 1:
        return np.ones(1)
    if d <= 512:
        w, v = np.linalg.eig(transition.T)
        k = int(np.argmin(np.abs(w - 1.0)))
        pi = np.real(v[:, k])
    else:
        mat = sp.csr_matrix(transition.T)
        try:
            _, v = eigs(mat, k=1, sigma=None, which="LM", tol=1e-14, maxiter=100_000)
        except ArpackNoConvergence as exc:
            raise ConvergenceError("stationary distribution solve did not converge") from exc
        pi = np.real(v[:, 0])
    pi = pi / pi.sum()
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class UnifilarModel:
    """Finite-state generator with a deterministic memory update.

    Parameters
    ----------
    emit : array_like, shape (n_states, n_symbols)
        ``emit[j, x] = P(x | j)``.
    next : array_like of int, shape (n_states, n_symbols)
        ``next[j, x]`` is the state after emitting ``x`` from ``j``;
        ``-1`` marks transitions with zero probability.
    alphabet : sequence of str, optional
    stationary : array_like, optional
        Computed from the induced state chain when omitted.
    """

    emit: np.ndarray
    next: np.ndarray
    alphabet: tuple = None
    stationary: np.ndarray = field(default=None)

    def __post_init__(self):
        emit = np.array(self.emit, dtype=float)
        nxt = np.array(self.next, dtype=int)
        if emit.ndim != 2 or emit.shape != nxt.shape:
            raise StructuralError(f"emit {emit.shape} and next {nxt.shape} must be equal 2-d shapes")
        n_states, n_sym = emit.shape
        if np.any(emit < 0) or not np.all(np.isfinite(emit)):
            raise StructuralError("emission probabilities must be finite and non-negative")
        rows = emit.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > ROW_TOL):
            worst = float(np.max(np.abs(rows - 1.0)))
            raise StructuralError(f"emission rows must sum to one (worst deviation {worst:.3g})")
        support = emit > 0
        if np.any(support & ((nxt < 0) | (nxt >= n_states))):
            raise StructuralError("next state undefined on a transition with positive probability")
        nxt = np.where(support, nxt, -1)
        alphabet = self.alphabet
        if alphabet is None:
            alphabet = tuple(str(k) for k in range(n_sym))
        alphabet = tuple(str(a) for a in alphabet)
        if len(alphabet) != n_sym or len(set(alphabet)) != n_sym:
            raise StructuralError("alphabet must list each of the emission columns once")
        for arr in (emit, nxt):
            arr.setflags(write=False)
        object.__setattr__(self, "emit", emit)
        object.__setattr__(self, "next", nxt)
        object.__setattr__(self, "alphabet", alphabet)
        if self.stationary is None:
            pi = _stationary(self.transition_matrix())
        else:
            pi = np.array(self.stationary, dtype=float)
            if pi.shape != (n_states,) or np.any(pi < -STATIONARY_TOL):
                raise StructuralError("stationary distribution has the wrong shape or sign")
            if abs(pi.sum() - 1.0) > STATIONARY_TOL:
                raise StructuralError("stationary distribution must sum to one")
            drift = np.max(np.abs(pi @ self.transition_matrix() - pi))
            if drift > STATIONARY_TOL:
                raise StructuralError(f"supplied distribution is not stationary (drift {drift:.3g})")
        pi.setflags(write=False)
        object.__setattr__(self, "stationary", pi)

    @property
    def n_states(self) -> int:
        return self.emit.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.emit.shape[1]

    def transition_matrix(self) -> np.ndarray:
        """Induced state chain ``T[j, k] = sum_x P(x|j) [next(x, j) = k]``."""
        t = np.zeros((self.n_states, self.n_states))
        j, x = np.nonzero(self.next >= 0)
        np.add.at(t, (j, self.next[j, x]), self.emit[j, x])
        return t

    def word_probability(self, word, start=None) -> float:
        """``P(word)`` from the stationary state (or from state ``start``)."""
        if start is None:
            return float(sum(self.stationary[j] * self.word_probability(word, j)
                             for j in range(self.n_states) if self.stationary[j] > 0))
        p, j = 1.0, int(start)
        for x in word:
            p *= self.emit[j, x]
            if p == 0.0:
                return 0.0
            j = self.next[j, x]
        return p

    def sequence_probabilities(self, length: int) -> np.ndarray:
        """Stationary probabilities of all words, shape ``(n_symbols,) * length``."""
        if self.n_symbols ** length > 10**7:
            raise ResourceError("too many sequences to enumerate")
        # forward algorithm over (word, state) pairs
        mass = self.stationary.copy()[None, :]
        for _ in range(length):
            new = np.zeros((mass.shape[0] * self.n_symbols, self.n_states))
            for x in range(self.n_symbols):
                rows = np.arange(mass.shape[0]) * self.n_symbols + x
                j = np.nonzero(self.next[:, x] >= 0)[0]
                contrib = mass[:, j] * self.emit[j, x][None, :]
                np.add.at(new, (rows[:, None], self.next[j, x][None, :]), contrib)
            mass = new
        return mass.sum(axis=1).reshape((self.n_symbols,) * length)

    def to_json(self) -> str:
        return json.dumps({
            "states": self.n_states,
            "alphabet": list(self.alphabet),
            "emit": self.emit.tolist(),
            "next": self.next.tolist(),
            "stationary": self.stationary.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "UnifilarModel":
        obj = json.loads(text)
        emit = np.asarray(obj["emit"], dtype=float)
        if emit.shape[0] != obj["states"]:
            raise StructuralError("'states' disagrees with the emission table")
        return cls(emit, np.asarray(obj["next"], dtype=int), tuple(obj["alphabet"]),
                   obj.get("stationary"))


def iid_model(probs, alphabet=None) -> UnifilarModel:
    """Single-state model emitting i.i.d. symbols."""
    probs = np.asarray(probs, dtype=float)[None, :]
    return UnifilarModel(probs, np.zeros_like(probs, dtype=int), alphabet)


def coin(p: float) -> UnifilarModel:
    """Biased coin with ``P(0) = p``."""
    return iid_model([p, 1.0 - p])


def qsample_imps(m: UnifilarModel) -> SiteTensor:
    """Zero-phase q-sample tensor ``A^x[k, j] = sqrt(P(x|j)) [next(x, j) = k]``."""
    d, n = m.n_states, m.n_symbols
    a = np.zeros((n, d, d))
    j, x = np.nonzero(m.next >= 0)
    a[x, m.next[j, x], j] = np.sqrt(m.emit[j, x])
    return SiteTensor(a, m.alphabet)


# ---------------------------------------------------------------- cyclic walks


@dataclass(frozen=True)
class WalkSpec:
    """Cyclic random walk discretized into ``N`` intervals.

    ``dist`` is ``"uniform"`` (shift uniform on ``[-width, width]``) or
    ``"normal"`` (zero-mean Gaussian shift with standard deviation ``width``).
    """

    N: int
    dist: str = "uniform"
    width: float = 0.1
    quadrature_tol: float = 1e-12

    def __post_init__(self):
        if self.N < 2:
            raise StructuralError("a walk needs at least two intervals")
        if self.N & (self.N - 1):
            raise StructuralError(f"N must be a power of two, got {self.N}")
        if self.dist not in ("uniform", "normal"):
            raise StructuralError(f"unknown shift distribution {self.dist!r}")
        if not self.width > 0:
            raise StructuralError("shift width must be positive")


def _tail_integral(x, dist, width):
    """``H(x)`` such that ``int_{-inf}^x F = max(x, 0) + H(x)`` for the shift CDF ``F``."""
    ax = np.abs(x)
    if dist == "uniform":
        return np.where(ax < width, (width - ax) ** 2 / (4.0 * width), 0.0)
    t = ax / width
    return width * np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi) - ax * special.ndtr(-t)


def _walk_row(spec: WalkSpec) -> np.ndarray:
    """``P(S_m | S_0)`` for offsets ``m = 0..N-1`` in closed form.

    With ``y`` uniform in its interval, the landing probability is the
    second difference of the integrated CDF; splitting off the ramp
    ``max(x, 0)`` leaves the exact no-shift triangle kernel plus a smooth,
    decaying correction, which avoids cancellation for far offsets.
    """
    n = spec.N
    h = 1.0 / n
    reach = spec.width if spec.dist == "uniform" else 40.0 * spec.width
    images = int(math.ceil(reach + 2 * h)) + 1
    row = np.zeros(n)
    for m in range(n):
        offsets = m + n * np.arange(-images, images + 1)
        tri = np.clip(1.0 - np.abs(offsets), 0.0, None)
        a = offsets * h
        second = (_tail_integral(a + h, spec.dist, spec.width)
                  - 2.0 * _tail_integral(a, spec.dist, spec.width)
                  + _tail_integral(a - h, spec.dist, spec.width))
        row[m] = np.sum(tri) + n * np.sum(second)
    row = np.clip(row, 0.0, None)
    return row / row.sum()


def _walk_row_quad(spec: WalkSpec) -> np.ndarray:
    """Same row by adaptive quadrature of the shift density (cross-check)."""
    n = spec.N
    h = 1.0 / n
    if spec.dist == "uniform":
        def cdf(x):
            return np.clip((x + spec.width) / (2 * spec.width), 0.0, 1.0)
    else:
        def cdf(x):
            return special.ndtr(x / spec.width)
    reach = spec.width if spec.dist == "uniform" else 40.0 * spec.width
    images = int(math.ceil(reach + 2 * h)) + 1
    row = np.zeros(n)
    worst = 0.0
    for m in range(n):
        total = 0.0
        for k in range(-images, images + 1):
            lo = (m + n * k) * h

            def f(u, lo=lo):
                return cdf(lo + h - u) - cdf(lo - u)
            val, err = integrate.quad(f, 0.0, h, epsabs=spec.quadrature_tol * h,
                                      epsrel=spec.quadrature_tol, limit=200)
            total += val
            worst = max(worst, err * n)
        row[m] = n * total
    if worst > max(spec.quadrature_tol, 1e-13) * 10:
        raise NumericalError("quadrature did not reach the requested tolerance", achieved=worst)
    return row


def cyclic_walk_model(spec: WalkSpec, *, method: str = "closed_form") -> UnifilarModel:
    """Unifilar model of a discretized cyclic random walk.

    States and symbols are both the ``N`` intervals; the emitted symbol is
    the interval the walker lands in, which is also the next state.  The
    stationary distribution is uniform.
    """
    if method == "closed_form":
        row = _walk_row(spec)
    elif method == "quad":
        row = _walk_row_quad(spec)
        row = np.clip(row, 0.0, None)
        row = row / row.sum()
    else:
        raise ValueError(f"unknown method {method!r}")
    n = spec.N
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    emit = row[idx]
    nxt = np.broadcast_to(np.arange(n), (n, n)).copy()
    return UnifilarModel(emit, nxt, tuple(str(k) for k in range(n)), np.full(n, 1.0 / n))


# ---------------------------------------------------------------- Dyson-Ising


MAX_DYSON_STATES = 4096


@dataclass(frozen=True)
class DysonSpec:
    """Dyson-Ising chain with couplings ``J0 / k**delta`` cut off beyond range ``L``."""

    L: int
    T: float
    J0: float = 1.0
    delta: float = 2.0

    def __post_init__(self):
        if self.L < 1:
            raise StructuralError("interaction range L must be at least 1")
        if not self.T > 0:
            raise StructuralError("temperature must be positive")


def spin_word(index: int, L: int) -> tuple:
    """Spins ``(s_1, ..., s_L)`` of a state index; ``s_L`` is the most recent spin."""
    return tuple(1 if (index >> (L - 1 - i)) & 1 else -1 for i in range(L))


def dyson_boltzmann(spec: DysonSpec) -> sp.csr_matrix:
    """Sparse Boltzmann transfer matrix between consecutive spin windows."""
    L = spec.L
    n = 2 ** L
    couplings = spec.J0 / np.arange(1, L + 1, dtype=float) ** spec.delta
    # spins[s, i] = s_{i+1}; the k-th most recent spin is column L - k
    bits = (np.arange(n)[:, None] >> (L - 1 - np.arange(L))[None, :]) & 1
    spins = 2 * bits - 1
    field_ = spins[:, ::-1] @ couplings          # sum_k J_k s_{L+1-k}
    rows, cols, vals = [], [], []
    for b, sigma in ((0, -1), (1, 1)):
        target = ((np.arange(n) << 1) & (n - 1)) | b
        rows.append(np.arange(n))
        cols.append(target)
        vals.append(np.exp(-sigma * field_ / spec.T))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def _perron(mat, side):
    """Positive Perron eigenpair of a non-negative irreducible matrix."""
    m = mat.T if side == "left" else mat
    n = m.shape[0]
    if n <= 256:
        w, v = np.linalg.eig(m.toarray())
        k = int(np.argmax(w.real))
        val, vec = w[k].real, v[:, k].real
    else:
        try:
            w, v = eigs(m, k=1, which="LR", tol=1e-14, maxiter=100_000)
        except ArpackNoConvergence as exc:
            raise ConvergenceError("Boltzmann transfer matrix eigen solve did not converge") from exc
        val, vec = w[0].real, v[:, 0].real
    vec = vec * np.sign(vec[np.argmax(np.abs(vec))])
    if np.any(vec <= 0):
        vec = np.abs(vec)
    return val, vec / np.linalg.norm(vec)


def dyson_ising_model(spec: DysonSpec, *, max_states: int = MAX_DYSON_STATES) -> UnifilarModel:
    """Order-``L`` Markov model of the Dyson-Ising thermal state.

    States are spin windows ``(s_1, ..., s_L)`` (binary index with the most
    recent spin as least significant bit), symbol ``0`` is spin ``-1`` and
    ``1`` is spin ``+1``.  Conditionals come from the Doob transform of the
    Boltzmann transfer matrix with its right Perron vector.
    """
    n = 2 ** spec.L
    if n > max_states:
        raise ResourceError(f"2^{spec.L} states exceed the cap of {max_states}")
    m = dyson_boltzmann(spec)
    eta, r = _perron(m, "right")
    _, l = _perron(m, "left")
    emit = np.zeros((n, 2))
    nxt = np.zeros((n, 2), dtype=int)
    coo = m.tocoo()
    for s, t, w in zip(coo.row, coo.col, coo.data):
        b = t & 1
        emit[s, b] = w * r[t] / (eta * r[s])
        nxt[s, b] = t
    emit = emit / emit.sum(axis=1, keepdims=True)
    pi = l * r
    pi = pi / pi.sum()
    return UnifilarModel(emit, nxt, ("0", "1"), _polish_stationary(emit, nxt, pi))


def _polish_stationary(emit, nxt, pi, sweeps=3):
    # a few power steps remove eigen-solver round-off from pi
    n = len(pi)
    for _ in range(sweeps):
        new = np.zeros(n)
        for b in range(emit.shape[1]):
            np.add.at(new, nxt[:, b], pi * emit[:, b])
        pi = new / new.sum()
    return pi


# ---------------------------------------------------------------- sampling


def sample_sequence(m: UnifilarModel, length: int, seed=None, *, start=None) -> np.ndarray:
    """Draw a trajectory of symbol indices, starting from the stationary state.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    rng = np.random.default_rng(seed)
    j = int(rng.choice(m.n_states, p=m.stationary)) if start is None else int(start)
    cum = np.cumsum(m.emit, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(length)
    out = np.empty(length, dtype=np.int64)
    for t in range(length):
        x = int(np.searchsorted(cum[j], u[t], side="right"))
        out[t] = x
        j = m.next[j, x]
    return out
