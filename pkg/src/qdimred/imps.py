"""Infinite matrix product states: transfer matrices, canonical forms, q-samples.

Conventions
-----------
A site tensor holds one complex ``d x d`` matrix per output symbol.  The
matrix ``A[x]`` maps the memory before emitting ``x`` (column index) to the
memory afterwards (row index), so a word ``x_0 x_1 ... x_{L-1}`` is
generated by ``A[x_{L-1}] ... A[x_1] A[x_0]``.

* left canonical:  ``sum_x A_l[x]^dagger A_l[x] = I``  (Kraus operators of the
  memory channel ``rho -> sum_x A_l[x] rho A_l[x]^dagger``);
* right canonical: ``sum_x A_r[x] A_r[x]^dagger = I``;
* mixed gauge:     ``A_c = A_l C = C A_r`` with ``C`` diagonal, holding the
  square roots of the Schmidt spectrum.

The transfer matrix ``E = sum_x A[x] (x) conj(B[x])`` acts on ``d_A x d_B``
matrices.  Its right action is ``X -> sum_x A[x] X B[x]^dagger`` and its left
action is ``G -> sum_x B[x]^dagger G A[x]``; :func:`leading_eig` returns the
eigenvector in exactly these matrix shapes.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from . import _ops
from .errors import (
    ConvergenceError,
    InvalidStateError,
    ResourceError,
    StructuralError,
)

#: transfer matrices up to this linear size are diagonalized densely
DENSE_EIG_MAX = 256
#: dense materialization of a transfer matrix is refused above d = 64
DENSE_BUILD_MAX = 4096
#: leading eigenvalues closer than this (in modulus) are reported as degenerate
DEGENERACY_GAP = 1e-12
#: qsample enumeration limit on |X|^L
MAX_SEQUENCES = 10**7


@dataclass(frozen=True, eq=False)
class SiteTensor:
    """Per-symbol matrices ``{A^x}`` of a translation-invariant MPS.

    Parameters
    ----------
    matrices : array_like, shape (n_symbols, d, d)
        ``matrices[k]`` is the matrix of ``symbols[k]``.
    symbols : sequence of str, optional
        Ordered alphabet; defaults to ``"0", "1", ...``.
    """

    matrices: np.ndarray
    symbols: tuple = None

    def __post_init__(self):
        m = np.asarray(self.matrices)
        if m.ndim != 3 or m.shape[0] == 0:
            raise StructuralError(f"site tensor needs shape (n_symbols, d, d), got {m.shape}")
        if m.shape[1] != m.shape[2]:
            raise StructuralError(f"site matrices must be square, got {m.shape[1:]}")
        if not np.issubdtype(m.dtype, np.complexfloating):
            m = m.astype(float)
        if not np.all(np.isfinite(m)):
            raise StructuralError("site matrices contain non-finite entries")
        symbols = self.symbols
        if symbols is None:
            symbols = tuple(str(k) for k in range(m.shape[0]))
        symbols = tuple(str(s) for s in symbols)
        if len(symbols) != m.shape[0]:
            raise StructuralError(
                f"{len(symbols)} symbols for {m.shape[0]} matrices")
        if len(set(symbols)) != len(symbols):
            raise StructuralError("symbols must be distinct")
        m.setflags(write=False)
        object.__setattr__(self, "matrices", m)
        object.__setattr__(self, "symbols", symbols)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "SiteTensor":
        """Build from ``{symbol: matrix}`` (insertion order is the alphabet order)."""
        symbols = list(mapping)
        mats = [np.asarray(mapping[s]) for s in symbols]
        shapes = {m.shape for m in mats}
        if len(shapes) != 1:
            raise StructuralError(f"dimension mismatch among symbols: {sorted(shapes)}")
        return cls(np.stack(mats), tuple(symbols))

    @property
    def bond_dim(self) -> int:
        return self.matrices.shape[1]

    @property
    def n_symbols(self) -> int:
        return self.matrices.shape[0]

    def __getitem__(self, symbol):
        return self.matrices[self.symbols.index(str(symbol))]

    def as_dict(self) -> dict:
        return {s: self.matrices[k] for k, s in enumerate(self.symbols)}

    def scaled(self, factor) -> "SiteTensor":
        return SiteTensor(self.matrices * factor, self.symbols)

    @cached_property
    def operand(self) -> _ops.Operand:
        return _ops.Operand.from_array(self.matrices)


def _as_operand(a):
    if isinstance(a, SiteTensor):
        return a.operand
    if isinstance(a, _ops.Operand):
        return a
    return SiteTensor(np.asarray(a)).operand


class TransferMatrix:
    """Mixed transfer matrix ``sum_x A[x] (x) conj(B[x])``.

    The unmixed transfer matrix is the case ``B is A``.  Both factors may be
    large and sparse; the matrix is only materialized on request.
    """

    def __init__(self, top, bottom=None):
        self.top = _as_operand(top)
        self.bottom = self.top if bottom is None else _as_operand(bottom)
        if self.top.n_symbols != self.bottom.n_symbols:
            raise StructuralError(
                f"alphabet sizes differ: {self.top.n_symbols} vs {self.bottom.n_symbols}")
        if self.top.shape[0] != self.top.shape[1] or self.bottom.shape[0] != self.bottom.shape[1]:
            raise StructuralError("transfer matrix factors must be square per symbol")

    @property
    def dims(self) -> tuple[int, int]:
        """``(d_top, d_bottom)``."""
        return self.top.shape[0], self.bottom.shape[0]

    @property
    def size(self) -> int:
        dt, db = self.dims
        return dt * db

    def apply_right(self, x: np.ndarray) -> np.ndarray:
        """``X -> sum_s A[s] X B[s]^dagger`` for ``X`` of shape ``(d_top, d_bottom)``."""
        return _ops.forward(self.top, x, self.bottom)

    def apply_left(self, g: np.ndarray) -> np.ndarray:
        """``G -> sum_s B[s]^dagger G A[s]`` for ``G`` of shape ``(d_bottom, d_top)``."""
        return _ops.backward(self.top, g, self.bottom)

    def dense(self) -> np.ndarray:
        """Explicit ``(d_top d_bottom) x (d_top d_bottom)`` matrix (row-major vec)."""
        if self.size > DENSE_BUILD_MAX:
            raise ResourceError(
                f"refusing to build a dense {self.size}x{self.size} transfer matrix")
        a = self.top.dense()
        b = self.bottom.dense()
        n = self.size
        return np.einsum("xab,xcd->acbd", a, b.conj()).reshape(n, n)


def transfer_matrix(a, b=None) -> TransferMatrix:
    """Transfer matrix of ``a`` (or the mixed one of ``a`` over ``b``)."""
    return TransferMatrix(a, b)


@dataclass(frozen=True)
class EigenResult:
    """Leading eigenpair of a transfer matrix.

    ``vector`` is shaped ``(d_top, d_bottom)`` for ``side="right"`` and
    ``(d_bottom, d_top)`` for ``side="left"``.
    """

    value: complex
    vector: np.ndarray
    side: str
    residual: float
    subleading: complex | None = None
    degenerate: bool = False

    @property
    def gap(self) -> float | None:
        if self.subleading is None:
            return None
        return abs(self.value) - abs(self.subleading)


def _fix_phase(v: np.ndarray) -> np.ndarray:
    flat = v.ravel()
    k = int(np.argmax(np.abs(flat)))
    if flat[k] == 0:
        return v
    return v * (abs(flat[k]) / flat[k])


def leading_eig(E: TransferMatrix, side: str = "right", *, subleading: bool = True,
                v0: np.ndarray | None = None, tol: float = 1e-14,
                maxiter: int = 100_000, method: str = "auto") -> EigenResult:
    """Leading (largest modulus) eigenpair of a transfer matrix.

    Small problems are diagonalized densely; larger ones use implicitly
    restarted Arnoldi on the matrix-free action, optionally warm-started
    from ``v0``.  The eigenvector is normalized to unit Frobenius norm and
    its largest entry is made real positive.

    Raises
    ------
    ConvergenceError
        If the iterative solver does not converge within ``maxiter``.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    dt, db = E.dims
    n = dt * db
    shape = (dt, db) if side == "right" else (db, dt)
    apply = E.apply_right if side == "right" else E.apply_left
    if method == "auto":
        method = "dense" if n <= DENSE_EIG_MAX else "arnoldi"

    if method == "dense" or n < 4:
        mat = E.dense()
        if side == "left":
            mat = mat.T
        w, v = np.linalg.eig(mat)
        order = np.argsort(-np.abs(w), kind="stable")
        value = complex(w[order[0]])
        vec = v[:, order[0]].reshape(dt, db)
        if side == "left":
            vec = vec.T
        sub = complex(w[order[1]]) if (subleading and n > 1) else None
    else:
        dtype = np.result_type(E.top.dtype, E.bottom.dtype, np.float64)

        def mv(v):
            return apply(v.reshape(shape).astype(dtype, copy=False)).ravel()

        op = LinearOperator((n, n), matvec=mv, dtype=dtype)
        k = 2 if subleading else 1
        start = None
        if v0 is not None:
            start = np.asarray(v0).reshape(n)
            start = start.real if not np.iscomplexobj(np.empty(0, dtype)) else start
            start = start.astype(dtype)
            if not np.any(start):
                start = None
        try:
            w, v = eigs(op, k=k, which="LM", v0=start, tol=tol, maxiter=maxiter,
                        ncv=min(n, max(2 * k + 1, 20)))
        except ArpackNoConvergence as exc:
            raise ConvergenceError(
                f"Arnoldi did not converge for a {n}-dimensional transfer matrix",
                residual=None) from exc
        order = np.argsort(-np.abs(w), kind="stable")
        value = complex(w[order[0]])
        vec = v[:, order[0]].reshape(shape)
        sub = complex(w[order[1]]) if subleading else None

    vec = _fix_phase(vec / np.linalg.norm(vec))
    if not np.iscomplexobj(E.top.dtype.type(0)) and not np.iscomplexobj(E.bottom.dtype.type(0)):
        if np.max(np.abs(vec.imag), initial=0.0) < 1e-13 and abs(value.imag) < 1e-13:
            vec = vec.real.copy()
            value = complex(value.real)
    resid = float(np.linalg.norm(apply(vec) - value * vec))
    degenerate = sub is not None and abs(value) - abs(sub) < DEGENERACY_GAP * max(1.0, abs(value))
    return EigenResult(value, vec, side, resid, sub, bool(degenerate))


@dataclass(frozen=True)
class SchmidtSpectrum:
    """Eigenvalues of the memory steady state, sorted in descending order."""

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float))[::-1]
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def entropy(self) -> float:
        """Shannon entropy in bits, with ``0 log 0 = 0``."""
        return shannon_entropy(self.values)

    def discarded(self, d_tilde: int) -> float:
        return float(np.sum(self.values[d_tilde:]))


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _herm(m):
    return 0.5 * (m + m.conj().T)


def _sqrt_factor(v: np.ndarray, rank_tol: float):
    """Factor a PSD matrix ``V ~ W^dagger W``; returns ``(W, W^+)``.

    Directions with eigenvalue below ``rank_tol * max`` are dropped so ``W``
    has full row rank.
    """
    v = _herm(v)
    s, u = np.linalg.eigh(v)
    if s[-1] <= 0:
        s, u = -s[::-1], u[:, ::-1]
    keep = s > max(rank_tol, 0.0) * s.max()
    if rank_tol <= 0:
        keep = s > 0
    s, u = s[keep][::-1], u[:, keep][:, ::-1]
    root = np.sqrt(s)
    return (root[:, None] * u.conj().T), (u / root[None, :])


@dataclass(frozen=True, eq=False)
class CanonicalBundle:
    """Left/right canonical and mixed-gauge forms of a normalized iMPS.

    The canonical tensors are held as operands (possibly in a factored
    low-rank format for large sparse sources); the dense ``A_l``, ``A_r``
    and ``A_c`` arrays are built on first access.

    Attributes
    ----------
    C : ndarray
        Diagonal bond matrix with unit Frobenius norm; ``C @ C^dagger`` is the
        memory steady state in the Schmidt basis.
    W_l, W_r : ndarray
        Gauge factors with ``A_l ~ W_l A W_l^+ / sqrt(eta)`` and
        ``A_c ~ W_l A W_r / sqrt(eta)``, reported for inspection.
    eta : complex
        Leading transfer-matrix eigenvalue of the source tensor.
    subleading : complex or None
        Second eigenvalue of the source transfer matrix (injectivity diagnostic).
    degenerate : bool
        Set when the leading eigenvalue is not separated from the next one.
    """

    source: SiteTensor
    left_op: _ops.Operand = field(repr=False)
    right_op: _ops.Operand = field(repr=False)
    C: np.ndarray
    spectrum: SchmidtSpectrum
    W_l: np.ndarray = field(repr=False)
    W_r: np.ndarray = field(repr=False)
    eta: complex
    subleading: complex | None
    degenerate: bool
    rank_tol: float

    @property
    def bond_dim(self) -> int:
        """Effective bond dimension after rank reduction."""
        return self.C.shape[0]

    @property
    def symbols(self):
        return self.source.symbols

    @cached_property
    def center_op(self) -> _ops.Operand:
        return self.left_op.gauged(right=self.C).materialize()

    @cached_property
    def A_l(self) -> SiteTensor:
        return SiteTensor(self.left_op.dense(), self.symbols)

    @cached_property
    def A_r(self) -> SiteTensor:
        return SiteTensor(self.right_op.dense(), self.symbols)

    @cached_property
    def A_c(self) -> SiteTensor:
        return SiteTensor(self.center_op.dense(), self.symbols)

    @property
    def rho(self) -> np.ndarray:
        """Memory steady state ``C C^dagger`` in the Schmidt basis."""
        return self.C @ self.C.conj().T

    def completeness_errors(self) -> tuple[float, float]:
        """Frobenius errors of ``sum A_l^dag A_l = I`` and ``sum A_r A_r^dag = I``."""
        return _left_error(self.left_op), _right_error(self.right_op)

    def gauge_errors(self) -> tuple[float, float]:
        """Frobenius errors of ``A_c = A_l C`` and ``A_c = C A_r``."""
        ac = self.A_c.matrices
        e1 = np.linalg.norm(ac - self.A_l.matrices @ self.C)
        e2 = np.linalg.norm(ac - self.C @ self.A_r.matrices)
        return float(e1), float(e2)


def _left_error(op) -> float:
    eye = np.eye(op.shape[1])
    return float(np.linalg.norm(_ops.backward(op, eye, op) - eye))


def _right_error(op) -> float:
    eye = np.eye(op.shape[0])
    return float(np.linalg.norm(_ops.forward(op, eye, op) - eye))


#: polishing stops once the completeness error is below this
_POLISH_TOL = 1e-13
_POLISH_STEPS = 4


def _left_polish(cur, rank_tol, tracked):
    """Regauge until ``cur`` is left canonical; returns ``(op, reduced)``.

    Each step factors the left fixed point of the current (already nearly
    canonical) tensor, which is well conditioned, so the error drops to
    machine precision after one or two steps.
    """
    reduced = False
    for _ in range(_POLISH_STEPS):
        res = leading_eig(TransferMatrix(cur, cur), "left", subleading=False)
        w, wp = _sqrt_factor(res.vector, rank_tol)
        reduced = reduced or w.shape[0] < w.shape[1]
        cur = cur.gauged(w, wp, 1.0 / math.sqrt(abs(res.value))).materialize()
        tracked[0] = w @ tracked[0]
        tracked[1] = tracked[1] @ wp
        if _left_error(cur) < _POLISH_TOL * math.sqrt(cur.shape[0]):
            break
    return cur, reduced


def canonicalize(a, rank_tol: float = 1e-12, *, max_passes: int = 8) -> CanonicalBundle:
    """Bring an iMPS into left, right and mixed canonical form.

    The tensor is normalized so that its transfer matrix has leading
    eigenvalue one.  Directions of the memory that carry relative weight
    below ``rank_tol`` (linear dependencies between memory states, or
    transient states) are projected out, so the returned bond dimension can
    be smaller than the input one.  A degenerate leading eigenvalue
    (non-injective tensor) does not raise; it sets ``degenerate`` and emits a
    ``RuntimeWarning``.

    Parameters
    ----------
    a : SiteTensor
    rank_tol : float
        Relative eigenvalue threshold of the fixed points below which memory
        directions are dropped.  ``0`` keeps every direction with positive
        weight.
    """
    source = a if isinstance(a, SiteTensor) else SiteTensor(np.asarray(a))
    op = source.operand
    first = leading_eig(TransferMatrix(op, op), "left", subleading=True)
    eta = first.value
    if not np.isfinite(abs(eta)) or abs(eta) < 1e-300:
        raise InvalidStateError("transfer matrix has zero leading eigenvalue")
    if first.degenerate:
        warnings.warn("degenerate leading transfer-matrix eigenvalue: tensor is not injective",
                      RuntimeWarning, stacklevel=2)
    d = source.bond_dim
    w, wp = _sqrt_factor(first.vector, rank_tol)
    cur = op.gauged(w, wp, 1.0 / math.sqrt(abs(eta))).materialize()
    tracked = [w, wp]  # cumulative left gauge and its right inverse
    for _ in range(max_passes):
        cur, _ = _left_polish(cur, rank_tol, tracked)
        res_r = leading_eig(TransferMatrix(cur, cur), "right", subleading=False)
        rho = _herm(res_r.vector)
        rho = rho / np.trace(rho).real
        lam, q = np.linalg.eigh(rho)
        lam, q = lam[::-1], q[:, ::-1]
        if lam[0] <= 0:
            raise InvalidStateError("memory steady state has no positive weight")
        keep = lam > (rank_tol * lam[0] if rank_tol > 0 else 0.0)
        lam, q = lam[keep], q[:, keep]
        cur = cur.gauged(q.conj().T, q).materialize()
        tracked = [q.conj().T @ tracked[0], tracked[1] @ q]
        if keep.all():
            break
    # right canonical form: C0^-1 A_l C0 is nearly right canonical; polish it
    # with well-conditioned gauges and collect them into a non-diagonal bond
    # matrix, which an SVD then diagonalizes with unitary gauges only
    c = np.sqrt(lam)
    right = cur.gauged(np.diag(1.0 / c), np.diag(c)).materialize()
    bond = np.diag(c)
    for _ in range(_POLISH_STEPS):
        if _right_error(right) < _POLISH_TOL * math.sqrt(right.shape[0]):
            break
        res = leading_eig(TransferMatrix(right, right), "right", subleading=False)
        x = _herm(res.vector)
        s, u = np.linalg.eigh(x if np.trace(x).real > 0 else -x)
        z = u * np.sqrt(np.clip(s, 1e-300, None))[None, :]
        zinv = (u / np.sqrt(np.clip(s, 1e-300, None))[None, :]).conj().T
        right = right.gauged(zinv, z, 1.0 / math.sqrt(abs(res.value))).materialize()
        bond = bond @ z
    u, sv, vh = np.linalg.svd(bond)
    sv = sv / np.linalg.norm(sv)
    left_op = cur.gauged(u.conj().T, u).materialize()
    right_op = right.gauged(vh, vh.conj().T).materialize()
    c_mat = np.diag(sv)
    w_l = u.conj().T @ tracked[0]
    w_r = tracked[1] @ u @ c_mat
    if w_l.shape[1] != d:  # defensive: tracked gauges always act on the source
        raise StructuralError("internal gauge bookkeeping error")
    return CanonicalBundle(
        source=source, left_op=left_op, right_op=right_op, C=c_mat,
        spectrum=SchmidtSpectrum(sv ** 2), W_l=w_l, W_r=w_r, eta=eta,
        subleading=first.subleading, degenerate=first.degenerate, rank_tol=rank_tol)


def memory_costs(bundle: CanonicalBundle) -> tuple[float, float]:
    """Return ``(C_q, D_q)`` in bits: steady-state entropy and log2 of the bond dimension."""
    c_q = bundle.spectrum.entropy()
    d_q = math.log2(bundle.bond_dim)
    return c_q, d_q


@dataclass(frozen=True)
class QSample:
    """Finite q-sample with its memory kept as an explicit register.

    ``amplitudes[x_0, ..., x_{L-1}]`` is a matrix whose row index is the
    final memory and whose column index is a purifying ancilla of the
    initial memory (a single column for a definite initial state).
    """

    amplitudes: np.ndarray
    symbols: tuple
    length: int

    @property
    def probabilities(self) -> np.ndarray:
        """Born-rule probabilities of each word, shape ``(|X|,) * L``."""
        return np.sum(np.abs(self.amplitudes) ** 2, axis=(-2, -1))

    @property
    def scalar_amplitudes(self) -> np.ndarray:
        """Amplitudes with the memory register summed out.

        Meaningful when each word leaves the memory in a basis state, as for
        the sqrt-probability tensors of unifilar models with a definite
        initial state; then these are exactly ``sqrt P(x_{0:L}|j)``.
        """
        return np.sum(self.amplitudes, axis=(-2, -1))

    def purification_matrix(self) -> np.ndarray:
        """``Phi`` with ``Phi @ Phi^dagger`` the reduced density matrix of the L sites."""
        n = len(self.symbols) ** self.length
        return self.amplitudes.reshape(n, -1)


def _fixed_point_factor(op, side):
    res = leading_eig(TransferMatrix(op, op), side, subleading=False)
    v = _herm(res.vector)
    if np.trace(v).real < 0:
        v = -v
    return res.value, v


def finite_qsample(a, length: int, boundary="steady") -> QSample:
    """Enumerate the ``length``-step q-sample of an iMPS.

    With ``boundary="steady"`` the initial memory is the stationary state,
    purified by an ancilla, and the final memory is weighted by the left
    fixed point, so the squared amplitudes are the stationary word
    probabilities.  With ``boundary=j`` (an int) the memory starts in basis
    state ``j``.  The tensor does not need to be normalized or canonical.

    Raises
    ------
    ResourceError
        If ``|X|**length`` exceeds :data:`MAX_SEQUENCES`.
    """
    source = a if isinstance(a, SiteTensor) else SiteTensor(np.asarray(a))
    n_sym = source.n_symbols
    if length < 0:
        raise ValueError("length must be non-negative")
    if n_sym ** length > MAX_SEQUENCES:
        raise ResourceError(f"{n_sym}^{length} sequences exceed the enumeration limit")
    op = source.operand
    eta, v_l = _fixed_point_factor(op, "left")
    w_l, _ = _sqrt_factor(v_l, 0.0)
    if boundary == "steady":
        _, v_r = _fixed_point_factor(op, "right")
        s, u = np.linalg.eigh(v_r)
        s = np.clip(s, 0.0, None)
        init = u * np.sqrt(s)[None, :]
        norm = np.trace(v_l @ v_r).real
    else:
        j = int(boundary)
        if not 0 <= j < source.bond_dim:
            raise ValueError(f"boundary state {j} out of range")
        init = np.zeros((source.bond_dim, 1))
        init[j, 0] = 1.0
        norm = v_l[j, j].real
    if norm <= 0:
        raise InvalidStateError("boundary state has zero weight")
    mats = source.matrices / np.sqrt(abs(eta))
    psi = init[None, :, :] / np.sqrt(norm)
    for _ in range(length):
        psi = np.einsum("xab,nbc->nxac", mats, psi).reshape(-1, *psi.shape[1:])
    psi = np.einsum("ka,nab->nkb", w_l, psi)
    return QSample(psi.reshape((n_sym,) * length + psi.shape[1:]), source.symbols, length)


def uhlmann_fidelity(p: QSample, q: QSample) -> float:
    """Fidelity of the reduced L-site states of two q-samples.

    Equals the maximal overlap over all purifications, so it is invariant
    under gauge changes of either memory register.
    """
    if p.symbols != q.symbols or p.length != q.length:
        raise StructuralError("q-samples must share alphabet and length")
    overlap = p.purification_matrix().conj().T @ q.purification_matrix()
    return float(np.sum(np.linalg.svd(overlap, compute_uv=False)))


def word_amplitude(a, word: Sequence, boundary_left=None, boundary_right=None) -> np.ndarray:
    """Matrix product ``A[x_{L-1}] ... A[x_0]`` for a single word (optionally sandwiched)."""
    source = a if isinstance(a, SiteTensor) else SiteTensor(np.asarray(a))
    index = {s: k for k, s in enumerate(source.symbols)}
    m = np.eye(source.bond_dim, dtype=source.matrices.dtype)
    for x in word:
        k = x if isinstance(x, (int, np.integer)) else index[str(x)]
        m = source.matrices[k] @ m
    if boundary_left is not None:
        m = boundary_left @ m
    if boundary_right is not None:
        m = m @ boundary_right
    return m


def random_imps(bond_dim: int, n_symbols: int, rng=None, *, real: bool = False) -> SiteTensor:
    """Random normalized iMPS with Gaussian entries (injective with probability one)."""
    rng = np.random.default_rng(rng)
    shape = (n_symbols, bond_dim, bond_dim)
    m = rng.standard_normal(shape)
    if not real:
        m = m + 1j * rng.standard_normal(shape)
    t = SiteTensor(m)
    eta = leading_eig(transfer_matrix(t), "right", subleading=False).value
    return t.scaled(1.0 / math.sqrt(abs(eta)))


def all_words(n_symbols: int, length: int):
    """Iterate over all words in lexicographic order as index tuples."""
    return itertools.product(range(n_symbols), repeat=length)
