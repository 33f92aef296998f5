"""Contraction kernels for per-symbol matrix stacks.

A site tensor is stored as an array ``A`` of shape ``(n_symbols, rows, cols)``
with ``A[x]`` mapping the previous memory (column index) to the next memory
(row index).  Everything heavy in the package reduces to two sums over the
alphabet::

    forward(A, X, B)  = sum_x A[x] @ X @ B[x]^dagger
    backward(A, Y, B) = sum_x B[x]^dagger @ Y @ A[x]

which are the right and left actions of the mixed transfer matrix
``sum_x A[x] (x) conj(B[x])``.

Large unifilar tensors (cyclic walks with a 256-letter alphabet) are very
sparse and every ``A[x]`` has low rank.  Such stacks are kept as per-symbol
factors ``A[x] = L_x @ C_x @ R_x`` where ``L_x``/``R_x`` are either index
arrays (embedding/selection of rows and columns), explicit matrices, or
``None`` for the identity.  Gauge transformations fold into these factors
when an :class:`Operand` is materialized.
"""

from __future__ import annotations

import numpy as np

# below this size (or above this fill fraction) the dense einsum path wins
_SPARSE_MIN_DIM = 24
_SPARSE_MAX_FILL = 0.2
# materialized stacks with at most this many entries are stored densely
_DENSE_ENTRIES = 4_000_000


class Blocks:
    """Per-symbol factored matrices ``A[x] = L_x @ C_x @ R_x``.

    Dense stacks keep the full array and use vectorized paths; otherwise
    ``items[x] = (L_x, C_x, R_x)``.
    """

    def __init__(self, array=None, force_dense=False, *, items=None, shape=None, dtype=None):
        if items is not None:
            self.array = None
            self.items = items
            self.n, self.rows, self.cols = shape
            self.sparse = True
            self._dtype = dtype
            return
        array = np.asarray(array)
        self.array = array
        self._dtype = array.dtype
        self.n, self.rows, self.cols = array.shape
        fill = np.count_nonzero(array) / max(array.size, 1)
        self.sparse = (not force_dense and min(self.rows, self.cols) >= _SPARSE_MIN_DIM
                       and fill <= _SPARSE_MAX_FILL)
        self.items = None
        if self.sparse:
            items = []
            for x in range(self.n):
                a = array[x]
                r = np.flatnonzero(np.any(a != 0, axis=1))
                c = np.flatnonzero(np.any(a != 0, axis=0))
                items.append((r, np.ascontiguousarray(a[np.ix_(r, c)]), c))
            self.items = items

    @property
    def dtype(self):
        return self._dtype

    def item(self, k):
        if self.sparse:
            return self.items[k]
        return None, self.array[k], None

    def to_array(self) -> np.ndarray:
        if not self.sparse:
            return self.array
        out = np.zeros((self.n, self.rows, self.cols), dtype=self.dtype)
        for k, (lf, core, rf) in enumerate(self.items):
            m = _expand(lf, core, rf, self.rows, self.cols)
            out[k] = m
        return out


# -- factor helpers ---------------------------------------------------------


def _r_times(rf, m):
    """``R @ m`` where ``R`` selects rows (index array) or is a matrix."""
    if rf is None:
        return m
    if rf.ndim == 1:
        return m[rf, :]
    return rf @ m


def _times_rh(m, rf):
    """``m @ R^dagger``."""
    if rf is None:
        return m
    if rf.ndim == 1:
        return m[:, rf]
    return m @ rf.conj().T


def _lh_times(lf, m):
    """``L^dagger @ m``."""
    if lf is None:
        return m
    if lf.ndim == 1:
        return m[lf, :]
    return lf.conj().T @ m


def _times_l(m, lf):
    """``m @ L``."""
    if lf is None:
        return m
    if lf.ndim == 1:
        return m[:, lf]
    return m @ lf


def _core(c, m, c2):
    """``c @ m @ c2`` with ``None`` meaning identity."""
    if c is not None:
        m = c @ m
    if c2 is not None:
        m = m @ c2
    return m


def _accumulate(out, lrow, val, lcol_h):
    """``out += Lrow @ val @ Lcol^dagger`` using index scatter where possible."""
    rows = None
    cols = None
    if lrow is not None:
        if lrow.ndim == 1:
            rows = lrow
        else:
            val = lrow @ val
    if lcol_h is not None:
        if lcol_h.ndim == 1:
            cols = lcol_h
        else:
            val = val @ lcol_h.conj().T
    if rows is None and cols is None:
        out += val
    elif rows is None:
        out[:, cols] += val
    elif cols is None:
        out[rows, :] += val
    else:
        out[np.ix_(rows, cols)] += val


def _expand(lf, core, rf, rows, cols):
    if core is None:  # folded item: both factors are matrices
        return lf @ rf
    m = core
    if rf is not None:
        m = m @ rf if rf.ndim == 2 else _place_cols(m, rf, cols)
    if lf is not None:
        m = lf @ m if lf.ndim == 2 else _place_rows(m, lf, rows)
    return m


def _place_cols(m, idx, cols):
    out = np.zeros((m.shape[0], cols), dtype=m.dtype)
    out[:, idx] = m
    return out


def _place_rows(m, idx, rows):
    out = np.zeros((rows, m.shape[1]), dtype=m.dtype)
    out[idx, :] = m
    return out


# -- kernels ----------------------------------------------------------------


def _forward_blocks(a: Blocks, x: np.ndarray, b: Blocks) -> np.ndarray:
    dtype = np.result_type(a.dtype, x.dtype, b.dtype)
    if not a.sparse and not b.sparse:
        t = np.matmul(a.array, x)  # (n, ar, bc)
        lhs = t.transpose(1, 0, 2).reshape(a.rows, a.n * b.cols)
        rhs = b.array.conj().transpose(0, 2, 1).reshape(a.n * b.cols, b.rows)
        return lhs @ rhs
    out = np.zeros((a.rows, b.rows), dtype=dtype)
    for k in range(a.n):
        la, ca, ra = a.item(k)
        lb, cb, rb = b.item(k)
        y = _times_rh(_r_times(ra, x), rb)
        if y.size == 0:
            continue
        val = _core(ca, y, None if cb is None else cb.conj().T)
        _accumulate(out, la, val, lb)
    return out


def _backward_blocks(a: Blocks, y: np.ndarray, b: Blocks) -> np.ndarray:
    dtype = np.result_type(a.dtype, y.dtype, b.dtype)
    if not a.sparse and not b.sparse:
        t = np.matmul(y, a.array)  # (n, br, ac)
        lhs = b.array.conj().transpose(2, 0, 1).reshape(b.cols, a.n * b.rows)
        return lhs @ t.reshape(a.n * b.rows, a.cols)
    out = np.zeros((b.cols, a.cols), dtype=dtype)
    for k in range(a.n):
        la, ca, ra = a.item(k)
        lb, cb, rb = b.item(k)
        z = _times_l(_lh_times(lb, y), la)
        if z.size == 0:
            continue
        val = _core(None if cb is None else cb.conj().T, z, ca)
        # out += Rb^dagger @ val @ Ra
        _accumulate(out, None if rb is None else (rb if rb.ndim == 1 else rb.conj().T),
                    val, None if ra is None else (ra if ra.ndim == 1 else ra.conj().T))
    return out


def _sandwich_blocks(p: np.ndarray, a: Blocks, q: np.ndarray) -> np.ndarray:
    """Return the stack ``[p @ A[x] @ q for x]``."""
    if not a.sparse:
        return np.matmul(np.matmul(p, a.array), q)
    dtype = np.result_type(p.dtype, a.dtype, q.dtype)
    out = np.zeros((a.n, p.shape[0], q.shape[1]), dtype=dtype)
    for k, (lf, core, rf) in enumerate(a.items):
        left = _times_l(p, lf)
        right = _r_times(rf, q)
        if left.size == 0 or right.size == 0:
            continue
        out[k] = _core(None, left, core) @ right if core is not None else left @ right
    return out


class Operand:
    """A site tensor expressed as ``scale * left @ base[x] @ right``.

    ``left``/``right`` of ``None`` stand for identities.  Operands are
    immutable; :meth:`gauged` returns a new operand with composed factors
    and :meth:`materialize` folds the factors into the base.
    """

    def __init__(self, base: Blocks, left=None, right=None, scale=1.0):
        self.base = base
        self.left = left
        self.right = right
        self.scale = scale

    @classmethod
    def from_array(cls, array, force_dense=False):
        return cls(Blocks(np.asarray(array), force_dense=force_dense))

    @property
    def n_symbols(self):
        return self.base.n

    @property
    def shape(self):
        rows = self.base.rows if self.left is None else self.left.shape[0]
        cols = self.base.cols if self.right is None else self.right.shape[1]
        return rows, cols

    @property
    def dtype(self):
        dt = np.result_type(self.base.dtype, np.asarray(self.scale).dtype)
        for f in (self.left, self.right):
            if f is not None:
                dt = np.result_type(dt, f.dtype)
        return dt

    def gauged(self, left=None, right=None, scale=1.0):
        """Return ``scale * left @ self @ right``."""
        new_left = self.left
        if left is not None:
            new_left = left if self.left is None else left @ self.left
        new_right = self.right
        if right is not None:
            new_right = right if self.right is None else self.right @ right
        return Operand(self.base, new_left, new_right, self.scale * scale)

    def materialize(self) -> "Operand":
        """Equivalent operand with identity factors and unit scale."""
        if self.left is None and self.right is None and self.scale == 1.0:
            return self
        rows, cols = self.shape
        if not self.base.sparse or self.n_symbols * rows * cols <= _DENSE_ENTRIES:
            return Operand(Blocks(self.dense(), force_dense=True))
        items = []
        for lf, core, rf in self.base.items:
            new_l = _compose_left(self.left, lf)
            new_r = _compose_right(rf, self.right)
            if core is not None:
                core = core * self.scale
            else:
                new_r = new_r * self.scale
            if _is_matrix(new_l) and _is_matrix(new_r) and core is not None:
                if core.shape[0] <= core.shape[1]:
                    new_r, core = core @ new_r, None
                else:
                    new_l, core = new_l @ core, None
            items.append((new_l, core, new_r))
        dtype = np.result_type(self.dtype, np.float64)
        return Operand(Blocks(items=items, shape=(self.n_symbols, rows, cols), dtype=dtype))

    def dense(self) -> np.ndarray:
        """Materialize the full ``(n, rows, cols)`` stack."""
        if self.left is None and self.right is None:
            return self.scale * self.base.to_array()
        p = self.left if self.left is not None else np.eye(self.base.rows)
        q = self.right if self.right is not None else np.eye(self.base.cols)
        return self.scale * _sandwich_blocks(p, self.base, q)

    def sandwich(self, p, q) -> np.ndarray:
        """Return ``[p @ M[x] @ q for x]`` without materializing ``M``."""
        if self.left is not None:
            p = p @ self.left
        if self.right is not None:
            q = self.right @ q
        return self.scale * _sandwich_blocks(p, self.base, q)


def _is_matrix(f):
    return f is not None and f.ndim == 2


def _compose_left(outer, lf):
    """``outer @ L``."""
    if outer is None:
        return lf
    if lf is None:
        return outer
    if lf.ndim == 1:
        return outer[:, lf]
    return outer @ lf


def _compose_right(rf, outer):
    """``R @ outer``."""
    if outer is None:
        return rf
    if rf is None:
        return outer
    if rf.ndim == 1:
        return outer[rf, :]
    return rf @ outer


def forward(a: Operand, x: np.ndarray, b: Operand) -> np.ndarray:
    """``sum_s a[s] @ x @ b[s]^dagger`` (right action of the mixed transfer matrix)."""
    if a.right is not None:
        x = a.right @ x
    if b.right is not None:
        x = x @ b.right.conj().T
    out = _forward_blocks(a.base, x, b.base)
    if a.left is not None:
        out = a.left @ out
    if b.left is not None:
        out = out @ b.left.conj().T
    return (a.scale * np.conj(b.scale)) * out


def backward(a: Operand, y: np.ndarray, b: Operand) -> np.ndarray:
    """``sum_s b[s]^dagger @ y @ a[s]`` (left action of the mixed transfer matrix)."""
    if b.left is not None:
        y = b.left.conj().T @ y
    if a.left is not None:
        y = y @ a.left
    out = _backward_blocks(a.base, y, b.base)
    if b.right is not None:
        out = b.right.conj().T @ out
    if a.right is not None:
        out = out @ a.right
    return (a.scale * np.conj(b.scale)) * out
