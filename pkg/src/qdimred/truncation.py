"""Memory-dimension reduction of q-sample iMPS.

Two routes are provided.  Direct truncation keeps the dominant Schmidt
directions of the memory steady state.  Variational truncation runs a
fixed-point iteration that maximizes the per-site overlap between the
target and a lower-dimensional ansatz: the leading eigenvectors of the
mixed transfer matrices act as environments that map the target's
mixed-gauge pair ``{A_c, C}`` onto an updated ansatz pair, from which a left
canonical tensor is recovered by polar decompositions.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import polar

from . import _ops
from .errors import ConvergenceError, PreconditionError, StructuralError
from .imps import (
    CanonicalBundle,
    SchmidtSpectrum,
    SiteTensor,
    TransferMatrix,
    canonicalize,
    leading_eig,
)


class TieWarning(RuntimeWarning):
    """The truncation cut falls inside a degenerate group of Schmidt values."""


TIE_TOL = 1e-14


@dataclass(frozen=True)
class TruncationConfig:
    """Settings of the variational truncation.

    Parameters
    ----------
    d_tilde : int
        Target memory dimension.
    delta_thresh : float
        Stop once the gauge mismatch ``Delta`` falls below this.
    max_iters : int
        Iteration cap per restart.
    restarts : int
        Number of random initial ansatz tensors (ignored for ``init="direct"``).
    init : str
        ``"random"`` or ``"direct"`` (seed from direct truncation).
    damping : float
        Weight of the previous ``{A_c, C}`` pair in the update, in ``[0, 1)``.
    patience : int
        Stop a restart once the best QFDR improved by less than
        ``patience_rtol`` (relative) over the last ``patience`` iterations.
        Such a restart is reported as not converged.
    seed : int
        Master seed; restart ``k`` uses child ``k`` of ``SeedSequence(seed)``.
    rank_tol : float
        Rank-reduction threshold used when canonicalizing the target.
    screen_iters : int, optional
        When set, every restart first runs for this many iterations and only
        the best one continues up to ``max_iters``.  Useful when the fixed
        point is approached slowly and the restarts all head the same way.
    """

    d_tilde: int
    delta_thresh: float = 1e-10
    max_iters: int = 10_000
    restarts: int = 8
    init: str = "random"
    damping: float = 0.0
    patience: int = 200
    patience_rtol: float = 1e-6
    seed: int = 42
    rank_tol: float = 1e-12
    raise_on_failure: bool = True
    screen_iters: int | None = None

    def __post_init__(self):
        if self.d_tilde < 1:
            raise StructuralError("d_tilde must be at least 1")
        if not self.delta_thresh > 0:
            raise StructuralError("delta_thresh must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise StructuralError("damping must lie in [0, 1)")
        if self.init not in ("random", "direct"):
            raise StructuralError(f"unknown init {self.init!r}")
        if self.screen_iters is not None and self.screen_iters < 1:
            raise StructuralError("screen_iters must be positive")
        if self.restarts < 1 or self.max_iters < 0:
            raise StructuralError("restarts must be positive and max_iters non-negative")


@dataclass(frozen=True, eq=False)
class TruncationResult:
    """Compressed iMPS together with its convergence record.

    ``qfdr`` is the rate between the (normalized) target and ``A_tilde``.
    ``eta_history`` and ``delta_history`` belong to the restart that produced
    the returned tensor; ``best_qfdr_history`` is its running best rate.
    """

    A_tilde: SiteTensor
    bundle: CanonicalBundle
    qfdr: float
    converged: bool
    iterations: int
    delta: float
    eta_history: np.ndarray
    delta_history: np.ndarray
    best_qfdr_history: np.ndarray
    method: str
    d_tilde: int
    seed: int | None = None
    restart: int | None = None
    restart_qfdrs: tuple = ()
    tie: bool = False
    degenerate: bool = False
    max_completeness_error: float = 0.0
    max_eta_mismatch: float = 0.0
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        from .serialize import tensor_to_obj
        obj = {
            "method": self.method,
            "d_tilde": self.d_tilde,
            "qfdr": self.qfdr,
            "converged": self.converged,
            "iterations": self.iterations,
            "delta": self.delta,
            "seed": self.seed,
            "restart": self.restart,
            "restart_qfdrs": list(self.restart_qfdrs),
            "tie": self.tie,
            "degenerate": self.degenerate,
            "max_completeness_error": self.max_completeness_error,
            "max_eta_mismatch": self.max_eta_mismatch,
            "eta_history": [[float(e.real), float(e.imag)] for e in self.eta_history],
            "delta_history": [float(v) for v in self.delta_history],
            "best_qfdr_history": [float(v) for v in self.best_qfdr_history],
            "config": self.config,
            "tensor": tensor_to_obj(self.A_tilde),
        }
        return json.dumps(obj)


def _as_bundle(a, rank_tol=1e-12) -> CanonicalBundle:
    if isinstance(a, CanonicalBundle):
        return a
    return canonicalize(a, rank_tol)


def _rate(eta) -> float:
    return max(0.0, -0.5 * math.log2(abs(eta))) if abs(eta) > 0 else math.inf


def direct_truncate(bundle, d_tilde: int) -> SiteTensor:
    """Keep the ``d_tilde`` dominant Schmidt directions of the memory.

    The left canonical tensor is compressed as ``P^dagger A_l P`` with ``P``
    the isometry onto the top eigenvectors of the steady state, rescaled to a
    unit leading transfer eigenvalue and returned in left canonical form.  A
    cut inside a degenerate group of Schmidt values emits :class:`TieWarning`
    (the lower index wins).
    """
    bundle = _as_bundle(bundle)
    d = bundle.bond_dim
    if d_tilde < 1:
        raise StructuralError("d_tilde must be at least 1")
    if d_tilde > d:
        raise PreconditionError(f"d_tilde={d_tilde} exceeds the effective dimension {d}")
    lam = bundle.spectrum.values
    if d_tilde < d and lam[d_tilde - 1] - lam[d_tilde] < TIE_TOL:
        warnings.warn(f"Schmidt values {d_tilde} and {d_tilde + 1} are tied",
                      TieWarning, stacklevel=2)
    proj = np.eye(d)[:, :d_tilde]
    small = bundle.left_op.sandwich(proj.T, proj)
    tensor = SiteTensor(small, bundle.symbols)
    return canonicalize(tensor, 0.0).A_l


def _init_ansatz(bundle, d_tilde, rng):
    n = len(bundle.symbols)
    shape = (n, d_tilde, d_tilde)
    m = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return SiteTensor(m, bundle.symbols)


def _isometric_bundle(tensor):
    """Canonical forms of an already left-isometric ansatz, or ``None``.

    Only the right fixed point is needed; the general routine is used
    whenever the steady state is badly conditioned.
    """
    op = tensor.operand
    res = leading_eig(TransferMatrix(op, op), "right", subleading=True)
    rho = (res.vector + res.vector.conj().T) / 2
    rho = rho / np.trace(rho).real
    lam, q = np.linalg.eigh(rho)
    lam, q = lam[::-1], q[:, ::-1]
    if lam[-1] < 1e-10 * lam[0]:
        return None
    c = np.sqrt(lam / lam.sum())
    a_l = np.einsum("ba,xbc,cd->xad", q.conj(), tensor.matrices, q)
    a_r = a_l / c[None, :, None] * c[None, None, :]
    left, right = SiteTensor(a_l, tensor.symbols), SiteTensor(a_r, tensor.symbols)
    eye = np.eye(len(c))
    if np.linalg.norm(np.einsum("xab,xcb->ac", a_r, a_r.conj()) - eye) > 1e-12:
        return None
    return CanonicalBundle(
        source=tensor, left_op=left.operand, right_op=right.operand, C=np.diag(c),
        spectrum=SchmidtSpectrum(c ** 2), W_l=q.conj().T, W_r=q @ np.diag(c), eta=res.value,
        subleading=res.subleading, degenerate=res.degenerate, rank_tol=1e-15)


def _ansatz_bundle(tensor):
    m = tensor.matrices
    iso = np.linalg.norm(np.einsum("xba,xbc->ac", m.conj(), m) - np.eye(m.shape[1]))
    if iso < 1e-13:
        fast = _isometric_bundle(tensor)
        if fast is not None:
            return fast
    # keep the ansatz dimension unless a direction carries essentially no weight
    return canonicalize(tensor, 1e-15)


def _run(target: CanonicalBundle, start: SiteTensor, cfg: TruncationConfig):
    """One restart of the fixed-point iteration; returns a dict of diagnostics."""
    ans = _ansatz_bundle(start)
    eta_hist, delta_hist, best_hist = [], [], []
    best = (math.inf, ans)
    v_l = v_r = None
    max_comp = max(ans.completeness_errors())
    max_mismatch = 0.0
    converged = False
    delta = math.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        e_l = TransferMatrix(target.left_op, ans.left_op)
        e_r = TransferMatrix(target.right_op, ans.right_op)
        res_l = leading_eig(e_l, "left", subleading=False, v0=v_l)
        res_r = leading_eig(e_r, "right", subleading=False, v0=v_r)
        v_l, v_r = res_l.vector, res_r.vector
        eta = res_l.value
        max_mismatch = max(max_mismatch, abs(abs(res_l.value) - abs(res_r.value)))
        rate = _rate(eta)
        if rate < best[0]:
            best = (rate, ans)
        eta_hist.append(eta)
        best_hist.append(best[0])
        stalled = (len(best_hist) > cfg.patience
                   and best_hist[-cfg.patience - 1] - best[0] <= cfg.patience_rtol * best[0])

        new_c = target.center_op.sandwich(res_l.vector, res_r.vector)
        new_bond = res_l.vector @ target.C @ res_r.vector
        scale = np.linalg.norm(new_bond)
        new_c, new_bond = new_c / scale, new_bond / scale
        if cfg.damping > 0:
            old_c, old_bond = ans.A_c.matrices, ans.C
            phase = np.vdot(old_bond, new_bond)
            phase = phase / abs(phase) if abs(phase) > 0 else 1.0
            w = cfg.damping
            new_c = (1 - w) * new_c + w * phase * old_c
            new_bond = (1 - w) * new_bond + w * phase * old_bond
        n, dt, _ = new_c.shape
        u_c, _ = polar(new_c.reshape(n * dt, dt))
        u_b, _ = polar(new_bond)
        new_l = (u_c @ u_b.conj().T).reshape(n, dt, dt)
        delta = float(np.linalg.norm(new_c / eta - new_l @ new_bond))
        delta_hist.append(delta)
        ans = _ansatz_bundle(SiteTensor(new_l, target.symbols))
        max_comp = max(max_comp, *ans.completeness_errors())
        if delta < cfg.delta_thresh:
            converged = True
            break
        if stalled:
            break
    # score the final ansatz too, so the last update is not wasted
    final = leading_eig(TransferMatrix(target.left_op, ans.left_op), "left",
                        subleading=False, v0=v_l)
    if _rate(final.value) < best[0]:
        best = (_rate(final.value), ans)
    return dict(best=best, eta=np.array(eta_hist), delta=np.array(delta_hist),
                best_hist=np.array(best_hist), converged=converged, iterations=it,
                last_delta=delta, max_comp=max_comp, max_mismatch=max_mismatch, last=ans)


def _resume(target, first, cfg):
    """Continue a screened restart from its last ansatz and merge the records."""
    rest = _run(target, first["last"].A_l, replace(cfg, max_iters=cfg.max_iters - first["iterations"]))
    best = first["best"] if first["best"][0] <= rest["best"][0] else rest["best"]
    return dict(best=best, eta=np.concatenate([first["eta"], rest["eta"]]),
                delta=np.concatenate([first["delta"], rest["delta"]]),
                best_hist=np.concatenate([first["best_hist"],
                                          np.minimum(rest["best_hist"], first["best"][0])]),
                converged=rest["converged"], iterations=first["iterations"] + rest["iterations"],
                last_delta=rest["last_delta"], max_comp=max(first["max_comp"], rest["max_comp"]),
                max_mismatch=max(first["max_mismatch"], rest["max_mismatch"]), last=rest["last"])


def _trivial_result(target, method, cfg):
    a = target.A_l
    return TruncationResult(
        A_tilde=a, bundle=target, qfdr=0.0, converged=True, iterations=0, delta=0.0,
        eta_history=np.array([], dtype=complex), delta_history=np.array([]),
        best_qfdr_history=np.array([]), method=method, d_tilde=target.bond_dim,
        seed=cfg.seed, degenerate=target.degenerate, config=asdict(cfg))


def variational_truncate(a, cfg: TruncationConfig, *, initial: SiteTensor | None = None,
                         method: str = "variational") -> TruncationResult:
    """Variationally compress an iMPS to memory dimension ``cfg.d_tilde``.

    Each restart iterates: canonicalize the ansatz; take the leading left
    eigenvector ``G_l`` of ``sum_x A_l^x (x) conj(Ã_l^x)`` and right
    eigenvector ``G_r`` of ``sum_x A_r^x (x) conj(Ã_r^x)``; set
    ``Ã_c = G_l A_c G_r`` and ``C̃ = G_l C G_r``; recover a left canonical
    ``Ã_l`` by polar decompositions; stop when
    ``Delta = ||Ã_c / eta - Ã_l C̃||_F`` drops below ``cfg.delta_thresh``,
    after ``cfg.max_iters`` iterations, or when the best rate stalls.  The
    best ansatz seen (lowest QFDR) is returned across all restarts.

    Raises
    ------
    ConvergenceError
        If no restart reaches ``delta_thresh`` and ``cfg.raise_on_failure``;
        the best result is attached as ``exc.result``.
    """
    target = _as_bundle(a, cfg.rank_tol)
    if cfg.d_tilde >= target.bond_dim:
        return _trivial_result(target, method, cfg)
    if initial is not None:
        starts = [(None, initial)]
    elif cfg.init == "direct":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TieWarning)
            starts = [(None, direct_truncate(target, cfg.d_tilde))]
    else:
        children = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
        starts = [(k, _init_ansatz(target, cfg.d_tilde, np.random.default_rng(c)))
                  for k, c in enumerate(children)]
    screening = cfg.screen_iters is not None and len(starts) > 1
    run_cfg = replace(cfg, max_iters=min(cfg.screen_iters, cfg.max_iters)) if screening else cfg
    runs = [(k, _run(target, start, run_cfg)) for k, start in starts]
    if screening:
        lead = min(range(len(runs)), key=lambda i: (runs[i][1]["best"][0], i))
        k, first = runs[lead]
        if not first["converged"] and first["iterations"] < cfg.max_iters:
            runs[lead] = (k, _resume(target, first, cfg))
    # deterministic merge: lowest rate, ties by restart order
    order = sorted(range(len(runs)), key=lambda i: (runs[i][1]["best"][0], i))
    k_best, run = runs[order[0]]
    rate, ans = run["best"]
    result = TruncationResult(
        A_tilde=ans.A_l, bundle=ans, qfdr=float(rate), converged=any(r["converged"] for _, r in runs),
        iterations=run["iterations"], delta=run["last_delta"], eta_history=run["eta"],
        delta_history=run["delta"], best_qfdr_history=run["best_hist"], method=method,
        d_tilde=cfg.d_tilde, seed=cfg.seed, restart=k_best,
        restart_qfdrs=tuple(float(r["best"][0]) for _, r in runs),
        degenerate=ans.degenerate or target.degenerate,
        max_completeness_error=max(r["max_comp"] for _, r in runs),
        max_eta_mismatch=max(r["max_mismatch"] for _, r in runs), config=asdict(cfg))
    if not result.converged and cfg.raise_on_failure:
        raise ConvergenceError(
            f"no restart reached Delta < {cfg.delta_thresh:g} (best Delta {run['last_delta']:.3g})",
            residual=run["last_delta"], result=result)
    return result


def two_step_truncate(a, cfg: TruncationConfig) -> TruncationResult:
    """Direct truncation refined by the variational iteration.

    The variational result replaces the direct one only if its QFDR is not
    larger, so the returned rate never exceeds the direct truncation rate.
    """
    from .divergences import qfdr

    target = _as_bundle(a, cfg.rank_tol)
    if cfg.d_tilde >= target.bond_dim:
        return _trivial_result(target, "two_step", cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TieWarning)
        seed = direct_truncate(target, cfg.d_tilde)
    tie = any(issubclass(w.category, TieWarning) for w in caught)
    direct_rate = qfdr(target.left_op, seed).rate
    try:
        res = variational_truncate(target, cfg, initial=seed, method="two_step")
    except ConvergenceError as exc:
        res = exc.result
    if res.qfdr > direct_rate:
        seed_bundle = canonicalize(seed, 0.0)
        res = TruncationResult(
            A_tilde=seed_bundle.A_l, bundle=seed_bundle, qfdr=direct_rate,
            converged=res.converged, iterations=res.iterations, delta=res.delta,
            eta_history=res.eta_history, delta_history=res.delta_history,
            best_qfdr_history=res.best_qfdr_history, method="two_step", d_tilde=cfg.d_tilde,
            seed=cfg.seed, max_completeness_error=res.max_completeness_error,
            max_eta_mismatch=res.max_eta_mismatch, config=asdict(cfg))
    res = _with(res, tie=tie)
    if not res.converged and cfg.raise_on_failure:
        raise ConvergenceError(
            f"variational refinement did not reach Delta < {cfg.delta_thresh:g}",
            residual=res.delta, result=res)
    return res


def _with(res: TruncationResult, **changes) -> TruncationResult:
    return replace(res, **changes)
