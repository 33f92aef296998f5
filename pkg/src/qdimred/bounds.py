"""Guarantees relating truncation error to distortion and memory cost.

All spectra here are Schmidt spectra in the steady-state convention:
non-negative values summing to one, so their Shannon entropy is the
quantum information cost ``C_q``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, PreconditionError, ResourceError
from .imps import SchmidtSpectrum, SiteTensor, canonicalize, finite_qsample, shannon_entropy, uhlmann_fidelity

FIDELITY_MAX_WORDS = 10**6


def _values(spectrum):
    if isinstance(spectrum, SchmidtSpectrum):
        return spectrum.values
    return np.sort(np.asarray(spectrum, dtype=float))[::-1]


def discarded_weight(spectrum, d_tilde: int) -> float:
    """Total weight ``eps`` of the Schmidt values beyond the largest ``d_tilde``."""
    lam = _values(spectrum)
    if not 0 <= d_tilde <= len(lam):
        raise PreconditionError(f"d_tilde={d_tilde} outside 0..{len(lam)}")
    return float(min(1.0, max(0.0, np.sum(lam[d_tilde:]))))


def thm1_bound(eps: float, L: int | None = None) -> tuple[float, int | None]:
    """Leading term ``eps / (2 (1 - L eps) ln 2)`` of the QFDR bound.

    Without ``L`` the horizon ``L* = max(1, floor(1 / (2 eps)))`` is used.
    The ``O(1/L)`` remainder of the bound is not included.  For ``eps = 0``
    the bound is zero at every horizon and ``L*`` is reported as ``None``.

    Returns
    -------
    bound : float
    L_star : int or None
    """
    if not 0.0 <= eps < 1.0:
        raise DomainError(f"eps={eps} must lie in [0, 1)")
    if eps == 0.0:
        return 0.0, L
    if L is None:
        L = max(1, math.floor(1.0 / (2.0 * eps)))
    if L < 1:
        raise DomainError("L must be positive")
    if L * eps >= 1.0:
        raise DomainError(f"L * eps = {L * eps:g} >= 1: the bound is vacuous")
    return eps / (2.0 * (1.0 - L * eps) * math.log(2.0)), L


def thm2_bound(H: float, d: int, d_tilde: int) -> float:
    """Upper bound on the discarded weight from the spectrum entropy ``H`` (bits)."""
    if d < 3 or not 3 <= d_tilde < d:
        raise DomainError(f"need d >= 3 and 3 <= d_tilde < d, got d={d}, d_tilde={d_tilde}")
    if H < 0:
        raise DomainError("entropy must be non-negative")
    denom = (d_tilde - 2) / (d - d_tilde) * math.log2(d - d_tilde) + math.log2(d_tilde)
    return H / denom


def cor1_bound(C_q: float, d_tilde: int) -> float:
    """Looser entropy bound ``C_q / log2(d_tilde)`` on the discarded weight."""
    if d_tilde < 3:
        raise DomainError(f"d_tilde={d_tilde} must be at least 3")
    if C_q < 0:
        raise DomainError("C_q must be non-negative")
    return C_q / math.log2(d_tilde)


@dataclass(frozen=True)
class FidelityCheck:
    overlap: float
    lower_bound: float
    passed: bool
    epsilon: float
    L: int
    normalized_fidelity: float | None = None


def finite_fidelity_check(a, d_tilde: int, L: int, *, tol: float = 1e-9) -> FidelityCheck:
    """Check ``|<psi_d^L | psi_dt^L>| >= 1 - L eps`` for direct truncation.

    ``psi_d^L`` is an L-site segment of the infinite chain purified at both
    ends; in right canonical form its amplitudes are ``C A_r ... A_r``.
    ``psi_dt^L`` replaces the Schmidt weights at the left boundary and at the
    ``L - 1`` interior bonds by their projection onto the ``d_tilde``
    dominant values (L projected bonds in total), the state whose overlap the
    inequality controls.  The fidelity of the ``L``-site reduced states of the
    target and of the renormalized direct truncation is reported as well.
    """
    from .truncation import direct_truncate

    bundle = a if not isinstance(a, SiteTensor) else canonicalize(a)
    n_sym = len(bundle.symbols)
    if n_sym ** L > FIDELITY_MAX_WORDS:
        raise ResourceError(f"{n_sym}^{L} words exceed the enumeration limit")
    lam = bundle.spectrum.values
    d = len(lam)
    if not 1 <= d_tilde <= d:
        raise PreconditionError(f"d_tilde={d_tilde} outside 1..{d}")
    eps = discarded_weight(lam, d_tilde)
    ar = bundle.A_r.matrices
    proj = np.zeros(d)
    proj[:d_tilde] = 1.0
    # boundary contraction over the sites from right to left
    x = np.einsum("xab,xcb->ac", ar, ar.conj())
    for _ in range(L - 1):
        x = np.einsum("xab,b,bc,xdc->ad", ar, proj, x, ar.conj())
    overlap = float(abs(np.sum(proj * lam * np.diag(x))))
    lower = 1.0 - L * eps
    normalized = None
    if d_tilde < d:
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            small = direct_truncate(bundle, d_tilde)
        normalized = uhlmann_fidelity(finite_qsample(bundle.A_l, L), finite_qsample(small, L))
    else:
        normalized = 1.0
    return FidelityCheck(overlap, lower, overlap >= lower - tol, eps, L, normalized)


@dataclass(frozen=True)
class BoundsReport:
    """Bounds for one (spectrum, d_tilde) pair, with the measured QFDR if known."""

    epsilon: float
    thm1_bound: float
    L_star: int | None
    thm2_bound: float | None
    cor1_bound: float | None
    C_q: float
    D_q: float
    D_tilde_q: float
    measured_qfdr: float | None = None
    note: str = "thm1_bound is the leading term only; the O(1/L) remainder is excluded"

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def bounds_report(spectrum, d_tilde: int, measured_qfdr: float | None = None) -> BoundsReport:
    """Evaluate every bound that applies to a spectrum and target dimension."""
    lam = _values(spectrum)
    d = int(np.count_nonzero(lam > 0)) if len(lam) else 0
    d = max(d, 1)
    eps = discarded_weight(lam, min(d_tilde, len(lam)))
    h = shannon_entropy(lam)
    t1, l_star = thm1_bound(eps) if eps < 1 else (math.inf, None)
    t2 = thm2_bound(h, len(lam), d_tilde) if len(lam) >= 3 and 3 <= d_tilde < len(lam) else None
    c1 = cor1_bound(h, d_tilde) if d_tilde >= 3 else None
    return BoundsReport(eps, t1, l_star, t2, c1, h, math.log2(len(lam)),
                        math.log2(d_tilde), measured_qfdr)


def random_spectrum(d: int, rng) -> np.ndarray:
    """Random probability vector mixing flat, peaked and sparse shapes."""
    kind = rng.integers(3)
    if kind == 0:
        v = rng.dirichlet(np.ones(d))
    elif kind == 1:
        v = rng.dirichlet(np.full(d, 0.2))
    else:
        v = np.exp(-rng.exponential(3.0) * np.arange(d)) * rng.random(d)
        v = v / v.sum()
    return np.sort(v)[::-1]
