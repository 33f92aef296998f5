"""JSON encodings of tensors and complex matrices.

Doubles are written with Python's shortest round-trip representation (at
most 17 significant digits), so decoding reproduces every bit.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import StructuralError
from .imps import SiteTensor


def complex_to_obj(m) -> list:
    """Nested lists with each entry as ``[re, im]``."""
    m = np.asarray(m)
    return np.stack([m.real, m.imag], axis=-1).astype(float).tolist()


def complex_from_obj(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1] != 2:
        raise StructuralError("complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def tensor_to_obj(t: SiteTensor) -> dict:
    return {
        "bond_dim": t.bond_dim,
        "symbols": list(t.symbols),
        "matrices": {s: complex_to_obj(t.matrices[k]) for k, s in enumerate(t.symbols)},
    }


def tensor_from_obj(obj: dict) -> SiteTensor:
    symbols = [str(s) for s in obj["symbols"]]
    missing = set(symbols) ^ set(obj["matrices"])
    if missing:
        raise StructuralError(f"symbols and matrices disagree on {sorted(missing)}")
    mats = np.stack([complex_from_obj(obj["matrices"][s]) for s in symbols])
    if mats.shape[1:] != (obj["bond_dim"], obj["bond_dim"]):
        raise StructuralError(f"matrices of shape {mats.shape[1:]} for bond_dim {obj['bond_dim']}")
    if not np.any(mats.imag):
        mats = mats.real.copy()
    return SiteTensor(mats, tuple(symbols))


def tensor_to_json(t: SiteTensor) -> str:
    return json.dumps(tensor_to_obj(t))


def tensor_from_json(text: str) -> SiteTensor:
    return tensor_from_obj(json.loads(text))
