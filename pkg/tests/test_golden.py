"""Shape and ordering checks on the stored sweep results.

The sweeps themselves take tens of minutes on one core, so the full tables
live in ``results/`` and only a few rows are recomputed here.
"""

import csv
from collections import defaultdict
from pathlib import Path

import pytest

from qdimred.cli import main

RESULTS = Path(__file__).resolve().parent.parent / "results"


def _load(path):
    with open(RESULTS / path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def walk_rows():
    return _load("walk_sweep.csv")


def test_walk_quantum_below_classical(walk_rows):
    for r in walk_rows:
        assert float(r["qfdr"]) < float(r["classical_fdr"]), r


def test_walk_rates_fall_with_dimension(walk_rows):
    by_key = defaultdict(dict)
    for r in walk_rows:
        by_key[r["dist"], int(r["N"])][int(r["d_tilde"])] = float(r["qfdr"])
    for rates in by_key.values():
        values = [rates[d] for d in sorted(rates)]
        assert values == sorted(values, reverse=True)


def test_walk_memory_grows_with_ring_size(walk_rows):
    for dist in ("uniform", "normal"):
        cq = {int(r["N"]): float(r["C_q"]) for r in walk_rows if r["dist"] == dist}
        values = [cq[n] for n in sorted(cq)]
        assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
    uniform = {int(r["N"]): float(r["C_q"]) for r in walk_rows if r["dist"] == "uniform"}
    assert uniform[256] == pytest.approx(3.4, abs=0.1)


def test_walk_normal_rows_converge(walk_rows):
    normal = [r for r in walk_rows if r["dist"] == "normal"]
    assert all(r["converged"] == "true" for r in normal)
    best = {int(r["N"]): float(r["qfdr"]) for r in normal if r["d_tilde"] == "7"}
    assert best[256] < 1e-6


def test_walk_rows_reproduce(tmp_path, walk_rows):
    out = tmp_path / "w.csv"
    main(["walk-sweep", "--N", "8", "--dist", "normal", "--out", str(out)])
    fresh = _load(out)
    stored = [r for r in walk_rows if r["dist"] == "normal" and r["N"] == "8"]
    assert fresh == stored


def test_dyson_table_shape():
    rows = _load("dyson_sweep.csv")
    assert {int(r["L"]) for r in rows} == {3, 5, 7}
    for r in rows:
        assert float(r["qfdr"]) <= float(r["classical_fdr_lower"])
        assert float(r["C_q"]) <= 1.0
    hot = max(float(r["T"]) for r in rows)
    assert all(float(r["qfdr"]) < 1e-3 for r in rows if float(r["T"]) == hot)
