import csv
import json

import pytest

from qdimred.circuit import CircuitBundle
from qdimred.cli import DYSON_COLUMNS, EXIT_CONVERGENCE, EXIT_OK, WALK_COLUMNS, main


def _config(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_walk_sweep_small(tmp_path):
    out = tmp_path / "walk.csv"
    code = main(["walk-sweep", "--N", "8", "--d-tilde", "3,5", "--dist", "normal",
                 "--out", str(out), "--config", _config(tmp_path, {"restarts": 2})])
    assert code in (EXIT_OK, EXIT_CONVERGENCE)
    rows = _rows(out)
    assert list(rows[0]) == WALK_COLUMNS
    assert [int(r["d_tilde"]) for r in rows] == [3, 5]
    assert all(r["seed"] == "42" for r in rows)
    side = json.loads((tmp_path / "walk.csv.json").read_text())
    assert side["columns"] == WALK_COLUMNS and len(side["rows"]) == 2
    assert (code == EXIT_OK) == all(r["converged"] == "true" for r in rows)


def test_walk_sweep_is_byte_identical(tmp_path):
    args = ["walk-sweep", "--N", "8", "--d-tilde", "3", "--dist", "uniform",
            "--config", _config(tmp_path, {"restarts": 2, "max_iters": 50})]
    main(args + ["--out", str(tmp_path / "a.csv")])
    main(args + ["--out", str(tmp_path / "b.csv"), "--jobs", "2"])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_walk_sweep_budget_exhaustion_exit_code(tmp_path):
    cfg = _config(tmp_path, {"restarts": 1, "max_iters": 2, "screen_iters": None})
    code = main(["walk-sweep", "--N", "16", "--d-tilde", "3", "--dist", "uniform",
                 "--config", cfg, "--out", str(tmp_path / "w.csv")])
    assert code == EXIT_CONVERGENCE
    assert _rows(tmp_path / "w.csv")[0]["converged"] == "false"


def test_dyson_sweep_small(tmp_path):
    cfg = _config(tmp_path, {"restarts": 2, "grid_steps": 11, "refine_iters": 5,
                             "mc_length": 200, "mc_samples": 20})
    out = tmp_path / "dyson.csv"
    code = main(["dyson-sweep", "--L", "2", "--T", "1.0", "--config", cfg, "--out", str(out)])
    assert code == EXIT_OK
    rows = _rows(out)
    assert list(rows[0]) == DYSON_COLUMNS and len(rows) == 1
    assert float(rows[0]["classical_fdr_lower"]) >= 0


def test_truncate_and_export(tmp_path):
    proc = {"kind": "dyson", "L": 3, "T": 2.0}
    out = tmp_path / "t.json"
    assert main(["truncate", "--config", _config(tmp_path, {"process": proc, "d_tilde": 2,
                                                            "restarts": 2}),
                 "--out", str(out)]) == EXIT_OK
    obj = json.loads(out.read_text())
    assert obj["tensor"]["bond_dim"] == 2
    circ = tmp_path / "c.json"
    assert main(["export-circuit", "--d-tilde", "2", "--out", str(circ), "--config",
                 _config(tmp_path, {"process": proc, "restarts": 2})]) == EXIT_OK
    bundle = CircuitBundle.from_json(circ.read_text())
    assert bundle.d == 2
    bundle.check()


def test_direct_truncation_method(tmp_path, capsys):
    proc = {"kind": "walk", "N": 8, "dist": "normal"}
    assert main(["truncate", "--method", "direct", "--d-tilde", "3",
                 "--config", _config(tmp_path, {"process": proc})]) == EXIT_OK
    obj = json.loads(capsys.readouterr().out)
    assert obj["method"] == "direct" and obj["qfdr"] >= 0


def test_bounds_and_classical(tmp_path, capsys):
    assert main(["bounds", "--d-tilde", "3",
                 "--config", _config(tmp_path, {"spectrum": [0.5, 0.3, 0.15, 0.05]})]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["epsilon"] == pytest.approx(0.05)
    assert main(["classical", "--config",
                 _config(tmp_path, {"process": {"kind": "coin", "p": 0.5}})]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["rate"] <= 1e-10
    assert main(["classical", "--d-tilde", "2", "--config",
                 _config(tmp_path, {"process": {"kind": "walk", "N": 4}})]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["label"] == "construction value"


def test_props_small(tmp_path, capsys):
    assert main(["props", "--config", _config(tmp_path, {"n_spectra": 200, "n_imps": 5})]) \
        == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and set(report["suites"]) == {
        "entropy_bounds", "finite_fidelity", "canonical_form", "circuit"}


def test_errors_exit_nonzero(tmp_path):
    assert main(["truncate", "--config", _config(tmp_path, {"process": {"kind": "nope"},
                                                            "d_tilde": 1})]) == 1
    with pytest.raises(SystemExit) as info:
        main(["walk-sweep", "--bogus"])
    assert info.value.code == 2
