"""Batch command-line interface.

Every subcommand reads an optional JSON config, lets command-line flags
override it, and writes either a CSV table with a JSON sidecar (sweeps) or
a JSON document.  Exit codes: 0 ok, 2 some rows failed to converge,
3 an invariant check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bounds as bnd
from .circuit import dilate
from .classical import coarse_grain_walk, two_state_search, walk_classical_rate
from .divergences import kl_rate_mc, qfdr
from .errors import ConvergenceError, NumericalError, QDimRedError
from .imps import canonicalize, memory_costs, random_imps
from .processes import (DysonSpec, UnifilarModel, WalkSpec, coin, cyclic_walk_model,
                        dyson_ising_model, qsample_imps)
from .serialize import tensor_from_json, tensor_to_json
from .truncation import TieWarning, TruncationConfig, direct_truncate, two_step_truncate, \
    variational_truncate

EXIT_OK, EXIT_CONVERGENCE, EXIT_INVARIANT = 0, 2, 3
SCHEMA_VERSION = 1

WALK_COLUMNS = ["dist", "N", "d_tilde", "qfdr", "classical_fdr", "C_q", "D_q", "eps",
                "thm1_bound", "seed", "converged"]
DYSON_COLUMNS = ["L", "T", "d_tilde", "qfdr", "classical_fdr_lower", "kl_quantum",
                 "kl_classical_lower", "C_q", "seed"]

WALK_DEFAULTS = {"dists": ["uniform", "normal"], "width": 0.1,
                 "N": [8, 16, 32, 64, 128, 256], "d_tilde": [3, 5, 7], "restarts": 8,
                 "max_iters": 600, "screen_iters": 25, "delta_thresh": 1e-10, "jobs": 1}
# default temperature grid: six roughly log-spaced points
DYSON_DEFAULTS = {"L": [3, 5, 7], "T": [0.5, 1.0, 2.0, 5.0, 10.0, 20.0], "J0": 1.0,
                  "delta": 2.0, "d_tilde": 2, "restarts": 8, "max_iters": 10_000, "screen_iters": None,
                  "delta_thresh": 1e-10, "grid_steps": 101, "refine_iters": 40,
                  "mc_length": 2000, "mc_samples": 400, "jobs": 1}


# ------------------------------------------------------------------ helpers


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _write_table(rows, columns, out, sidecar):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    if out is None:
        sys.stdout.write(buf.getvalue())
        return
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(buf.getvalue())
    Path(str(out) + ".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")


def _write_json(obj, out):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _map(fn, jobs, n_jobs):
    """Run independent jobs; output order always follows input order."""
    if n_jobs <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, jobs))


def build_process(spec: dict):
    """Process from a config dict; returns a ``UnifilarModel`` or a ``SiteTensor``."""
    kind = spec.get("kind")
    if kind == "walk":
        return cyclic_walk_model(WalkSpec(int(spec["N"]), spec.get("dist", "uniform"),
                                          float(spec.get("width", 0.1))))
    if kind == "dyson":
        return dyson_ising_model(DysonSpec(int(spec["L"]), float(spec["T"]),
                                           float(spec.get("J0", 1.0)),
                                           float(spec.get("delta", 2.0))))
    if kind == "coin":
        return coin(float(spec["p"]))
    if kind == "model":
        return UnifilarModel.from_json(Path(spec["path"]).read_text())
    if kind == "tensor":
        return tensor_from_json(Path(spec["path"]).read_text())
    raise QDimRedError(f"unknown process kind {kind!r}")


def _as_tensor(proc):
    return qsample_imps(proc) if isinstance(proc, UnifilarModel) else proc


def _truncate(bundle, d_tilde, cfg: dict, seed, method="variational"):
    tcfg = TruncationConfig(d_tilde=d_tilde, restarts=int(cfg.get("restarts", 8)),
                            max_iters=int(cfg.get("max_iters", 10_000)),
                            delta_thresh=float(cfg.get("delta_thresh", 1e-10)),
                            screen_iters=cfg.get("screen_iters"),
                            seed=seed, raise_on_failure=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TieWarning)
        if method == "direct":
            small = direct_truncate(bundle, d_tilde)
            return small, qfdr(bundle.left_op, small).rate, True, None
        fn = two_step_truncate if method == "two_step" else variational_truncate
        res = fn(bundle, tcfg)
    return res.A_tilde, res.qfdr, res.converged, res


# -------------------------------------------------------------- walk sweep


def _walk_job(job):
    dist, n, width, d_tildes, cfg, seed = job
    model = cyclic_walk_model(WalkSpec(n, dist, width))
    bundle = canonicalize(qsample_imps(model))
    c_q, d_q = memory_costs(bundle)
    rows = []
    for dt in d_tildes:
        _, rate, converged, res = _truncate(bundle, min(dt, bundle.bond_dim), cfg, seed)
        eps = bnd.discarded_weight(bundle.spectrum, min(dt, bundle.bond_dim))
        t1 = bnd.thm1_bound(eps)[0] if eps < 1 else math.inf
        classical = walk_classical_rate(model, dt).rate if dt <= n else 0.0
        rows.append({"dist": dist, "N": n, "d_tilde": dt, "qfdr": float(rate),
                     "classical_fdr": float(classical), "C_q": float(c_q), "D_q": float(d_q),
                     "eps": float(eps), "thm1_bound": float(t1), "seed": seed,
                     "converged": bool(converged),
                     "_diag": {"effective_dim": bundle.bond_dim,
                               "iterations": None if res is None else res.iterations,
                               "delta": None if res is None else res.delta,
                               "restart_qfdrs": [] if res is None else list(res.restart_qfdrs)}})
    return rows


def run_walk_sweep(cfg: dict, seed: int):
    cfg = {**WALK_DEFAULTS, **cfg}
    jobs = [(dist, int(n), float(cfg["width"]), [int(d) for d in cfg["d_tilde"]], cfg, seed)
            for dist in cfg["dists"] for n in cfg["N"]]
    if not jobs or not cfg["d_tilde"]:
        raise QDimRedError("walk sweep needs non-empty N, dists and d_tilde lists")
    rows = [r for chunk in _map(_walk_job, jobs, int(cfg["jobs"])) for r in chunk]
    return rows, cfg


# ------------------------------------------------------------- Dyson sweep


def _dyson_job(job):
    L, T, cfg, seed = job
    model = dyson_ising_model(DysonSpec(L, T, float(cfg["J0"]), float(cfg["delta"])))
    bundle = canonicalize(qsample_imps(model))
    c_q, _ = memory_costs(bundle)
    dt = int(cfg["d_tilde"])
    small, rate, converged, res = _truncate(bundle, min(dt, bundle.bond_dim), cfg, seed)
    kl_q = kl_rate_mc(model, small, length=int(cfg["mc_length"]),
                      n_samples=int(cfg["mc_samples"]), seed=seed)
    fdr_c = two_state_search(model, "fdr", int(cfg["grid_steps"]), int(cfg["refine_iters"]))
    kl_c = two_state_search(model, "kl", int(cfg["grid_steps"]), int(cfg["refine_iters"]))
    return {"L": L, "T": T, "d_tilde": dt, "qfdr": float(rate),
            "classical_fdr_lower": fdr_c.rate, "kl_quantum": float(kl_q.rate),
            "kl_classical_lower": kl_c.rate, "C_q": float(c_q), "seed": seed,
            "_converged": bool(converged),
            "_diag": {"kl_quantum_stderr": kl_q.stderr, "effective_dim": bundle.bond_dim,
                      "classical_fdr_topology": fdr_c.topology.id,
                      "classical_fdr_params": list(fdr_c.params),
                      "classical_kl_topology": kl_c.topology.id,
                      "classical_kl_params": list(kl_c.params),
                      "restart_qfdrs": [] if res is None else list(res.restart_qfdrs)}}


def run_dyson_sweep(cfg: dict, seed: int):
    cfg = {**DYSON_DEFAULTS, **cfg}
    if not cfg["L"] or not cfg["T"]:
        raise QDimRedError("Dyson sweep needs non-empty L and T lists")
    jobs = [(int(L), float(T), cfg, seed) for L in cfg["L"] for T in cfg["T"]]
    return _map(_dyson_job, jobs, int(cfg["jobs"])), cfg


# --------------------------------------------------------- property suite


def run_property_suite(cfg: dict, seed: int) -> dict:
    """Randomized invariant checks; every suite records counts and worst residuals."""
    n_spectra = int(cfg.get("n_spectra", 10_000))
    n_imps = int(cfg.get("n_imps", 100))
    rng = np.random.default_rng(seed)
    suites = {}

    viol2 = viol_c = 0
    worst2 = worst_c = -math.inf
    for _ in range(n_spectra):
        d = int(rng.integers(4, 13))
        dt = int(rng.integers(3, d))
        lam = bnd.random_spectrum(d, rng)
        eps = bnd.discarded_weight(lam, dt)
        h = bnd.shannon_entropy(lam)
        b2, bc = bnd.thm2_bound(h, d, dt), bnd.cor1_bound(h, dt)
        worst2, worst_c = max(worst2, eps - b2), max(worst_c, eps - bc)
        viol2 += eps > b2
        viol_c += eps > bc
    suites["entropy_bounds"] = {"cases": n_spectra, "thm2_violations": int(viol2),
                                "cor1_violations": int(viol_c), "worst_thm2_margin": worst2,
                                "worst_cor1_margin": worst_c,
                                "passed": viol2 == 0 and viol_c == 0}

    fails, worst_fid, worst_canon, worst_circuit = 0, -math.inf, 0.0, 0.0
    cases = 0
    for _ in range(n_imps):
        d = int(rng.integers(2, 5))
        n_sym = int(rng.integers(2, 4))
        a = random_imps(d, n_sym, rng, real=bool(rng.integers(2)))
        bundle = canonicalize(a)
        worst_canon = max(worst_canon, *bundle.completeness_errors(), *bundle.gauge_errors())
        dt = int(rng.integers(1, bundle.bond_dim + 1))
        for L in (2, 4, 6):
            chk = bnd.finite_fidelity_check(bundle, dt, L)
            cases += 1
            fails += not chk.passed
            worst_fid = max(worst_fid, chk.lower_bound - chk.overlap)
        circuit = dilate(bundle.A_l)
        try:
            rep = circuit.check()
            worst_circuit = max(worst_circuit, *rep.values())
        except NumericalError as exc:
            worst_circuit = max(worst_circuit, exc.achieved or math.inf)
    suites["finite_fidelity"] = {"cases": cases, "violations": fails,
                                 "worst_margin": worst_fid, "passed": fails == 0}
    suites["canonical_form"] = {"cases": n_imps, "worst_residual": worst_canon,
                                "passed": worst_canon <= 1e-10}
    suites["circuit"] = {"cases": n_imps, "worst_residual": worst_circuit,
                         "passed": worst_circuit <= 1e-10}
    return {"seed": seed, "suites": suites,
            "passed": all(s["passed"] for s in suites.values())}


# ---------------------------------------------------------------- commands


def _load_config(path) -> dict:
    if path is None:
        return {}
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise QDimRedError("config must be a JSON object")
    return cfg


def _cmd_walk(args, cfg):
    for key in ("N", "d_tilde"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    if args.dist is not None:
        cfg["dists"] = args.dist
    if args.jobs is not None:
        cfg["jobs"] = args.jobs
    rows, full = run_walk_sweep(cfg, args.seed)
    sidecar = {"schema": f"walk_sweep/{SCHEMA_VERSION}", "columns": WALK_COLUMNS,
               "config": full, "rows": rows}
    _write_table(rows, WALK_COLUMNS, args.out, sidecar)
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_CONVERGENCE


def _cmd_dyson(args, cfg):
    for key in ("L", "T"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    if args.jobs is not None:
        cfg["jobs"] = args.jobs
    rows, full = run_dyson_sweep(cfg, args.seed)
    sidecar = {"schema": f"dyson_sweep/{SCHEMA_VERSION}", "columns": DYSON_COLUMNS,
               "config": full, "rows": rows}
    _write_table(rows, DYSON_COLUMNS, args.out, sidecar)
    return EXIT_OK if all(r["_converged"] for r in rows) else EXIT_CONVERGENCE


def _cmd_truncate(args, cfg):
    if args.d_tilde is not None:
        cfg["d_tilde"] = args.d_tilde
    if args.method is not None:
        cfg["method"] = args.method
    target = canonicalize(_as_tensor(build_process(cfg["process"])))
    small, rate, converged, res = _truncate(target, int(cfg["d_tilde"]), cfg, args.seed,
                                            cfg.get("method", "variational"))
    if res is not None:
        obj = json.loads(res.to_json())
    else:
        obj = {"method": "direct", "qfdr": rate, "converged": True,
               "tensor": json.loads(tensor_to_json(small))}
    _write_json(obj, args.out)
    return EXIT_OK if converged else EXIT_CONVERGENCE


def _cmd_bounds(args, cfg):
    if args.d_tilde is not None:
        cfg["d_tilde"] = args.d_tilde
    dt = int(cfg["d_tilde"])
    if "spectrum" in cfg:
        rep = bnd.bounds_report(cfg["spectrum"], dt)
    else:
        bundle = canonicalize(_as_tensor(build_process(cfg["process"])))
        measured = None
        if cfg.get("measure", True) and dt < bundle.bond_dim:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TieWarning)
                measured = qfdr(bundle.left_op, direct_truncate(bundle, dt)).rate
        rep = bnd.bounds_report(bundle.spectrum, dt, measured)
    _write_json(json.loads(rep.to_json()), args.out)
    return EXIT_OK


def _cmd_classical(args, cfg):
    proc = build_process(cfg["process"])
    if not isinstance(proc, UnifilarModel):
        raise QDimRedError("the classical baselines need a unifilar model")
    if cfg["process"].get("kind") == "walk":
        dc = int(args.d_tilde if args.d_tilde is not None else cfg.get("d_tilde", 3))
        rep = walk_classical_rate(proc, dc)
        coarse = coarse_grain_walk(proc, dc)
        obj = {"rate": rep.rate, "label": rep.extra["label"], "d_c": dc,
               "model": json.loads(coarse.to_json())}
    else:
        objective = args.objective or cfg.get("objective", "fdr")
        res = two_state_search(proc, objective, int(cfg.get("grid_steps", 101)),
                               int(cfg.get("refine_iters", 40)))
        obj = json.loads(res.to_json())
    _write_json(obj, args.out)
    return EXIT_OK


def _cmd_export(args, cfg):
    if args.d_tilde is not None:
        cfg["d_tilde"] = args.d_tilde
    proc = _as_tensor(build_process(cfg["process"]))
    bundle = canonicalize(proc)
    converged = True
    if "d_tilde" in cfg and int(cfg["d_tilde"]) < bundle.bond_dim:
        small, _, converged, _ = _truncate(bundle, int(cfg["d_tilde"]), cfg, args.seed,
                                           cfg.get("method", "variational"))
    else:
        small = bundle.A_l
    circuit = dilate(small)
    try:
        circuit.check()
    except NumericalError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    text = circuit.to_json() + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return EXIT_OK if converged else EXIT_CONVERGENCE


def _cmd_props(args, cfg):
    report = run_property_suite(cfg, args.seed)
    _write_json(report, args.out)
    return EXIT_OK if report["passed"] else EXIT_INVARIANT


def _int_list(text):
    return [int(v) for v in text.split(",")]


def _float_list(text):
    return [float(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdimred", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output path (stdout when omitted)")
        p.add_argument("--seed", type=int, default=42, help="master seed (default 42)")
        return p

    p = common(sub.add_parser("walk-sweep", help="cyclic random walk sweep (CSV)"))
    p.add_argument("--N", type=_int_list)
    p.add_argument("--d-tilde", dest="d_tilde", type=_int_list)
    p.add_argument("--dist", type=lambda s: s.split(","))
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=_cmd_walk)

    p = common(sub.add_parser("dyson-sweep", help="Dyson-Ising sweep (CSV)"))
    p.add_argument("--L", type=_int_list)
    p.add_argument("--T", type=_float_list)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=_cmd_dyson)

    p = common(sub.add_parser("truncate", help="truncate one process (JSON)"))
    p.add_argument("--d-tilde", dest="d_tilde", type=int)
    p.add_argument("--method", choices=["direct", "variational", "two_step"])
    p.set_defaults(func=_cmd_truncate)

    p = common(sub.add_parser("bounds", help="evaluate the truncation bounds (JSON)"))
    p.add_argument("--d-tilde", dest="d_tilde", type=int)
    p.set_defaults(func=_cmd_bounds)

    p = common(sub.add_parser("classical", help="classical baseline (JSON)"))
    p.add_argument("--d-tilde", dest="d_tilde", type=int)
    p.add_argument("--objective", choices=["fdr", "kl"])
    p.set_defaults(func=_cmd_classical)

    p = common(sub.add_parser("export-circuit", help="export a dilated circuit (JSON)"))
    p.add_argument("--d-tilde", dest="d_tilde", type=int)
    p.set_defaults(func=_cmd_export)

    p = common(sub.add_parser("props", help="randomized property suite (JSON)"))
    p.set_defaults(func=_cmd_props)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (QDimRedError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
