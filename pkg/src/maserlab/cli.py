"""Command-line front end.

    maserlab <kind> --config run.json --out results/ [--overwrite]

Every run writes its CSV files plus ``manifest.json`` (resolved config,
version, leakage totals, output list). Wall time goes to ``timing.txt`` so the
CSV/JSON outputs stay byte-identical across re-runs. Exit codes: 0 success,
2 invalid config or path collision, 3 budget or leakage abort.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .channel import TruncationLeakageError, default_workers, sector_operator_hs, sector_operator_trace
from .dynamics import (BudgetExceeded, EPSILON_SEQUENCES, iterate, metastable_fixed_residual,
                       metastable_lifetime, mixing_budget, slow_mixing_witness)
from .params import ModelParams, d_profile
from .resonance import analyze, metastable_state
from .spectral import (gap_scan, l0_bounds, l0_spectrum, peripheral_probe, quasi_for,
                       top_eigenpair_check, tridiagonal_spectrum)
from .state import BandedState, random_density_matrix

KINDS = ("simulate", "spectrum", "resonances", "metastable", "witness", "sweep")
EXIT_OK, EXIT_INVALID, EXIT_BUDGET = 0, 2, 3
CSV_SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer"}
_posint = {"type": "integer", "minimum": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


EXPERIMENT_SCHEMAS = {
    "simulate": _obj({
        "kind": {"const": "simulate"},
        "steps": _posint,
        "auto_budget": {"type": "boolean"},
        "initial": {"enum": ["thermal", "fock", "coherent", "random", "metastable"]},
        "fock_n": {"type": "integer", "minimum": 0},
        "alpha": _num,
        "rank": _posint,
        "k": _posint,
        "path": {"enum": ["band", "kraus"]},
        "picture": {"enum": ["trace", "interaction"]},
        "record_every": _posint,
        "track": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "leakage_budget": _pos,
        "stop_below": _pos,
    }, ["kind"]),
    "spectrum": _obj({
        "kind": {"const": "spectrum"},
        "d_list": {"type": "array", "items": _int},
        "n_max_list": {"type": "array", "items": {"type": "integer", "minimum": 2}},
        "d0_modified": {"type": "boolean"},
        "max_iter": _posint,
    }, ["kind"]),
    "resonances": _obj({
        "kind": {"const": "resonances"},
        "bound": _posint,
        "mode": {"enum": ["float", "exact"]},
        "eta_exact": {"type": "string"},
        "xi_exact": {"type": "string"},
    }, ["kind"]),
    "metastable": _obj({
        "kind": {"const": "metastable"},
        "k_list": {"type": "array", "items": _posint, "minItems": 1},
        "threshold": _pos,
        "relative": {"type": "boolean"},
        "method": {"enum": ["lifting", "iterate"]},
        "budget": _posint,
    }, ["kind"]),
    "witness": _obj({
        "kind": {"const": "witness"},
        "epsilon": {"enum": sorted(EPSILON_SEQUENCES)},
        "budget": _posint,
        "k_max": _posint,
        "d_list": {"type": "array", "items": _posint},
    }, ["kind"]),
    "sweep": _obj({
        "kind": {"const": "sweep"},
        "grid": _obj({
            "eta": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            "xi": {"type": "array", "items": _pos, "minItems": 1},
            "beta_omega0": {"type": "array", "items": _pos, "minItems": 1},
            "n_max": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        }, ["eta", "xi", "beta_omega0", "n_max"]),
        "quasi_bound": _posint,
        "max_points": _posint,
    }, ["kind", "grid"]),
}

CONFIG_SCHEMA = _obj({
    "model": {"oneOf": [
        _obj({"eta": {"type": "number", "minimum": 0}, "xi": {"type": "number", "minimum": 0},
              "omega_tau": _pos}, ["eta", "xi"]),
        _obj({"omega": _pos, "omega0": _pos, "lambda": _num, "tau": _pos},
             ["omega", "omega0", "lambda", "tau"]),
    ]},
    "beta_omega0": _pos,
    "truncation": _obj({"n_max": {"type": "integer", "minimum": 2},
                        "d_max": {"type": "integer", "minimum": 0}}, ["n_max"]),
    "experiment": {"type": "object", "required": ["kind"],
                   "properties": {"kind": {"enum": list(KINDS)}}},
    "seed": {"type": "integer", "minimum": 0},
}, ["model", "beta_omega0", "truncation", "experiment"])

DEFAULTS = {
    "simulate": {"steps": 1000, "auto_budget": False, "initial": "fock", "fock_n": 0, "alpha": 1.0,
                 "rank": 1, "k": 1, "path": "band", "picture": "trace", "record_every": 1,
                 "leakage_budget": 1e-6},
    "spectrum": {"d_list": [0], "n_max_list": [], "d0_modified": False, "max_iter": 20000},
    "resonances": {"bound": 10000, "mode": "float"},
    "metastable": {"k_list": [1, 2, 3, 4], "threshold": 0.5, "relative": True, "method": "lifting"},
    "witness": {"epsilon": "inv_n", "budget": 10000, "k_max": 6, "d_list": [1, 2]},
    "sweep": {"quasi_bound": 10000, "max_points": 1000},
}


class ConfigError(ValueError):
    pass


def validate_config(cfg: dict, kind: str | None = None) -> dict:
    """Check ``cfg`` against the schema and return it with defaults filled in."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None
    exp_kind = cfg["experiment"]["kind"]
    try:
        jsonschema.validate(cfg["experiment"], EXPERIMENT_SCHEMAS[exp_kind])
    except jsonschema.ValidationError as exc:
        path = "/".join(["experiment"] + [str(p) for p in exc.absolute_path])
        raise ConfigError(f"{path}: {exc.message}") from None
    if kind is not None and exp_kind != kind:
        raise ConfigError(f"config is for {exp_kind!r}, not {kind!r}")
    out = copy.deepcopy(cfg)
    out["experiment"] = {**DEFAULTS[exp_kind], **cfg["experiment"]}
    out["truncation"].setdefault("d_max", min(64, out["truncation"]["n_max"]))
    out.setdefault("seed", 0)
    if "eta" in out["model"]:
        out["model"].setdefault("omega_tau", 1.0)
    build_params(out)
    return out


def build_params(cfg: dict) -> ModelParams:
    m = cfg["model"]
    n_max = cfg["truncation"]["n_max"]
    bw = cfg["beta_omega0"]
    try:
        if "eta" in m:
            return ModelParams.from_dimensionless(m["eta"], m["xi"], bw, m.get("omega_tau", 1.0), n_max)
        return ModelParams(m["omega"], m["omega0"], m["lambda"], m["tau"], bw / m["omega0"], n_max)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# --- output helpers ----------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


# --- experiments --------------------------------------------------------------

def _initial_state(cfg, params) -> BandedState:
    e = cfg["experiment"]
    n_max, d_max = params.n_max, cfg["truncation"]["d_max"]
    kind = e["initial"]
    if kind == "thermal":
        return BandedState.thermal(params.beta_omega0, n_max)
    if kind == "fock":
        if e["fock_n"] > n_max:
            raise ConfigError("fock_n exceeds n_max")
        return BandedState.fock(e["fock_n"], n_max)
    if kind == "coherent":
        return BandedState.coherent(e["alpha"], n_max, d_max)
    if kind == "random":
        rng = np.random.default_rng(cfg["seed"])
        return BandedState.from_dense(random_density_matrix(n_max, rng, e["rank"]), d_max)
    quasi = quasi_for(params)
    try:
        return BandedState.diagonal(metastable_state(e["k"], quasi, params.beta_omega0, 1.0, n_max).values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def run_simulate(cfg, params):
    e = cfg["experiment"]
    rho0 = _initial_state(cfg, params)
    track = e.get("track", sorted(rho0.bands))
    steps = e["steps"]
    if e["auto_budget"]:
        tol = e.get("stop_below", 1e-6)
        steps = mixing_budget(params, tol, tuple(d for d in track if d <= 4))
    traj = iterate(rho0, params, steps, path=e["path"], picture=e["picture"], track=track,
                   record_every=e["record_every"], leakage_budget=e["leakage_budget"],
                   stop_below=e.get("stop_below"))
    files = {"trajectory.csv": csv_text(traj.columns(), traj.rows())}
    summary = {"steps_run": traj.steps[-1], "steps_budget": steps,
               "final_trace_distance": traj.trace_distance[-1],
               "max_distance_increase": traj.max_increase(), "exact_trace_norm": traj.exact}
    return files, summary, traj.leakage[-1]


def run_spectrum(cfg, params):
    e = cfg["experiment"]
    files, summary = {}, {}
    rows = []
    if 0 in e["d_list"]:
        rep = l0_spectrum(params)
        lo, hi = l0_bounds(params.beta_omega0, 1.0)
        files["spectrum_d0.csv"] = csv_text(["index", "eigenvalue"], enumerate(rep.eigenvalues))
        chk = top_eigenpair_check(params)
        summary["d0"] = {"lambda_max": chk["lambda_max"], "lambda_2": chk["lambda_2"],
                         "gap": 1.0 - chk["lambda_2"], "cosine": chk["cosine"],
                         "residual": chk["residual"], "resonant": chk["resonant"],
                         "fixed_dim": chk["fixed_dim"], "lower_bound": lo, "upper_bound": hi,
                         "min_eigenvalue": float(rep.eigenvalues[0]),
                         "count_below_lower": int(np.sum(rep.eigenvalues < lo))}
    for d in e["d_list"]:
        if d == 0:
            continue
        for picture, op in (("hs", sector_operator_hs(d, params)),
                            ("trace", sector_operator_trace(d, params))):
            pr = peripheral_probe(op, max_iter=e["max_iter"])
            rows.append([d, picture, pr.estimate, pr.interval[0], pr.interval[1],
                         pr.converged, pr.peripheral_eigenvalue, pr.iterations])
    if rows:
        files["peripheral.csv"] = csv_text(
            ["d", "picture", "radius_estimate", "radius_low", "radius_high", "converged",
             "peripheral_eigenvalue", "iterations"], rows)
    if e["n_max_list"]:
        quasi = quasi_for(params, max(e["n_max_list"]) + 1) if e["d0_modified"] else None
        table = gap_scan(params, sorted(e["n_max_list"]), quasi)
        files["gap_scan.csv"] = csv_text(["n_max", "lambda_1", "lambda_2", "gap"],
                                         ([r["n_max"], r["lambda_1"], r["lambda_2"], r["gap"]]
                                          for r in table))
    return files, summary, 0.0


def run_resonances(cfg, params):
    e = cfg["experiment"]
    if params.xi == 0:
        raise ConfigError("xi = 0: the uncoupled model has no resonance structure")
    eta = e.get("eta_exact", params.eta) if e["mode"] == "exact" else params.eta
    xi = e.get("xi_exact", params.xi) if e["mode"] == "exact" else params.xi
    rep = analyze(eta, xi, params.beta_omega0, e["bound"], e["mode"])
    d_res = d_profile(params, np.asarray(rep.resonances, dtype=float)) if rep.resonances else []
    d_q = d_profile(params, np.asarray(rep.quasi_resonances, dtype=float)) if rep.quasi_resonances else []
    rows = ([["resonance", i + 1, n, v] for i, (n, v) in enumerate(zip(rep.resonances, d_res))]
            + [["quasi", i + 1, n, v] for i, (n, v) in enumerate(zip(rep.quasi_resonances, d_q))])
    files = {"resonances.csv": csv_text(["kind", "k", "n", "D"], rows),
             "partition.csv": csv_text(["sector", "start", "stop"],
                                       ([i + 1, a, b] for i, (a, b) in enumerate(rep.partition))),
             "summary.csv": csv_text(
                 ["classification", "bound", "mode", "resonance_count", "quasi_count", "decay_fit"],
                 [[rep.classification, rep.bound, rep.mode, len(rep.resonances),
                   len(rep.quasi_resonances), rep.decay_fit]])}
    return files, {"label": rep.label, "decay_fit": rep.decay_fit}, 0.0


def run_metastable(cfg, params):
    e = cfg["experiment"]
    quasi = quasi_for(params)
    rows = []
    for k in e["k_list"]:
        try:
            res = metastable_lifetime(params, k, e["threshold"], e["relative"], quasi,
                                      method=e["method"], budget=e.get("budget"))
            mod = metastable_lifetime(params, k, e["threshold"], e["relative"], quasi, modified=True)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        rows.append([k, res.m_k, res.steps, res.lower_bound, res.threshold, res.saturation,
                     "inf" if mod.infinite else mod.steps,
                     metastable_fixed_residual(params, k, quasi)])
    files = {"lifetimes.csv": csv_text(
        ["k", "m_k", "lifetime", "lower_bound", "threshold", "saturation",
         "modified_lifetime", "modified_fixed_residual"], rows)}
    steps = [r[2] for r in rows]
    return files, {"strictly_increasing": all(a < b for a, b in zip(steps, steps[1:]))}, 0.0


def run_witness(cfg, params):
    e = cfg["experiment"]
    w = slow_mixing_witness(params, e["epsilon"], e["budget"], e["k_max"], tuple(e["d_list"]))
    files = {"witness.csv": csv_text(
        ["epsilon", "kind", "k", "d", "m_k", "n0", "constant", "budget", "full_sequence",
         "subsequence", "observable"],
        [[e["epsilon"], w.kind, w.k, w.d, w.m_k, w.n0, w.constant, w.budget, w.full_sequence,
          w.subsequence, w.observable]])}
    return files, {"tried": w.diagnostics["tried"]}, 0.0


SWEEP_COLUMNS = ["eta", "xi", "beta_omega0", "n_max", "gap", "lambda_2", "min_eigenvalue",
                 "l0_lower_bound", "resonance_count", "quasi_count", "decay_exponent", "error"]


def sweep_point(eta, xi, bw, n_max, omega_tau, quasi_bound) -> list:
    try:
        p = ModelParams.from_dimensionless(eta, xi, bw, omega_tau, n_max)
        ev = tridiagonal_spectrum(sector_operator_hs(0, p))
        rep = analyze(eta, xi, bw, quasi_bound)
        return [eta, xi, bw, n_max, 1.0 - ev[-2], ev[-2], ev[0], l0_bounds(bw, 1.0)[0],
                len(rep.resonances), len(rep.quasi_resonances), rep.decay_fit, ""]
    except Exception as exc:  # recorded per point; the sweep goes on
        return [eta, xi, bw, n_max] + [None] * 7 + [f"{type(exc).__name__}: {exc}"]


def run_sweep(cfg, params):
    e = cfg["experiment"]
    g = e["grid"]
    points = sorted({(float(a), float(b), float(c), int(d)) for a in g["eta"] for b in g["xi"]
                     for c in g["beta_omega0"] for d in g["n_max"]})
    if len(points) > e["max_points"]:
        raise ConfigError(f"grid has {len(points)} points, more than max_points = {e['max_points']}")
    wt = params.omega_tau
    workers = default_workers()
    job = lambda pt: sweep_point(*pt, wt, e["quasi_bound"])  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(job, points))
    else:
        rows = [job(pt) for pt in points]
    errors = sum(1 for r in rows if r[-1])
    return {"sweep.csv": csv_text(SWEEP_COLUMNS, rows)}, {"points": len(rows), "errors": errors}, 0.0


RUNNERS = {"simulate": run_simulate, "spectrum": run_spectrum, "resonances": run_resonances,
           "metastable": run_metastable, "witness": run_witness, "sweep": run_sweep}


def run(cfg: dict, out_dir: Path, overwrite: bool = False, kind: str | None = None) -> int:
    """Validate, run and write outputs; returns the exit code."""
    t0 = time.perf_counter()
    try:
        cfg = validate_config(cfg, kind)
        params = build_params(cfg)
        files, summary, leakage = RUNNERS[cfg["experiment"]["kind"]](cfg, params)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BudgetExceeded, TruncationLeakageError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    manifest = {"version": __version__, "csv_schema": CSV_SCHEMA_VERSION, "config": cfg,
                "params": params.to_dict(), "leakage_total": leakage, "summary": summary,
                "outputs": sorted(files)}
    files["manifest.json"] = json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n"
    out_dir = Path(out_dir)
    clashes = [name for name in files if (out_dir / name).exists()]
    if clashes and not overwrite:
        print(f"error: {', '.join(clashes)} already exist in {out_dir}; pass --overwrite",
              file=sys.stderr)
        return EXIT_INVALID
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text)
    wall = time.perf_counter() - t0
    (out_dir / "timing.txt").write_text(f"wall_seconds {wall:.3f}\n")
    print(f"wrote {len(files)} files to {out_dir} in {wall:.2f} s", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="maserlab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", required=True, type=Path)
        sp.add_argument("--overwrite", action="store_true")
    args = parser.parse_args(argv)
    try:
        cfg = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run(cfg, args.out, args.overwrite, args.kind)


if __name__ == "__main__":
    sys.exit(main())
