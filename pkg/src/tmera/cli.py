"""Command-line experiment runner.

Every subcommand that runs optimizations takes a JSON config (``--config``)
whose fields can be overridden by flags. Outputs go to ``--out``:

    records.csv     one row per run (fixed columns, 17 significant digits)
    histogram.csv   ``hist`` only
    sweep.csv       ``sweep`` only, sorted by the cost column
    compare.csv     ``compare-layouts`` only
    state.bin       best state, UTF-8 JSON (see ``network.save_state``)
    meta.json       provenance: resolved config, seeds, versions, wall times

Exit codes: 0 success, 1 runtime failure or failed verification, 2 invalid
configuration. Errors are printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
from copy import deepcopy
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import costmodel as cm
from . import network as Nw
from . import schemes as S
from .models import FAMILIES, ModelSpec, try_reference_energy
from .optimize import OBJECTIVES, Objective, OptimizerConfig

from . import __version__ as VERSION

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object", "additionalProperties": False, "required": ["family"],
            "properties": {
                "family": {"enum": list(FAMILIES)},
                "delta": {"type": "number"},
                "theta": {"type": "number"},
            },
        },
        "mera": {
            "type": "object", "additionalProperties": False,
            "required": ["n_sites", "layers"],
            "properties": {
                "n_sites": {"type": "integer", "minimum": 4},
                "layers": {"type": "integer", "minimum": 1},
                "q": {"type": "integer", "minimum": 1, "maximum": 4},
                "t": {"type": "integer", "minimum": 1},
                "layout": {"enum": ["brickwall", "prpc"]},
                "parametrization": {"enum": list(Nw.PARAMETRIZATIONS)},
            },
        },
        "scheme": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(S.SCHEMES)},
                "scan_path": {"type": "array", "minItems": 1, "items": {
                    "type": "array", "prefixItems": [{"type": "number"},
                                                     {"type": "integer", "minimum": 0}],
                    "minItems": 2, "maxItems": 2}},
                "scan": {
                    "type": "object", "additionalProperties": False,
                    "required": ["start", "stop", "step"],
                    "properties": {
                        "start": {"type": "number"}, "stop": {"type": "number"},
                        "low": {"type": "number"},
                        "step": {"type": "number", "exclusiveMinimum": 0},
                        "budget": {"type": "integer", "minimum": 0},
                    },
                },
                "stage_budget": {"type": "integer", "minimum": 0},
                "layer_scale": {"type": "number", "minimum": 0},
            },
        },
        "optimizer": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "memory": {"type": "integer", "minimum": 0},
                "c1": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "c2": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "max_iter": {"type": "integer", "minimum": 0},
                "gtol": {"type": "number", "minimum": 0},
            },
        },
        "objective": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(OBJECTIVES)},
                "kappa": {"type": "number", "minimum": 0},
            },
        },
        "restarts": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "bin_width": {"type": "number", "exclusiveMinimum": 0},
        "sweep": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "q": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 4},
                      "minItems": 1},
                "t": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "layers": {"type": "array", "items": {"type": "integer", "minimum": 1},
                           "minItems": 1},
                "full_tensor": {"type": "boolean"},
            },
        },
        "layouts": {"type": "array", "items": {"enum": ["brickwall", "prpc"]}, "minItems": 1},
    },
}

DEFAULTS = {
    "model": {"family": "xxz", "delta": 1.0},
    "mera": {"n_sites": 16, "layers": 2, "q": 1, "t": 2, "layout": "brickwall",
             "parametrization": "trotter-unitary"},
    "scheme": {"kind": "direct"},
    "optimizer": {},
    "objective": {"kind": "energy", "kappa": 0.0},
    "restarts": 1,
    "seed": 0,
    "workers": 1,
    "bin_width": 1e-3,
}

RECORD_COLUMNS = [
    "seed", "scheme", "family", "delta", "theta", "n_sites", "layers", "q", "t", "chi",
    "layout", "parametrization", "objective", "kappa", "energy", "objective_value", "penalty",
    "reference_energy", "accuracy", "iterations", "evaluations", "flag", "avg_abs_angle",
    "cost_classical", "cost_quantum_sampling", "cost_quantum_qae", "cost_quantum_metric", "error",
]
SWEEP_COLUMNS = RECORD_COLUMNS + ["cost"]
COST_COLUMNS = ["q", "t", "T", "eps", "chi", "cost_classical", "cost_quantum_sampling",
                "cost_quantum_qae", "cost_quantum_metric"]


class CliError(Exception):
    def __init__(self, code, kind, message, details=None):
        super().__init__(message)
        self.code, self.kind, self.message, self.details = code, kind, message, details or []


# ---------------------------------------------------------------------------
# configuration


def _merge(base, extra):
    out = deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = deepcopy(v)
    return out


def _path(err):
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate_config(cfg: dict) -> list[dict]:
    """Field-level schema and consistency errors; empty when the config is valid."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    found = sorted(validator.iter_errors(cfg), key=lambda e: [str(p) for p in e.absolute_path])
    errors = [{"field": _path(e), "message": e.message} for e in found]
    if errors:
        return errors
    try:
        model = ModelSpec.from_dict(cfg["model"])
    except ValueError as exc:
        return [{"field": "model", "message": str(exc)}]
    mera = cfg["mera"]
    sweep = cfg.get("sweep", {})
    layers = sweep.get("layers", [mera["layers"]])
    for T in layers:
        try:
            Nw.MeraConfig(mera["n_sites"], T, q_phys=model.qubits_per_site,
                          **{k: v for k, v in mera.items() if k not in ("n_sites", "layers")})
        except Nw.ConfigError as exc:
            field = "mera" if T == mera["layers"] else "sweep.layers"
            errors.append({"field": field, "message": str(exc)})
    opt = cfg.get("optimizer", {})
    if opt.get("c1", 1e-4) >= opt.get("c2", 0.9):
        errors.append({"field": "optimizer", "message": "need c1 < c2"})
    sch = cfg["scheme"]
    if sch.get("kind") == S.SCAN:
        if model.family not in ("xxz", "blbq"):
            errors.append({"field": "model.family",
                           "message": f"{model.family} has no scannable parameter"})
        if "scan_path" not in sch and "scan" not in sch:
            errors.append({"field": "scheme", "message": "a scan needs scan_path or scan"})
        else:
            end = sch["scan_path"][-1][0] if "scan_path" in sch else sch["scan"]["stop"]
            if not math.isclose(end, model.parameter, abs_tol=1e-12):
                errors.append({"field": "scheme", "message":
                               f"the scan must end at the model parameter {model.parameter}"})
    obj = cfg["objective"]
    par = mera.get("parametrization", "trotter-unitary")
    if obj.get("kind") == "angle-penalty" and par != Nw.TROTTER_ANGLES:
        errors.append({"field": "objective.kind",
                       "message": "the angle penalty needs the trotter-angles parametrization"})
    if obj.get("kind") == "frobenius-penalty" and par == Nw.FULL_TENSOR:
        errors.append({"field": "objective.kind",
                       "message": "the Frobenius penalty needs Trotter gates"})
    return errors


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(2, "config", f"cannot read {path}: {exc}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(2, "config", f"{path} is not valid JSON: {exc}")


def resolve_config(args) -> dict:
    user = load_config(args.config) if args.config else {}
    cfg = _merge(DEFAULTS, user)
    if "model" in user:
        # parameters of the default family must not leak into another family
        cfg["model"] = deepcopy(user["model"])
    if getattr(args, "model", None):
        cfg["model"] = {"family": args.model}
    if getattr(args, "delta", None) is not None:
        cfg["model"]["delta"] = args.delta
    if getattr(args, "theta", None) is not None:
        cfg["model"]["theta"] = args.theta
    tc = getattr(args, "tensor_circuit", None)
    if tc:
        if tc == "full":
            cfg["mera"]["parametrization"] = Nw.FULL_TENSOR
        else:
            cfg["mera"]["layout"] = tc
    for flag, (section, key) in {"n_sites": ("mera", "n_sites"), "layers": ("mera", "layers"),
                                 "q": ("mera", "q"), "t": ("mera", "t"),
                                 "parametrization": ("mera", "parametrization"),
                                 "scheme": ("scheme", "kind"),
                                 "kappa": ("objective", "kappa"),
                                 "objective": ("objective", "kind"),
                                 "max_iter": ("optimizer", "max_iter")}.items():
        v = getattr(args, flag, None)
        if v is not None:
            cfg[section][key] = v
    for key in ("seed", "restarts", "workers", "bin_width"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    errors = validate_config(cfg)
    if errors:
        raise CliError(2, "config", "invalid configuration", errors)
    return cfg


def _objects(cfg, layers=None, q=None, t=None, layout=None, parametrization=None):
    model = ModelSpec.from_dict(cfg["model"])
    m = cfg["mera"]
    mera = Nw.MeraConfig(
        m["n_sites"], layers or m["layers"], q=q or m.get("q", 1), t=t or m.get("t", 1),
        layout=layout or m.get("layout", "brickwall"),
        parametrization=parametrization or m.get("parametrization", Nw.TROTTER_UNITARY),
        q_phys=model.qubits_per_site)
    sch = dict(cfg["scheme"])
    if "scan" in sch:
        sc = sch.pop("scan")
        budget = sc.get("budget", 200)
        if "low" in sc:
            sch["scan_path"] = S.default_scan_path(sc["stop"], sc["start"], sc["low"], sc["step"],
                                                   budget)
        else:
            sch["scan_path"] = S.linear_path(sc["start"], sc["stop"], sc["step"], budget)
    spec = S.SchemeSpec.from_dict(sch)
    optcfg = OptimizerConfig(**cfg.get("optimizer", {}))
    obj = Objective(**cfg["objective"])
    return model, mera, spec, optcfg, obj


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        return f"{v:.17g}"
    return str(v)


def _costs(q, t, T, eps):
    out = {"cost_classical": cm.classical_cost(2**q, 7)}
    ok = eps is not None and eps > 0
    out["cost_quantum_sampling"] = cm.quantum_cost_sampling(q, t, T, eps) if ok else None
    ok_qae = ok and eps < 1
    out["cost_quantum_qae"] = cm.quantum_cost_qae(q, t, T, eps) if ok_qae else None
    out["cost_quantum_metric"] = cm.quantum_cost_metric(q, t, eps) if ok_qae else None
    return out


def record_row(r: S.RunRecord) -> dict:
    c, m = r.config, r.model
    row = {
        "seed": r.seed, "scheme": r.scheme, "family": m.family,
        "delta": m.delta if m.family == "xxz" else None,
        "theta": m.theta if m.family == "blbq" else None,
        "n_sites": c.n_sites, "layers": c.layers, "q": c.q, "t": c.t, "chi": c.chi,
        "layout": c.layout, "parametrization": c.parametrization,
        "objective": r.objective.kind, "kappa": r.objective.kappa,
        "energy": r.energy, "objective_value": r.objective_value, "penalty": r.penalty,
        "reference_energy": try_reference_energy(m), "accuracy": r.accuracy,
        "iterations": r.iterations, "evaluations": r.evaluations, "flag": r.flag,
        "avg_abs_angle": r.avg_abs_angle, "error": r.error,
    }
    row.update(_costs(c.q, c.t, c.layers, r.accuracy if r.ok else None))
    return row


def write_csv(path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    Path(path).write_bytes(buf.getvalue().encode())


def _meta(cfg, records, command, extra=None):
    neg = [r.seed for r in records if r.accuracy is not None and r.accuracy < 0]
    meta = {
        "command": command,
        "config": cfg,
        "seeds": sorted(r.seed for r in records),
        "versions": {"tmera": VERSION, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "runs": [{"seed": r.seed, "scheme": r.scheme, "layout": r.config.layout,
                  "n_sites": r.config.n_sites, "layers": r.config.layers, "q": r.config.q,
                  "t": r.config.t, "parametrization": r.config.parametrization,
                  "wall_time": r.wall_time, "stages": r.stages, "error": r.error}
                 for r in records],
        # below the infinite-system energy: legitimate at small N, otherwise a bug
        "negative_accuracy_seeds": neg,
    }
    if extra:
        meta.update(extra)
    return meta


def _write_common(out: Path, cfg, records, command, extra=None):
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "records.csv", RECORD_COLUMNS, [record_row(r) for r in records])
    ok = [r for r in records if r.ok]
    if ok:
        Nw.save_state(S.best_of(ok).state, out / "state.bin")
    (out / "meta.json").write_text(json.dumps(_meta(cfg, records, command, extra), indent=2,
                                              default=str))


def _run(cfg, **over):
    model, mera, spec, optcfg, obj = _objects(cfg, **over)
    return S.run_restarts(spec, mera, model, optcfg, cfg["restarts"], cfg["seed"], obj,
                          workers=cfg["workers"])


# ---------------------------------------------------------------------------
# subcommands


def cmd_optimize(args):
    cfg = resolve_config(args)
    records = _run(cfg)
    _write_common(Path(args.out), cfg, records, "optimize")
    _summary(records)
    return 0 if any(r.ok for r in records) else 1


def cmd_hist(args):
    cfg = resolve_config(args)
    records = _run(cfg)
    out = Path(args.out)
    _write_common(out, cfg, records, "hist")
    ok = [r for r in records if r.ok]
    if ok:
        edges, counts = S.histogram([r.energy for r in ok], cfg["bin_width"])
        rows = [{"bin_lo": lo, "bin_hi": hi, "count": int(n)}
                for lo, hi, n in zip(edges[:-1], edges[1:], counts)]
        write_csv(out / "histogram.csv", ["bin_lo", "bin_hi", "count"], rows)
    _summary(records)
    return 0 if ok else 1


def cmd_sweep(args):
    cfg = resolve_config(args)
    m = cfg["mera"]
    sw = cfg.get("sweep", {})
    qs, ts, Ts = sw.get("q", [m.get("q", 1)]), sw.get("t", [m.get("t", 1)]), \
        sw.get("layers", [m["layers"]])
    cells = [dict(layers=T, q=q, t=t) for T in Ts for q in qs for t in ts]
    if sw.get("full_tensor", False):
        cells += [dict(layers=T, q=q, t=1, parametrization=Nw.FULL_TENSOR) for T in Ts for q in qs]
    all_records, rows = [], []
    for cell in cells:
        records = _run(cfg, **cell)
        all_records.extend(records)
        ok = [r for r in records if r.ok]
        if not ok:
            continue
        row = record_row(S.best_of(ok))
        full = row["parametrization"] == Nw.FULL_TENSOR
        row["cost"] = row["cost_classical"] if full else row["cost_quantum_metric"]
        rows.append(row)
    rows.sort(key=lambda r: (r["cost"] is None, r["cost"] if r["cost"] is not None else 0.0,
                             r["layers"], r["q"], r["t"], r["parametrization"]))
    out = Path(args.out)
    _write_common(out, cfg, all_records, "sweep")
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    _summary(all_records)
    return 0 if rows else 1


def cmd_compare_layouts(args):
    cfg = resolve_config(args)
    layouts = cfg.get("layouts", ["brickwall", "prpc"])
    all_records, rows = [], []
    for layout in layouts:
        records = _run(cfg, layout=layout)
        all_records.extend(records)
        ok = [r for r in records if r.ok]
        if ok:
            b = S.best_of(ok)
            rows.append({"layout": layout, "best_energy": b.energy, "best_accuracy": b.accuracy,
                         "median_energy": float(np.median([r.energy for r in ok])),
                         "runs": len(ok)})
    out = Path(args.out)
    _write_common(out, cfg, all_records, "compare-layouts")
    write_csv(out / "compare.csv", ["layout", "best_energy", "best_accuracy", "median_energy",
                                    "runs"], rows)
    _summary(all_records)
    return 0 if rows else 1


def cmd_cost_table(args):
    try:
        row = cm.cost_row(args.q, args.t, args.T, args.eps, args.r)
    except ValueError as exc:
        raise CliError(2, "argument", str(exc))
    values = {c: getattr(row, c) for c in COST_COLUMNS}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COST_COLUMNS)
    w.writerow([_fmt(values[c]) for c in COST_COLUMNS])
    sys.stdout.write(buf.getvalue())
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_csv(Path(args.out) / "cost.csv", COST_COLUMNS, [values])
    return 0


def cmd_verify(args):
    from .verify import run_checks
    results = run_checks(seed=args.seed or 0)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


def _summary(records):
    ok = [r for r in records if r.ok]
    if not ok:
        print("no successful runs", file=sys.stderr)
        return
    b = S.best_of(ok)
    acc = "" if b.accuracy is None else f", accuracy {b.accuracy:.6g}"
    print(f"{len(ok)}/{len(records)} runs ok; best e = {b.energy:.12f}{acc} (seed {b.seed})")


# ---------------------------------------------------------------------------


def _run_args(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--model", choices=FAMILIES)
    p.add_argument("--delta", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--tensor-circuit", choices=["brickwall", "prpc", "full"],
                   help="circuit layout of every tensor, or full (unconstrained) tensors")
    p.add_argument("--n-sites", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--parametrization", choices=Nw.PARAMETRIZATIONS)
    p.add_argument("--scheme", choices=S.SCHEMES)
    p.add_argument("--objective", choices=OBJECTIVES)
    p.add_argument("--kappa", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--workers", type=int)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(_error_json("usage", message), file=sys.stderr)
        sys.exit(2)


def build_parser():
    parser = _Parser(prog="tmera", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("optimize", help="run one configuration (with restarts)")
    _run_args(p)
    p.set_defaults(func=cmd_optimize)
    p = sub.add_parser("hist", help="restart histogram of converged energies")
    _run_args(p)
    p.add_argument("--bin-width", type=float)
    p.set_defaults(func=cmd_hist)
    p = sub.add_parser("sweep", help="accuracy versus cost over a grid of q, t, T")
    _run_args(p)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("compare-layouts", help="brick-wall versus parallel random-pair circuits")
    _run_args(p)
    p.set_defaults(func=cmd_compare_layouts)
    p = sub.add_parser("cost-table", help="cost-model arithmetic for one parameter set")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--r", type=int, default=7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost_table)
    p = sub.add_parser("verify", help="run the built-in oracle and invariant checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def _error_json(kind, message, details=None):
    return json.dumps({"error": kind, "message": message, "details": details or []})


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(_error_json(exc.kind, exc.message, exc.details), file=sys.stderr)
        return exc.code
    except Exception as exc:
        print(_error_json("runtime", f"{type(exc).__name__}: {exc}"), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
