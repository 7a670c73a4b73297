"""Convergence schemes, multi-restart orchestration and histograms."""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import circuits as C
from . import network as Nw
from .models import ModelSpec, try_reference_energy
from .optimize import CONVERGED, MAX_ITER, Objective, OptimizerConfig, objective_value, optimize

DIRECT = "direct"
TTTN_THEN_TMERA = "tttn-then-tmera"
BUILD_UP = "build-up"
BUILD_UP_TTTN_THEN_TMERA = "build-up-tttn-then-tmera"
SCAN = "scan"
SCHEMES = (DIRECT, TTTN_THEN_TMERA, BUILD_UP, BUILD_UP_TTTN_THEN_TMERA, SCAN)


def linear_path(start: float, stop: float, step: float, budget: int = 200):
    """Points start, start +- step, ..., stop, each with the same iteration budget."""
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(round(abs(stop - start) / step))
    if not math.isclose(n * step, abs(stop - start), abs_tol=1e-9):
        raise ValueError(f"{start} -> {stop} is not a whole number of steps of {step}")
    sign = 1.0 if stop >= start else -1.0
    return [(round(start + sign * k * step, 12), budget) for k in range(n + 1)]


def default_scan_path(target: float, start: float = 2.0, low: float = 0.0,
                      step: float = 0.1, budget: int = 200):
    """Forth and back: start -> low -> target, sharing the turning point."""
    down = linear_path(start, low, step, budget)
    up = linear_path(low, target, step, budget)
    return down + up[1:]


@dataclass(frozen=True)
class SchemeSpec:
    kind: str = DIRECT
    scan_path: tuple = ()          # ((parameter, budget), ...), ends at the target
    stage_budget: int = 300        # iterations per intermediate stage (build-up, TTTN)
    layer_scale: float = 0.05      # near-identity scale of layers added during build-up

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown scheme {self.kind!r}; choose from {SCHEMES}")
        object.__setattr__(self, "scan_path",
                           tuple((float(p), int(b)) for p, b in self.scan_path))
        if self.kind == SCAN and not self.scan_path:
            raise ValueError("a scan needs a non-empty path")
        if self.stage_budget < 0 or any(b < 0 for _, b in self.scan_path):
            raise ValueError("budgets must be non-negative")

    def to_dict(self):
        return {"kind": self.kind, "scan_path": [list(p) for p in self.scan_path],
                "stage_budget": self.stage_budget, "layer_scale": self.layer_scale}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("kind", DIRECT), tuple(tuple(p) for p in d.get("scan_path", ())),
                   d.get("stage_budget", 300), d.get("layer_scale", 0.05))


@dataclass
class RunRecord:
    seed: int
    scheme: str
    model: ModelSpec
    config: Nw.MeraConfig
    objective: Objective
    energy: float = math.nan
    objective_value: float = math.nan
    penalty: float = 0.0
    accuracy: float | None = None
    iterations: int = 0
    evaluations: int = 0
    flag: str = CONVERGED
    avg_abs_angle: float = math.nan
    wall_time: float = 0.0
    stages: list = field(default_factory=list)
    error: str | None = None
    state: Nw.TMeraState | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None


def _stage(records, label, state, model, objective, cfg):
    f0 = objective_value(state, model, objective)[0]
    out, trace, summary = optimize(state, model, objective, cfg)
    records.append(dict(label=label, start=f0, end=summary["objective"],
                        energy=trace[-1]["energy"], iterations=summary["iterations"],
                        evaluations=summary["evaluations"], flag=summary["flag"]))
    return out


def _budget(cfg: OptimizerConfig, n: int):
    return replace(cfg, max_iter=n)


def _build_up(stages, config, model, objective, optcfg, seed, spec, tttn):
    """Grow from one layer to ``config.layers``, converging after every addition."""
    cfg1 = replace(config, layers=1)
    state = Nw.init_random(cfg1, seed)
    if tttn:
        state = Nw.freeze_disentanglers(state)
    for tau in range(1, config.layers):
        state = _stage(stages, f"T={tau}", state, model, objective, _budget(optcfg, spec.stage_budget))
        state = Nw.add_layer(state, scale=spec.layer_scale, seed=seed * 1000 + tau)
    return state


def _final_flag(stages):
    bad = [s["flag"] for s in stages if s["flag"] not in (CONVERGED, MAX_ITER)]
    return bad[-1] if bad else stages[-1]["flag"]


def run_scheme(spec: SchemeSpec, config: Nw.MeraConfig, model: ModelSpec,
               optcfg: OptimizerConfig = OptimizerConfig(), seed: int = 0,
               objective: Objective = Objective()) -> RunRecord:
    """Run one pipeline from a random start; optimizer stop flags are recorded, not raised."""
    t0 = time.perf_counter()
    stages = []
    if spec.kind == DIRECT:
        state = Nw.init_random(config, seed)
        state = _stage(stages, "direct", state, model, objective, optcfg)
    elif spec.kind == TTTN_THEN_TMERA:
        state = Nw.freeze_disentanglers(Nw.init_random(config, seed))
        state = _stage(stages, "tttn", state, model, objective, _budget(optcfg, spec.stage_budget))
        state = Nw.promote_tttn_to_tmera(state)
        state = _stage(stages, "tmera", state, model, objective, optcfg)
    elif spec.kind == BUILD_UP:
        state = _build_up(stages, config, model, objective, optcfg, seed, spec, tttn=False)
        state = _stage(stages, f"T={config.layers}", state, model, objective, optcfg)
    elif spec.kind == BUILD_UP_TTTN_THEN_TMERA:
        state = _build_up(stages, config, model, objective, optcfg, seed, spec, tttn=True)
        state = _stage(stages, f"tttn T={config.layers}", state, model, objective,
                       _budget(optcfg, spec.stage_budget))
        state = Nw.promote_tttn_to_tmera(state)
        state = _stage(stages, "tmera", state, model, objective, optcfg)
    else:
        path = spec.scan_path
        if not math.isclose(path[-1][0], model.parameter, abs_tol=1e-12):
            raise ValueError(f"scan path ends at {path[-1][0]}, not at the target {model.parameter}")
        start = model.with_parameter(path[0][0])
        # the low-entangled start point is reached by building up
        state = _build_up(stages, config, start, objective, optcfg, seed, spec, tttn=False)
        for k, (p, budget) in enumerate(path):
            m = model.with_parameter(p)
            last = k == len(path) - 1
            state = _stage(stages, f"{m.label()}", state, m, objective,
                           optcfg if last else _budget(optcfg, budget))
    return _record(spec, config, model, objective, seed, state, stages, time.perf_counter() - t0)


def _record(spec, config, model, objective, seed, state, stages, wall):
    f, e, pen = objective_value(state, model, objective)
    ref = try_reference_energy(model)
    gates = state.gates()
    angle = _avg_abs_angle(gates) if gates else math.nan
    return RunRecord(
        seed=seed, scheme=spec.kind, model=model, config=config, objective=objective,
        energy=e, objective_value=f, penalty=pen,
        accuracy=None if ref is None else e - ref,
        iterations=sum(s["iterations"] for s in stages),
        evaluations=sum(s["evaluations"] for s in stages),
        flag=_final_flag(stages), avg_abs_angle=angle, wall_time=wall,
        stages=stages, state=state,
    )


def _avg_abs_angle(gates) -> float:
    """Mean |theta| over the three two-qubit rotation angles of every gate.

    Stored angles are wrapped into (-pi, pi], which changes a gate by at
    most a global sign; gates without stored angles use their canonical
    (Weyl chamber) angles.
    """
    vals = []
    for g in gates:
        a = C.two_qubit_angles(g)
        vals.append(np.abs(np.angle(np.exp(1j * np.asarray(a)))))
    return float(np.mean(vals))


def _run_one(args):
    spec, config, model, optcfg, seed, objective = args
    try:
        return run_scheme(spec, config, model, optcfg, seed, objective)
    except Exception as exc:  # recorded, the remaining restarts still run
        return RunRecord(seed=seed, scheme=spec.kind, model=model, config=config,
                         objective=objective, flag="error", error=f"{type(exc).__name__}: {exc}")


def _sort_key(r: RunRecord):
    return (not r.ok, r.energy if r.ok else math.inf, r.seed)


def run_restarts(spec: SchemeSpec, config: Nw.MeraConfig, model: ModelSpec,
                 optcfg: OptimizerConfig = OptimizerConfig(), restarts: int = 1,
                 base_seed: int = 0, objective: Objective = Objective(),
                 workers: int = 1) -> list[RunRecord]:
    """``restarts`` independent runs with consecutive seeds, sorted by final energy."""
    if restarts < 1:
        raise ValueError("need at least one restart")
    jobs = [(spec, config, model, optcfg, base_seed + k, objective) for k in range(restarts)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, jobs))
    else:
        records = [_run_one(j) for j in jobs]
    return sorted(records, key=_sort_key)


def best_of(records) -> RunRecord:
    ok = [r for r in records if r.ok]
    if not ok:
        raise ValueError("no successful runs")
    return min(ok, key=_sort_key)


def histogram(energies, width: float):
    """Counts of ``energies`` in bins of ``width`` starting at the minimum.

    Returns ``(edges, counts)``; the last bin is closed so the maximum is
    always counted.
    """
    e = np.asarray([getattr(x, "energy", x) for x in energies], dtype=float)
    if e.size == 0:
        raise ValueError("need at least one value")
    if width <= 0:
        raise ValueError("bin width must be positive")
    lo = float(e.min())
    # a tiny slack keeps values that sit on an edge in the upper bin
    idx = np.floor((e - lo) / width + 1e-9).astype(int)
    n = int(idx.max()) + 1
    counts = np.bincount(idx, minlength=n)
    edges = lo + width * np.arange(n + 1)
    return edges, counts
