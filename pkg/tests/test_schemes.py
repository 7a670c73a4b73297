import math
from dataclasses import replace

import numpy as np
import pytest

from tmera import contraction as Ct
from tmera import models as M
from tmera import network as Nw
from tmera import schemes as S
from tmera.optimize import ANGLE_PENALTY, Objective, OptimizerConfig, objective_value

XXX = M.xxz(1.0)
SMALL = Nw.MeraConfig(16, 2, q=1, t=2)
QUICK = OptimizerConfig(max_iter=60)


def test_scan_path_construction():
    path = S.linear_path(2.0, 1.0, 0.1)
    assert len(path) == 11
    assert path[0] == (2.0, 200) and path[-1] == (1.0, 200)
    back_and_forth = S.default_scan_path(1.0)
    values = [p for p, _ in back_and_forth]
    assert values[0] == 2.0 and min(values) == 0.0 and values[-1] == 1.0
    assert len(values) == 21 + 10


def test_scan_path_rejects_uneven_steps():
    with pytest.raises(ValueError):
        S.linear_path(2.0, 1.0, 0.3)
    with pytest.raises(ValueError):
        S.linear_path(2.0, 1.0, 0.0)


def test_spec_validation_and_round_trip():
    with pytest.raises(ValueError):
        S.SchemeSpec("anneal")
    with pytest.raises(ValueError):
        S.SchemeSpec(S.SCAN)
    spec = S.SchemeSpec(S.SCAN, tuple(S.linear_path(1.2, 1.0, 0.1, 20)), stage_budget=7)
    assert S.SchemeSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize("kind", S.SCHEMES)
def test_every_scheme_runs(kind):
    spec = S.SchemeSpec(kind, tuple(S.linear_path(1.2, 1.0, 0.1, 15)), stage_budget=20)
    rec = S.run_scheme(spec, SMALL, XXX, QUICK, seed=1)
    assert rec.ok and rec.scheme == kind
    assert rec.state.config == SMALL
    assert rec.energy == pytest.approx(Ct.energy(rec.state, XXX), abs=1e-14)
    assert rec.accuracy == pytest.approx(rec.energy - M.reference_energy(XXX))
    assert rec.iterations == sum(s["iterations"] for s in rec.stages)
    assert rec.avg_abs_angle >= 0


def test_scan_has_one_segment_per_point():
    spec = S.SchemeSpec(S.SCAN, tuple(S.linear_path(2.0, 1.0, 0.1, 5)), stage_budget=5)
    rec = S.run_scheme(spec, SMALL, XXX, QUICK, seed=0)
    segments = [s for s in rec.stages if s["label"].startswith("xxz")]
    assert len(segments) == 11
    assert segments[-1]["label"] == "xxz(delta=1)"


def test_scan_warm_start_continuity():
    # the first objective at a point is the previous solution evaluated under the new model
    cfg = replace(QUICK, max_iter=10)
    one = S.run_scheme(S.SchemeSpec(S.SCAN, ((1.3, 10),), stage_budget=10),
                       SMALL, M.xxz(1.3), cfg, seed=2)
    two = S.run_scheme(S.SchemeSpec(S.SCAN, ((1.3, 10), (1.2, 10)), stage_budget=10),
                       SMALL, M.xxz(1.2), cfg, seed=2)
    assert two.stages[-2]["end"] == one.stages[-1]["end"]
    assert two.stages[-1]["start"] == pytest.approx(Ct.energy(one.state, M.xxz(1.2)), abs=1e-14)
    assert two.stages[-1]["label"] == "xxz(delta=1.2)"


def test_scan_must_end_at_target():
    spec = S.SchemeSpec(S.SCAN, ((1.3, 10), (1.2, 10)))
    with pytest.raises(ValueError):
        S.run_scheme(spec, SMALL, XXX, QUICK)


def test_tttn_promotion_keeps_energy():
    spec = S.SchemeSpec(S.TTTN_THEN_TMERA, stage_budget=30)
    rec = S.run_scheme(spec, SMALL, XXX, QUICK, seed=3)
    tttn, tmera = rec.stages
    assert tmera["start"] == pytest.approx(tttn["end"], abs=1e-14)


def test_build_up_stages_do_not_increase_energy():
    spec = S.SchemeSpec(S.BUILD_UP, stage_budget=60)
    rec = S.run_scheme(spec, Nw.MeraConfig(32, 3, q=1, t=2), XXX, QUICK, seed=4)
    assert [s["label"] for s in rec.stages] == ["T=1", "T=2", "T=3"]
    for s in rec.stages:
        assert s["end"] <= s["start"] + 1e-14


def test_restarts():
    spec = S.SchemeSpec(S.DIRECT)
    recs = S.run_restarts(spec, SMALL, XXX, QUICK, restarts=4, base_seed=10)
    assert sorted(r.seed for r in recs) == [10, 11, 12, 13]
    energies = [r.energy for r in recs]
    assert energies == sorted(energies)
    assert S.best_of(recs).energy <= np.median(energies)
    single = S.run_restarts(spec, SMALL, XXX, QUICK, restarts=1, base_seed=12)[0]
    direct = S.run_scheme(spec, SMALL, XXX, QUICK, seed=12)
    assert single.energy == direct.energy
    assert {(r.seed, r.energy) for r in recs} == {
        (r.seed, r.energy) for r in (S.run_scheme(spec, SMALL, XXX, QUICK, seed=s)
                                     for s in (13, 11, 12, 10))}


def test_restart_failures_are_recorded():
    # a q=2 circuit on a spin-1 term with q_phys=1 cannot be evaluated
    model = M.ModelSpec("blbq", theta=-math.pi / 4)
    recs = S.run_restarts(S.SchemeSpec(), SMALL, model, QUICK, restarts=2)
    assert all(not r.ok and "ValueError" in r.error for r in recs)
    with pytest.raises(ValueError):
        S.best_of(recs)
    with pytest.raises(ValueError):
        S.run_restarts(S.SchemeSpec(), SMALL, XXX, QUICK, restarts=0)


def test_penalized_record_reports_objective():
    cfg = replace(SMALL, parametrization=Nw.TROTTER_ANGLES)
    obj = Objective(ANGLE_PENALTY, 0.01)
    rec = S.run_scheme(S.SchemeSpec(), cfg, XXX, QUICK, seed=0, objective=obj)
    f, e, pen = objective_value(rec.state, XXX, obj)
    assert (rec.objective_value, rec.energy, rec.penalty) == (f, e, pen)


@pytest.mark.parametrize("values, width, counts", [
    ([-0.44, -0.44, -0.43], 0.01, [2, 1]),
    ([0.3] * 5, 0.01, [5]),
    ([0.0, 0.25, 1.0], 0.5, [2, 0, 1]),
])
def test_histogram(values, width, counts):
    edges, got = S.histogram(values, width)
    assert list(got) == counts and got.sum() == len(values)
    assert edges[0] == min(values) and edges[-1] >= max(values)


def test_histogram_rejects_bad_input():
    with pytest.raises(ValueError):
        S.histogram([], 0.1)
    with pytest.raises(ValueError):
        S.histogram([1.0], 0.0)
