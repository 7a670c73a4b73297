import numpy as np
import pytest
from hypothesis import given, strategies as hst
from scipy.linalg import expm

from tmera import circuits as C
from tmera import contraction as Ct
from tmera import models as M
from tmera import network as Nw
from tmera.tensor import make_rng, random_isometry, random_unitary

H_XXX = M.qubit_term(M.xxz(1.0))


def _layer(db, da, rng):
    return random_unitary(db * db, rng), random_isometry(db * db, da, rng)


def _density(d, rng):
    a = rng.standard_normal((d * d, d * d)) + 1j * rng.standard_normal((d * d, d * d))
    r = a @ a.conj().T
    return r / np.trace(r)


def _herm(d, rng):
    a = rng.standard_normal((d * d, d * d)) + 1j * rng.standard_normal((d * d, d * d))
    return a + a.conj().T


@pytest.mark.parametrize("db, da", [(2, 2), (4, 2), (4, 4), (8, 8)])
@pytest.mark.parametrize("kind", Ct.CLASS_NAMES)
def test_each_class_map_is_unital(kind, db, da, rng):
    u, w = _layer(db, da, rng)
    out = Ct.ascend_class(kind, np.eye(db * db), u, w).reshape(da * da, da * da)
    assert np.allclose(out, np.eye(da * da), atol=1e-12)


def test_ascend_of_identity_counts_bonds(rng):
    u, w = _layer(4, 4, rng)
    up = Ct.ascend(np.eye(16), u, w)
    # three fine bonds feed an even coarse bond, one feeds an odd bond
    assert np.allclose(up.even, 3 * np.eye(16), atol=1e-12)
    assert np.allclose(up.odd, np.eye(16), atol=1e-12)


@pytest.mark.parametrize("db, da", [(2, 2), (4, 2), (4, 4)])
def test_fast_path_matches_class_networks(db, da, rng):
    u, w = _layer(db, da, rng)
    h = Ct.BondPair(_herm(db, rng), _herm(db, rng))
    up = Ct.ascend(h, u, w)
    cls = {k: Ct.ascend_class(k, h.even if k in ("left", "right") else h.odd, u, w)
           .reshape(da * da, da * da) for k in Ct.CLASS_NAMES}
    assert np.allclose(up.even, cls["left"] + cls["centre"] + cls["right"], atol=1e-12)
    assert np.allclose(up.odd, cls["outer"], atol=1e-12)

    rho = Ct.BondPair(_density(da, rng), _density(da, rng))
    down = Ct.descend(rho, u, w)
    dn = {k: Ct.descend_class(k, rho.odd if k == "outer" else rho.even, u, w)
          .reshape(db * db, db * db) for k in Ct.CLASS_NAMES}
    assert np.allclose(down.even, 0.5 * (dn["left"] + dn["right"]), atol=1e-12)
    assert np.allclose(down.odd, 0.5 * (dn["centre"] + dn["outer"]), atol=1e-12)


@pytest.mark.parametrize("db, da", [(2, 2), (4, 2), (4, 4)])
def test_ascend_and_descend_are_adjoint(db, da):
    rng = make_rng(db * 10 + da)
    for _ in range(20):
        u, w = _layer(db, da, rng)
        h = Ct.BondPair(_herm(db, rng), _herm(db, rng))
        rho = Ct.BondPair(_density(da, rng), _density(da, rng))
        lhs = Ct.pair_trace(Ct.descend(rho, u, w), h)
        rhs = 0.5 * Ct.pair_trace(rho, Ct.ascend(h, u, w))
        assert abs(lhs - rhs) < 1e-12


@given(hst.integers(0, 10**6))
def test_hermiticity_and_density_properties(seed):
    rng = make_rng(seed)
    u, w = _layer(4, 4, rng)
    up = Ct.ascend(Ct.BondPair(_herm(4, rng), _herm(4, rng)), u, w)
    for op in up:
        assert np.allclose(op, op.conj().T, atol=1e-12)
    down = Ct.descend(Ct.BondPair(_density(4, rng), _density(4, rng)), u, w)
    for r in down:
        assert np.allclose(r, r.conj().T, atol=1e-12)
        assert np.trace(r).real == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(r).min() > -1e-12


@pytest.mark.parametrize("layout", [C.BRICKWALL, C.PRPC])
@pytest.mark.parametrize("par", Nw.PARAMETRIZATIONS)
@pytest.mark.parametrize("q", [1, 2])
def test_energy_matches_state_vector(layout, par, q):
    rng = make_rng(q)
    h = M.qubit_term(M.xxz(0.3))
    for _ in range(2):
        cfg = Nw.MeraConfig(8, 2, q=q, t=2, layout=layout, parametrization=par)
        st = Nw.init_random(cfg, int(rng.integers(1 << 30)))
        oracle = Nw.state_energy(Nw.build_state_vector(st), h)
        assert Ct.energy(st, h) == pytest.approx(oracle, abs=1e-12)


def test_energy_matches_state_vector_for_spin_one():
    model = M.ModelSpec("blbq", theta=-np.pi / 4)
    st = Nw.init_random(Nw.MeraConfig(8, 1, q=2, t=2, q_phys=2), 3)
    h = M.qubit_term(model)
    assert Ct.energy(st, model) == pytest.approx(
        Nw.state_energy(Nw.build_state_vector(st), h), abs=1e-12)


def test_densities_are_consistent_across_levels():
    st = Nw.init_random(Nw.MeraConfig(32, 3, q=2, t=2), 0)
    ev = Ct.evaluate(st, H_XXX)
    levels = [0.5 * Ct.pair_trace(r, h).real for r, h in zip(ev.densities, ev.operators)]
    assert np.allclose(levels, ev.energy, atol=1e-13)
    for rho in ev.densities:
        for r in rho:
            assert np.trace(r).real == pytest.approx(1.0, abs=1e-12)


def test_term_shape_is_checked():
    st = Nw.init_random(Nw.MeraConfig(8, 1, q=2), 0)
    with pytest.raises(ValueError):
        Ct.energy(st, np.eye(16))


def _fd_unitary(st, h, tau, role, g, env, rng):
    circ = getattr(st.layers[tau], role)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    a = a - a.conj().T
    u0 = circ.gates[g].unitary

    def e_at(s):
        us = circ.unitaries()
        us[g] = expm(s * a) @ u0
        vals = [None] * st.config.layers
        vals[tau] = (us, None) if role == "disentangler" else (None, us)
        return Ct.evaluate(st, h, gradient=False, values=vals).energy

    fd = (e_at(1e-5) - e_at(-1e-5)) / 2e-5
    return fd, 2 * np.real(np.vdot(env, a @ u0))


@pytest.mark.parametrize("layout", [C.BRICKWALL, C.PRPC])
def test_gate_environments_match_finite_differences(layout):
    rng = make_rng(7)
    st = Nw.init_random(Nw.MeraConfig(16, 2, q=2, t=2, layout=layout), 1)
    _, envs = Ct.environments(st, H_XXX)
    for idx in rng.choice(len(envs), 8, replace=False):
        tau, role, g, env = envs[idx]
        fd, an = _fd_unitary(st, H_XXX, tau, role, g, env, rng)
        assert fd == pytest.approx(an, rel=1e-6, abs=1e-10)


def test_angle_gradient_matches_finite_differences():
    rng = make_rng(8)
    st = Nw.init_random(Nw.MeraConfig(16, 2, q=2, t=1, parametrization=Nw.TROTTER_ANGLES), 2)
    _, envs = Ct.environments(st, H_XXX)
    for idx in rng.choice(len(envs), 4, replace=False):
        tau, role, g, env = envs[idx]
        circ = getattr(st.layers[tau], role)
        gate = circ.gates[g]
        grad = Ct.gate_angle_gradient(gate, env)
        j = int(rng.integers(C.N_ANGLES))

        def e_at(s):
            a = gate.angles.copy()
            a[j] += s
            us = circ.unitaries()
            us[g] = C.gate_from_angles(a)
            vals = [None] * st.config.layers
            vals[tau] = (us, None) if role == "disentangler" else (None, us)
            return Ct.evaluate(st, H_XXX, gradient=False, values=vals).energy

        fd = (e_at(1e-5) - e_at(-1e-5)) / 2e-5
        assert fd == pytest.approx(grad[j], rel=1e-6, abs=1e-10)


def test_full_tensor_environments_match_finite_differences():
    rng = make_rng(9)
    st = Nw.init_random(Nw.MeraConfig(16, 2, q=2, parametrization=Nw.FULL_TENSOR), 3)
    _, envs = Ct.environments(st, H_XXX)
    for tau, role, g, env in envs:
        assert g is None
        x0 = getattr(st.layers[tau], role)
        d = rng.standard_normal(x0.shape) + 1j * rng.standard_normal(x0.shape)

        def e_at(s):
            vals = [None] * st.config.layers
            x = x0 + s * d
            vals[tau] = (x, None) if role == "disentangler" else (None, x)
            return Ct.evaluate(st, H_XXX, gradient=False, values=vals).energy

        # e is quadratic in each tensor, so a central difference is exact up to rounding
        fd = (e_at(1e-5) - e_at(-1e-5)) / 2e-5
        assert fd == pytest.approx(2 * np.real(np.vdot(env, d)), rel=1e-6, abs=1e-10)


def test_xy_point_has_nonzero_gradient():
    st = Nw.init_random(Nw.MeraConfig(16, 2, t=2), 4)
    _, envs = Ct.environments(st, M.xxz(0.0))
    assert max(np.linalg.norm(e) for *_, e in envs) > 1e-3


def test_frozen_disentanglers_have_no_environment():
    st = Nw.freeze_disentanglers(Nw.init_random(Nw.MeraConfig(16, 2, t=2), 5))
    _, envs = Ct.environments(st, H_XXX)
    assert envs and {role for _, role, _, _ in envs} == {"isometry"}


@pytest.mark.parametrize("seed", range(4))
def test_energy_respects_exact_ground_state(seed):
    st = Nw.init_random(Nw.MeraConfig(8, 2, q=2, t=2), seed)
    assert Ct.energy(st, H_XXX) >= M.exact_ground_energy(M.xxz(1.0), 8) - 1e-10
