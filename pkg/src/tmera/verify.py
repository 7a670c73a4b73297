"""Fast self-checks behind ``tmera verify``: oracles and invariants on small instances."""
from __future__ import annotations

import math

import numpy as np

from . import contraction as Ct
from . import costmodel as cm
from . import models as M
from . import network as Nw
from .tensor import make_rng, random_isometry, random_unitary


def _check_references():
    pairs = [
        (M.reference_energy(M.xxz(1.0)), 0.25 - math.log(2)),
        (M.reference_energy(M.xxz(0.0)), -1 / math.pi),
        (M.reference_energy(M.ModelSpec("blbq", theta=-math.pi / 4)), -2 * math.sqrt(2)),
        (M.reference_energy(M.ModelSpec("blbqbc")), -math.log(2) - 1 / 8),
    ]
    err = max(abs(a - b) for a, b in pairs)
    return err < 1e-8, f"max deviation {err:.2e}"


def _check_oracle(rng):
    worst = 0.0
    h = M.qubit_term(M.xxz(0.5))
    for layout in ("brickwall", "prpc"):
        for k in range(3):
            st = Nw.init_random(Nw.MeraConfig(8, 2, q=1, t=2, layout=layout),
                                seed=int(rng.integers(1 << 30)))
            e = Ct.energy(st, h)
            worst = max(worst, abs(e - Nw.state_energy(Nw.build_state_vector(st), h)))
    return worst < 1e-10, f"max |e - <H>/N| {worst:.2e}"


def _check_adjoint(rng):
    worst = 0.0
    for db, da in ((2, 2), (4, 2), (4, 4)):
        u, w = random_unitary(db * db, rng), random_isometry(db * db, da, rng)
        hs = [random_unitary(db * db, rng) for _ in range(2)]
        h = Ct.BondPair(*(x + x.conj().T for x in hs))
        rs = []
        for _ in range(2):
            a = rng.standard_normal((da * da, da * da)) + 1j * rng.standard_normal((da * da, da * da))
            r = a @ a.conj().T
            rs.append(r / np.trace(r))
        rho = Ct.BondPair(*rs)
        lhs = Ct.pair_trace(Ct.descend(rho, u, w), h)
        rhs = 0.5 * Ct.pair_trace(rho, Ct.ascend(h, u, w))
        worst = max(worst, abs(lhs - rhs))
    return worst < 1e-12, f"max adjointness defect {worst:.2e}"


def _check_gradient(rng):
    h = M.qubit_term(M.xxz(1.0))
    st = Nw.init_random(Nw.MeraConfig(16, 2, q=2, t=1), seed=int(rng.integers(1 << 30)))
    _, envs = Ct.environments(st, h)
    worst = 0.0
    for idx in rng.choice(len(envs), size=5, replace=False):
        tau, role, g, env = envs[idx]
        circ = getattr(st.layers[tau], role)
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        a = a - a.conj().T
        u0 = circ.gates[g].unitary

        def e_at(s):
            us = circ.unitaries()
            w, v = np.linalg.eigh(1j * a)
            us[g] = (v @ np.diag(np.exp(-1j * s * w)) @ v.conj().T) @ u0
            vals = [None] * st.config.layers
            vals[tau] = (us, None) if role == "disentangler" else (None, us)
            return Ct.evaluate(st, h, gradient=False, values=vals).energy

        fd = (e_at(1e-5) - e_at(-1e-5)) / 2e-5
        an = 2 * np.real(np.vdot(env, a @ u0))
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    return worst < 1e-6, f"max relative FD error {worst:.2e}"


def _check_costs():
    ok = (cm.classical_cost(8, 7) == 2_097_152
          and math.isclose(cm.quantum_cost_sampling(3, 8, 6, 1e-3), 6.912e9, rel_tol=1e-14))
    return ok, "chi^r and sampling cost arithmetic"


def run_checks(seed: int = 0):
    rng = make_rng(seed)
    checks = [
        ("reference energies", _check_references),
        ("oracle equivalence", lambda: _check_oracle(rng)),
        ("ascend/descend adjointness", lambda: _check_adjoint(rng)),
        ("environment finite differences", lambda: _check_gradient(rng)),
        ("cost model", _check_costs),
    ]
    out = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
