"""Causal-cone contraction of homogeneous modified-binary MERA.

Two-site operators live on two bond classes per level: *even* bonds
(2k, 2k+1) and *odd* bonds (2k+1, 2k+2). Inside one layer block of fine
sites s0..s3 (disentangler on s1, s2; isometries on (s0, s1) and (s2, s3))
the four causal-cone classes are::

    left    h_even on (s0, s1)  ->  even bond of the coarse lattice
    centre  h_odd  on (s1, s2)  ->  even
    right   h_even on (s2, s3)  ->  even
    outer   h_odd  on (s3, s4)  ->  odd   (no disentangler in the cone)

Each class map is unital. ``ascend`` sums the class maps, so the total
sum_i <h_i> is preserved from one level to the next. Densities are the
bond-class averages and ``descend`` is trace preserving.

Operators are (chi, chi, chi, chi) tensors ``h[a, b, a', b']`` acting as the
matrix ``h[(a, b), (a', b')]``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import circuits as C
from .models import qubit_term
from .network import FULL_TENSOR, TROTTER_ANGLES, TMeraState
from .tensor import DTYPE, einsum


class BondPair(NamedTuple):
    even: np.ndarray
    odd: np.ndarray


# Each class is one closed network Tr[rho A(h)]. Operand names: w/u the
# layer isometry/disentangler (wc/uc conjugates), h the input operator,
# rho the output-level density. rho always carries indices "mngh" or
# "hjcf" laid out as rho[row, row, col, col].
_CLASSES = {
    "left": ("aeg,bcef,fdh,abij,ikm,jckl,ldn,mngh",
             ("wc", "uc", "wc", "h", "w", "u", "w", "rho"), "even", "even"),
    "centre": ("aeg,bcef,fdh,bcij,akm,ijkl,ldn,mngh",
               ("wc", "uc", "wc", "h", "w", "u", "w", "rho"), "odd", "even"),
    "right": ("aeg,bcef,fdh,cdij,akm,bikl,ljn,mngh",
              ("wc", "uc", "wc", "h", "w", "u", "w", "rho"), "even", "even"),
    "outer": ("abc,def,bdgi,agh,iej,hjcf",
              ("wc", "wc", "h", "w", "w", "rho"), "odd", "odd"),
}
CLASS_NAMES = tuple(_CLASSES)


def _operands(names, u4, w3, h, rho):
    table = {"u": u4, "uc": u4.conj(), "w": w3, "wc": w3.conj(), "h": h, "rho": rho}
    return [table[n] for n in names]


def _hole(spec, names, skip, operands):
    subs = spec.split(",")
    inputs = [s for k, s in enumerate(subs) if k != skip]
    ops = [o for k, o in enumerate(operands) if k != skip]
    out = subs[skip]
    if names[skip] in ("h", "rho"):
        # operators come out transposed: rows of the hole are its columns
        out = out[2:] + out[:2]
    return einsum(",".join(inputs) + "->" + out, *ops)


def _layer_tensors(u, w):
    db = int(round(np.sqrt(w.shape[0])))
    return u.reshape(db, db, db, db), w.reshape(db, db, w.shape[1])


def ascend_class(kind: str, h, u, w):
    """One causal-cone class map applied to a two-site operator (4-index or matrix)."""
    spec, names, _, _ = _CLASSES[kind]
    u4, w3 = _layer_tensors(u, w)
    h4 = _as4(h, w3.shape[0])
    ops = _operands(names, u4, w3, h4, None)
    return _hole(spec, names, names.index("rho"), ops)


def descend_class(kind: str, rho, u, w):
    spec, names, _, _ = _CLASSES[kind]
    u4, w3 = _layer_tensors(u, w)
    rho4 = _as4(rho, w3.shape[2])
    ops = _operands(names, u4, w3, None, rho4)
    return _hole(spec, names, names.index("h"), ops)


def _as4(op, d):
    op = np.asarray(op)
    return op if op.ndim == 4 else op.reshape(d, d, d, d)


def _legs(x, db):
    return x.reshape(db, db, db, db, -1)


def _apply2(op, x, first, db):
    """Apply a (db^2 x db^2) operator to legs (first, first+1) of a (db,)*4 + (k,) tensor."""
    shape = _legs(x, db).shape
    if first == 0:
        return (op @ x.reshape(db * db, -1)).reshape(shape)
    if first == 1:
        return np.matmul(op, x.reshape(db, db * db, -1)).reshape(shape)
    return np.matmul(op, x.reshape(db * db, db * db, -1)).reshape(shape)


def _reduced(x, y, first, db):
    """Tr over the two legs other than (first, first+1) of x y^dag."""
    tx, ty = _legs(x, db), _legs(y, db)
    if first:
        keep = (first, first + 1)
        rest = tuple(k for k in range(4) if k not in keep) + (4,)
        tx = tx.transpose(keep + rest)
        ty = ty.transpose(keep + rest)
    return tx.reshape(db * db, -1) @ ty.reshape(db * db, -1).conj().T


class _Cone:
    """Shared pieces of one layer: N = W x W and M = (1 x U x 1) N."""

    def __init__(self, u, w):
        self.db = db = int(round(np.sqrt(w.shape[0])))
        self.da = w.shape[1]
        self.u, self.w = u, w
        w3 = w.reshape(db, db, self.da)
        # N[x, a, b, y, c, c'] = w[x, a, c] w[b, y, c']
        self.n = np.multiply.outer(w3, w3).transpose(0, 1, 3, 4, 2, 5).reshape(db**4, -1)
        self.m = _apply2(u, self.n, 1, db).reshape(db**4, -1)

    def even_operator(self, h):
        """sum_i h on the three fine bonds under the cone (left, centre, right)."""
        db = self.db
        hm = _apply2(h.even, self.m, 0, db) + _apply2(h.odd, self.m, 1, db) \
            + _apply2(h.even, self.m, 2, db)
        return hm.reshape(db**4, -1)

    def odd_operator(self, h):
        return _apply2(h.odd, self.n, 1, self.db).reshape(self.db**4, -1)

    def ascend(self, h: BondPair) -> BondPair:
        return BondPair(self.m.conj().T @ self.even_operator(h),
                        self.n.conj().T @ self.odd_operator(h))

    def descend(self, rho: BondPair) -> BondPair:
        db = self.db
        mr = self.m @ rho.even
        nr = self.n @ rho.odd
        even = 0.5 * (_reduced(mr, self.m, 0, db) + _reduced(mr, self.m, 2, db))
        odd = 0.5 * (_reduced(mr, self.m, 1, db) + _reduced(nr, self.n, 1, db))
        return BondPair(even, odd)

    def environments(self, h: BondPair, rho: BondPair, scale: float):
        """(dE/d conj U, dE/d conj W) for E = scale * (Tr[rho_e h_e'] + Tr[rho_o h_o'])."""
        db, da = self.db, self.da
        g_m = scale * (self.even_operator(h) @ rho.even)
        g_n = scale * (self.odd_operator(h) @ rho.odd)
        # M = U_{12} N: chain to U and to N
        g_u = np.tensordot(_legs(g_m, db), _legs(self.n, db).conj(),
                           axes=((0, 3, 4), (0, 3, 4))).reshape(db * db, db * db)
        g_n = g_n + _apply2(self.u.conj().T, g_m, 1, db).reshape(g_n.shape)
        g4 = g_n.reshape(db * db, db * db, da, da).transpose(0, 2, 1, 3).reshape(db * db * da, -1)
        wc = self.w.conj().reshape(-1)
        g_w = (g4 @ wc + wc @ g4).reshape(db * db, da)
        return g_u, g_w


def _as_matrix(op):
    op = np.asarray(op)
    if op.ndim == 4:
        d = op.shape[0]
        return op.reshape(d * d, d * d)
    return op


def ascend(ops, u, w) -> BondPair:
    """Sum of the class maps: even' = left(e) + centre(o) + right(e), odd' = outer(o)."""
    if not isinstance(ops, BondPair):
        ops = BondPair(ops, ops)
    ops = BondPair(_as_matrix(ops.even), _as_matrix(ops.odd))
    return _Cone(u, w).ascend(ops)


def descend(rhos: BondPair, u, w) -> BondPair:
    """Bond-averaged densities one level down; adjoint of ``ascend`` up to a factor 1/2.

    With the pairing <rho, h> = Tr[rho_e h_e] + Tr[rho_o h_o]:
    <descend(rho), h> = <rho, ascend(h)> / 2.
    """
    rhos = BondPair(_as_matrix(rhos.even), _as_matrix(rhos.odd))
    return _Cone(u, w).descend(rhos)


def pair_trace(rho: BondPair, h: BondPair) -> complex:
    """Tr[rho_e h_e] + Tr[rho_o h_o]."""
    return sum(np.sum(_as_matrix(r).T * _as_matrix(o)) for r, o in zip(rho, h))


def top_density(q_top: int) -> BondPair:
    d = 2**q_top
    rho = np.zeros((d * d, d * d), dtype=DTYPE)
    rho[0, 0] = 1.0
    return BondPair(rho, rho)


class Evaluation(NamedTuple):
    energy: float
    operators: list       # BondPair per level, scaled so e = <rho_l, h_l> / 2
    densities: list       # BondPair per level
    tensor_envs: list     # (dE/d conj U, dE/d conj W) per layer, as matrices
    gate_envs: list       # per layer: (disentangler envs, isometry envs); lists for circuits


def _term(model_or_term):
    if hasattr(model_or_term, "family"):
        return qubit_term(model_or_term)
    return np.asarray(model_or_term, dtype=DTYPE)


def _assemble(layer, values):
    """Layer tensors plus the circuit forward passes needed for gate environments."""
    dis_val, iso_val = values if values is not None else (None, None)
    d2 = 4**layer.q_below
    fwd_u = fwd_w = None
    if layer.is_circuit:
        if layer.frozen:
            u = np.eye(d2, dtype=DTYPE)
        else:
            fwd_u = C._forward(layer.disentangler, d2, dis_val)
            u = fwd_u[1][-1]
        fwd_w = C._forward(layer.isometry, 2**layer.q_above, iso_val)
        w = fwd_w[1][-1]
    else:
        u = np.eye(d2, dtype=DTYPE) if layer.frozen else (
            layer.disentangler if dis_val is None else dis_val)
        w = layer.isometry if iso_val is None else iso_val
    return u, w, fwd_u, fwd_w


def evaluate(state: TMeraState, model_or_term, gradient: bool = True, values=None) -> Evaluation:
    """Energy per site and (optionally) environments of every layer tensor and gate.

    Operators at level l are scaled by L_l / N so that the energy per site
    equals (Tr[rho_e h_e] + Tr[rho_o h_o]) / 2 at every level. ``values``
    optionally overrides the layer contents: one ``(dis, iso)`` per layer,
    each a list of gate unitaries (circuits) or a dense tensor.
    """
    cfg = state.config
    h = _term(model_or_term)
    d0 = 2**cfg.q_phys
    if h.shape != (d0 * d0, d0 * d0):
        raise ValueError(f"term of shape {h.shape} does not match {cfg.q_phys} qubits per site")
    values = values or [None] * cfg.layers
    parts = [_assemble(layer, v) for layer, v in zip(state.layers, values)]
    cones = [_Cone(u, w) for u, w, _, _ in parts]
    ops = [BondPair(h, h)]
    for cone in cones:
        up = cone.ascend(ops[-1])
        ops.append(BondPair(0.5 * up.even, 0.5 * up.odd))
    rhos = [None] * (cfg.layers + 1)
    rhos[-1] = top_density(cfg.qubit_levels()[-1])
    e = 0.5 * pair_trace(rhos[-1], ops[-1])
    if abs(e.imag) > 1e-10:
        raise FloatingPointError(f"energy has imaginary part {e.imag}")
    if not gradient:
        return Evaluation(float(e.real), ops, rhos, [], [])
    for tau in range(cfg.layers - 1, -1, -1):
        rhos[tau] = cones[tau].descend(rhos[tau + 1])
    tensor_envs, gate_envs = [], []
    for tau, (cone, layer, (u, w, fwd_u, fwd_w)) in enumerate(zip(cones, state.layers, parts)):
        # e = (1/4) sum over classes of Tr[rho A(h)]
        gu, gw = cone.environments(ops[tau], rhos[tau + 1], 0.25)
        tensor_envs.append((gu, gw))
        if layer.is_circuit:
            dis = None if layer.frozen else C.circuit_gate_environments(
                layer.disentangler, u.shape[1], gu, forward=fwd_u)
            iso = C.circuit_gate_environments(layer.isometry, w.shape[1], gw, forward=fwd_w)
            gate_envs.append((dis, iso))
        else:
            gate_envs.append((None if layer.frozen else gu, gw))
    return Evaluation(float(e.real), ops, rhos, tensor_envs, gate_envs)


def energy(state: TMeraState, model_or_term) -> float:
    return evaluate(state, model_or_term, gradient=False).energy


def environments(state: TMeraState, model_or_term):
    """``dE/d conj(X)`` for every variational object ``X``.

    Returns ``(energy, envs)`` with ``envs`` a list of
    ``(layer, role, gate_index, env)``; ``gate_index`` is ``None`` for
    full tensors. Frozen disentanglers are skipped.
    """
    ev = evaluate(state, model_or_term)
    out = []
    for tau, (dis, iso) in enumerate(ev.gate_envs):
        for role, envs in (("disentangler", dis), ("isometry", iso)):
            if envs is None:
                continue
            if isinstance(envs, list):
                out.extend((tau, role, g, env) for g, env in enumerate(envs))
            else:
                out.append((tau, role, None, envs))
    return ev.energy, out


def gate_angle_gradient(gate, env):
    """d e / d angles for one angle-parametrized gate with environment ``env``."""
    _, du = C.gate_angle_derivatives(gate.angles)
    return 2.0 * np.real(np.einsum("ij,kij->k", env.conj(), du))


__all__ = [
    "BondPair", "CLASS_NAMES", "ascend", "ascend_class", "descend", "descend_class",
    "energy", "environments", "evaluate", "gate_angle_gradient", "pair_trace", "top_density",
    "FULL_TENSOR", "TROTTER_ANGLES",
]
