"""Homogeneous modified-binary (T)MERA states.

Wiring of one layer, acting on a periodic lattice of ``L`` sites (``L``
divisible by 4), written in the state-preparation direction::

    coarse site k        ->  isometry W  ->  fine sites (2k, 2k+1)
    fine pairs (4m+1, 4m+2)  ->  disentangler U

So the layer is ``psi_fine = (prod_m U_{4m+1,4m+2}) (W x W x ... x W) psi_coarse``
and bonds (4m+3, 4m+4) carry no disentangler. After the top layer the
``n_top = N / 2^T`` coarse sites sit in the reference product state |0...0>.

Renormalized sites at level ``l`` carry ``q_l = min(q, 2 q_{l-1})`` qubits,
starting from the ``q_0 = ceil(log2 d)`` qubits of a physical site.
"""
from __future__ import annotations

import copy
import io
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import circuits as C
from .models import CapacityError
from .tensor import DTYPE, make_rng, polar, random_isometry, random_unitary

TROTTER_UNITARY = "trotter-unitary"
TROTTER_ANGLES = "trotter-angles"
FULL_TENSOR = "full-tensor"
PARAMETRIZATIONS = (TROTTER_UNITARY, TROTTER_ANGLES, FULL_TENSOR)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MeraConfig:
    n_sites: int
    layers: int
    q: int = 1
    t: int = 1
    layout: str = C.BRICKWALL
    parametrization: str = TROTTER_UNITARY
    q_phys: int = 1

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError("need at least one layer")
        if self.q < 1 or self.q_phys < 1 or self.t < 1:
            raise ConfigError("q, q_phys and t must be positive")
        if self.parametrization not in PARAMETRIZATIONS:
            raise ConfigError(f"unknown parametrization {self.parametrization!r}")
        if self.layout not in (C.BRICKWALL, C.PRPC):
            raise ConfigError(f"unknown layout {self.layout!r}")
        if self.n_sites % (2**self.layers):
            raise ConfigError(f"N={self.n_sites} is not divisible by 2^T={2**self.layers}")
        n_top = self.n_sites // 2**self.layers
        if n_top < 2 or n_top % 2:
            raise ConfigError(f"N / 2^T = {n_top} must be even and >= 2")

    @property
    def n_top(self) -> int:
        return self.n_sites // 2**self.layers

    @property
    def chi(self) -> int:
        return 2**self.q

    def qubit_levels(self) -> list[int]:
        levels = [self.q_phys]
        for _ in range(self.layers):
            levels.append(min(self.q, 2 * levels[-1]))
        return levels

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MeraLayer:
    disentangler: object  # TrotterCircuit, or a dense unitary in full-tensor mode
    isometry: object      # TrotterCircuit, or a dense isometry in full-tensor mode
    q_below: int
    q_above: int
    frozen: bool = False  # disentangler pinned to the identity (tree-network mode)

    @property
    def is_circuit(self) -> bool:
        return isinstance(self.isometry, C.TrotterCircuit)

    def tensors(self):
        """Assembled (disentangler, isometry) matrices of shapes (chi_b^2, chi_b^2), (chi_b^2, chi_a)."""
        d2 = 4**self.q_below
        if self.frozen:
            u = np.eye(d2, dtype=DTYPE)
        elif self.is_circuit:
            u = C.assemble_tensor(self.disentangler, C.DISENTANGLER, self.q_below)
        else:
            u = self.disentangler
        if self.is_circuit:
            w = C.assemble_tensor(self.isometry, C.ISOMETRY, self.q_below, self.q_above)
        else:
            w = self.isometry
        return u, w

    def gates(self, include_frozen: bool = False):
        if not self.is_circuit:
            return []
        out = list(self.isometry.gates)
        if include_frozen or not self.frozen:
            out = list(self.disentangler.gates) + out
        return out


@dataclass
class TMeraState:
    config: MeraConfig
    layers: list = field(default_factory=list)
    seed: int | None = None
    wiring_seed: int | None = None

    def copy(self) -> "TMeraState":
        return copy.deepcopy(self)

    def gates(self, include_frozen: bool = False):
        return [g for layer in self.layers for g in layer.gates(include_frozen)]

    def tensors(self):
        return [layer.tensors() for layer in self.layers]


# ---------------------------------------------------------------------------
# construction


def _layouts(config: MeraConfig, q_below: int, wiring_rng):
    n = 2 * q_below
    dis = C.make_layout(config.layout, n, config.t, wiring_rng)
    iso = C.make_layout(config.layout, n, config.t, wiring_rng)
    return dis, iso


def _build(config: MeraConfig, seed, wiring_seed, make_circuit, make_full):
    wiring_seed = seed if wiring_seed is None else wiring_seed
    wiring_rng = make_rng(0 if wiring_seed is None else wiring_seed)
    levels = config.qubit_levels()
    layers = []
    for tau in range(config.layers):
        qb, qa = levels[tau], levels[tau + 1]
        if config.parametrization == FULL_TENSOR:
            u, w = make_full(qb, qa)
        else:
            dl, il = _layouts(config, qb, wiring_rng)
            u, w = make_circuit(dl), make_circuit(il)
        layers.append(MeraLayer(u, w, qb, qa))
    return TMeraState(config, layers, seed, wiring_seed)


def init_random(config: MeraConfig, seed: int, wiring_seed: int | None = None) -> TMeraState:
    """Random state: Haar gates (or uniform angles in [-pi, pi]) or Haar tensors."""
    rng = make_rng(seed)
    angles = config.parametrization == TROTTER_ANGLES
    return _build(
        config, seed, wiring_seed,
        lambda lay: C.TrotterCircuit.random(lay, rng, with_angles=angles),
        lambda qb, qa: (random_unitary(4**qb, rng), random_isometry(4**qb, 2**qa, rng)),
    )


def _near_identity_full(d_in, d_out, scale, rng):
    z = rng.standard_normal((d_in, d_out)) + 1j * rng.standard_normal((d_in, d_out))
    return polar(np.eye(d_in, d_out, dtype=DTYPE) + scale * z)


def init_near_identity(config: MeraConfig, scale: float, seed: int,
                       wiring_seed: int | None = None) -> TMeraState:
    """Gates with two-qubit angles uniform in [-scale, scale]; scale 0 is the identity."""
    if scale < 0:
        raise ValueError("scale must be non-negative")
    rng = make_rng(seed)
    angles = config.parametrization == TROTTER_ANGLES
    return _build(
        config, seed, wiring_seed,
        lambda lay: C.TrotterCircuit.near_identity(lay, scale, rng, with_angles=angles),
        lambda qb, qa: (_near_identity_full(4**qb, 4**qb, scale, rng),
                        _near_identity_full(4**qb, 2**qa, scale, rng)),
    )


def freeze_disentanglers(state: TMeraState, frozen: bool = True) -> TMeraState:
    """Pin all disentanglers to the identity (``frozen=True``) or release them.

    Freezing resets disentangler values to the identity; releasing keeps the
    current (identity) values, so the energy is unchanged.
    """
    out = state.copy()
    for layer in out.layers:
        if frozen:
            layer.disentangler = _identity_like(layer.disentangler)
        layer.frozen = frozen
    return out


def promote_tttn_to_tmera(state: TMeraState) -> TMeraState:
    return freeze_disentanglers(state, frozen=False)


def _identity_like(obj):
    if isinstance(obj, C.TrotterCircuit):
        with_angles = any(g.angles is not None for g in obj.gates)
        return C.TrotterCircuit.identity(obj.layout, with_angles=with_angles)
    return np.eye(obj.shape[0], dtype=DTYPE)


def add_layer(state: TMeraState, scale: float = 0.05, seed: int = 0,
              frozen: bool | None = None) -> TMeraState:
    """Insert a new top layer close to the identity; lower layers are untouched.

    With ``scale=0`` the new layer maps the reference state onto the old one,
    so the energy is unchanged.
    """
    cfg = state.config
    try:
        new_cfg = replace(cfg, layers=cfg.layers + 1)
    except ConfigError as exc:
        raise ConfigError(f"cannot add a layer: {exc}") from exc
    rng = make_rng(seed)
    wiring_rng = make_rng(seed + 7919)
    levels = new_cfg.qubit_levels()
    qb, qa = levels[cfg.layers], levels[cfg.layers + 1]
    angles = cfg.parametrization == TROTTER_ANGLES
    if cfg.parametrization == FULL_TENSOR:
        u = _near_identity_full(4**qb, 4**qb, scale, rng)
        w = _near_identity_full(4**qb, 2**qa, scale, rng)
    else:
        dl, il = _layouts(cfg, qb, wiring_rng)
        u = C.TrotterCircuit.near_identity(dl, scale, rng, with_angles=angles)
        w = C.TrotterCircuit.near_identity(il, scale, rng, with_angles=angles)
    if frozen is None:
        frozen = bool(state.layers) and all(layer.frozen for layer in state.layers)
    layer = MeraLayer(u, w, qb, qa)
    out = state.copy()
    out.config = new_cfg
    out.layers.append(layer)
    if frozen:
        layer.disentangler = _identity_like(layer.disentangler)
        layer.frozen = True
    return out


def load_full_tensors(state: TMeraState, tensors) -> TMeraState:
    """Full-tensor copy of ``state`` holding the given (U, W) per layer."""
    cfg = replace(state.config, parametrization=FULL_TENSOR)
    layers = [MeraLayer(np.array(u, dtype=DTYPE), np.array(w, dtype=DTYPE), l.q_below, l.q_above)
              for (u, w), l in zip(tensors, state.layers)]
    return TMeraState(cfg, layers, state.seed, state.wiring_seed)


def to_full_tensor(state: TMeraState) -> TMeraState:
    return load_full_tensors(state, state.tensors())


# ---------------------------------------------------------------------------
# explicit state vector (small systems only)

MAX_STATE_QUBITS = 20


def _apply_pair(op4, psi, i, j):
    t = np.tensordot(op4, psi, axes=((2, 3), (i, j)))
    return np.moveaxis(t, (0, 1), (i, j))


def build_state_vector(state: TMeraState) -> np.ndarray:
    """Dense state on the embedded physical qubits, as a tensor with one axis per site."""
    cfg = state.config
    if cfg.q_phys * cfg.n_sites > MAX_STATE_QUBITS:
        raise CapacityError(f"{cfg.q_phys * cfg.n_sites} qubits exceeds {MAX_STATE_QUBITS}")
    levels = cfg.qubit_levels()
    d_top = 2 ** levels[-1]
    site = np.zeros(d_top, dtype=DTYPE)
    site[0] = 1.0
    psi = site
    for _ in range(cfg.n_top - 1):
        psi = np.multiply.outer(psi, site)
    psi = psi.reshape((d_top,) * cfg.n_top)
    for layer in reversed(state.layers):
        u, w = layer.tensors()
        db = 2**layer.q_below
        w3 = w.reshape(db, db, -1)
        u4 = u.reshape(db, db, db, db)
        n_coarse = psi.ndim
        for k in range(n_coarse - 1, -1, -1):
            psi = np.tensordot(psi, w3, axes=([k], [2]))
            psi = np.moveaxis(psi, (-2, -1), (k, k + 1))
        for m in range(psi.ndim // 4):
            psi = _apply_pair(u4, psi, 4 * m + 1, 4 * m + 2)
    return psi


def state_energy(psi: np.ndarray, term) -> float:
    """Energy per site of a periodic chain state given as a site-axis tensor."""
    n = psi.ndim
    d = psi.shape[0]
    h4 = np.asarray(term).reshape(d, d, d, d)
    total = 0.0
    bonds = [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(0, 1)]
    for i, j in bonds:
        total += np.vdot(psi, _apply_pair(h4, psi, i, j))
    return float(total.real) / n


# ---------------------------------------------------------------------------
# serialization


def _encode(a):
    a = np.asarray(a)
    return {"shape": list(a.shape), "re": a.real.ravel().tolist(), "im": a.imag.ravel().tolist()}


def _decode(d):
    return (np.array(d["re"]) + 1j * np.array(d["im"])).reshape(d["shape"])


def _circuit_to_dict(c):
    if not isinstance(c, C.TrotterCircuit):
        return {"dense": _encode(c)}
    return {
        "layout": c.layout.to_dict(),
        "unitaries": [_encode(g.unitary) for g in c.gates],
        "angles": [None if g.angles is None else g.angles.tolist() for g in c.gates],
    }


def _circuit_from_dict(d):
    if "dense" in d:
        return _decode(d["dense"])
    layout = C.CircuitLayout.from_dict(d["layout"])
    gates = [C.Gate(tuple(p), _decode(u), None if a is None else np.array(a))
             for p, u, a in zip(layout.pairs, d["unitaries"], d["angles"])]
    return C.TrotterCircuit(layout, gates)


def state_to_dict(state: TMeraState) -> dict:
    return {
        "format": "tmera-state/1",
        "config": state.config.to_dict(),
        "seed": state.seed,
        "wiring_seed": state.wiring_seed,
        "layers": [{
            "q_below": l.q_below, "q_above": l.q_above, "frozen": l.frozen,
            "disentangler": _circuit_to_dict(l.disentangler),
            "isometry": _circuit_to_dict(l.isometry),
        } for l in state.layers],
    }


def state_from_dict(d: dict) -> TMeraState:
    if d.get("format") != "tmera-state/1":
        raise ValueError("not a serialized TMERA state")
    cfg = MeraConfig(**d["config"])
    layers = [MeraLayer(_circuit_from_dict(l["disentangler"]), _circuit_from_dict(l["isometry"]),
                        l["q_below"], l["q_above"], l["frozen"]) for l in d["layers"]]
    return TMeraState(cfg, layers, d["seed"], d["wiring_seed"])


def save_state(state: TMeraState, path) -> None:
    """Write the state as UTF-8 JSON bytes; floats round-trip exactly."""
    with open(path, "wb") as fh:
        fh.write(json.dumps(state_to_dict(state), sort_keys=True).encode())


def load_state(path) -> TMeraState:
    with open(path, "rb") as fh:
        return state_from_dict(json.loads(fh.read().decode()))


def dumps_state(state: TMeraState) -> bytes:
    buf = io.BytesIO()
    buf.write(json.dumps(state_to_dict(state), sort_keys=True).encode())
    return buf.getvalue()
