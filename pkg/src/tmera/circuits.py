"""Two-qubit Trotter gates, circuit layouts and circuit-to-tensor assembly.

Wire ``0`` is the most significant qubit: an ``n``-wire basis index is
``sum_k b_k 2^(n-1-k)``, so ``kron(A, B)`` puts ``A`` on the lower wires.
A gate on wires ``(p, q)`` uses the two-qubit index ``2 b_p + b_q``.

Gate angles are stored as a length-15 vector::

    [theta_x, theta_y, theta_z,
     alpha1, beta1, gamma1,  alpha2, beta2, gamma2,   # pre-rotations  (qubit p, qubit q)
     alpha3, beta3, gamma3,  alpha4, beta4, gamma4]   # post-rotations (qubit p, qubit q)

and map to ``U = (R3 x R4) Rzz(theta_z) Ryy(theta_y) Rxx(theta_x) (R1 x R2)``
with ``R(a, b, c) = exp(-i a Z/2) exp(-i b Y/2) exp(-i c Z/2)`` and
``Rss(theta) = exp(-i theta s x s / 2)``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .tensor import DTYPE, polar, random_unitary

I2 = np.eye(2, dtype=DTYPE)
X = np.array([[0, 1], [1, 0]], dtype=DTYPE)
Y = np.array([[0, -1j], [1j, 0]], dtype=DTYPE)
Z = np.array([[1, 0], [0, -1]], dtype=DTYPE)
PAULI = (X, Y, Z)
PAULI2 = tuple(np.kron(s, s) for s in PAULI)
I4 = np.eye(4, dtype=DTYPE)

N_ANGLES = 15

BRICKWALL = "brickwall"
PRPC = "prpc"


# ---------------------------------------------------------------------------
# rotations


def _rz(a):
    return np.array([[np.exp(-0.5j * a), 0], [0, np.exp(0.5j * a)]], dtype=DTYPE)


def _ry(b):
    c, s = np.cos(b / 2), np.sin(b / 2)
    return np.array([[c, -s], [s, c]], dtype=DTYPE)


def euler_rotation(a, b, c):
    return _rz(a) @ _ry(b) @ _rz(c)


def two_qubit_rotation(theta, axis: int):
    return np.cos(theta / 2) * I4 - 1j * np.sin(theta / 2) * PAULI2[axis]


def canonical_gate(thetas):
    tx, ty, tz = thetas
    return two_qubit_rotation(tz, 2) @ two_qubit_rotation(ty, 1) @ two_qubit_rotation(tx, 0)


def gate_from_angles(angles):
    a = np.asarray(angles, dtype=float)
    pre = np.kron(euler_rotation(*a[3:6]), euler_rotation(*a[6:9]))
    post = np.kron(euler_rotation(*a[9:12]), euler_rotation(*a[12:15]))
    return post @ canonical_gate(a[:3]) @ pre


def gate_angle_derivatives(angles):
    """Return ``(U, dU)`` with ``dU[j] = dU/d angles[j]``, shape (15, 4, 4)."""
    a = np.asarray(angles, dtype=float)
    hz = -0.5j * Z
    hy = -0.5j * Y

    def euler_parts(a_, b_, c_):
        rz1, ry, rz2 = _rz(a_), _ry(b_), _rz(c_)
        r = rz1 @ ry @ rz2
        return r, (hz @ r, rz1 @ hy @ ry @ rz2, r @ hz)

    r = [euler_parts(*a[3 + 3 * k:6 + 3 * k]) for k in range(4)]
    rot = [two_qubit_rotation(a[j], j) for j in range(3)]
    core = rot[2] @ rot[1] @ rot[0]
    pre = np.kron(r[0][0], r[1][0])
    post = np.kron(r[2][0], r[3][0])
    u = post @ core @ pre
    du = np.empty((N_ANGLES, 4, 4), dtype=DTYPE)
    for j in range(3):
        # the three two-qubit rotations commute
        du[j] = post @ (-0.5j * PAULI2[j]) @ core @ pre
    for k in range(3):
        du[3 + k] = post @ core @ np.kron(r[0][1][k], r[1][0])
        du[6 + k] = post @ core @ np.kron(r[0][0], r[1][1][k])
        du[9 + k] = np.kron(r[2][1][k], r[3][0]) @ core @ pre
        du[12 + k] = np.kron(r[2][0], r[3][1][k]) @ core @ pre
    return u, du


def _batch_kron(a, b):
    g = a.shape[0]
    return np.einsum("gij,gkl->gikjl", a, b).reshape(g, 4, 4)


def _batch_euler(a):
    """Euler rotations and their three angle derivatives for rows of ``a`` (G, 3)."""
    g = a.shape[0]
    rz1 = np.zeros((g, 2, 2), dtype=DTYPE)
    rz2 = np.zeros((g, 2, 2), dtype=DTYPE)
    rz1[:, 0, 0], rz1[:, 1, 1] = np.exp(-0.5j * a[:, 0]), np.exp(0.5j * a[:, 0])
    rz2[:, 0, 0], rz2[:, 1, 1] = np.exp(-0.5j * a[:, 2]), np.exp(0.5j * a[:, 2])
    c, s = np.cos(a[:, 1] / 2), np.sin(a[:, 1] / 2)
    ry = np.empty((g, 2, 2), dtype=DTYPE)
    ry[:, 0, 0], ry[:, 0, 1], ry[:, 1, 0], ry[:, 1, 1] = c, -s, s, c
    r = rz1 @ ry @ rz2
    hz, hy = -0.5j * Z, -0.5j * Y
    return r, (hz @ r, rz1 @ hy @ ry @ rz2, r @ hz)


def batch_gate_derivatives(angles):
    """Vectorized ``gate_angle_derivatives`` for angle rows (G, 15): U (G, 4, 4), dU (G, 15, 4, 4)."""
    a = np.atleast_2d(np.asarray(angles, dtype=float))
    g = a.shape[0]
    r = [_batch_euler(a[:, 3 + 3 * k:6 + 3 * k]) for k in range(4)]
    rot = [np.cos(a[:, j, None, None] / 2) * I4 - 1j * np.sin(a[:, j, None, None] / 2) * PAULI2[j]
           for j in range(3)]
    core = rot[2] @ rot[1] @ rot[0]
    pre = _batch_kron(r[0][0], r[1][0])
    post = _batch_kron(r[2][0], r[3][0])
    core_pre = core @ pre
    u = post @ core_pre
    du = np.empty((g, N_ANGLES, 4, 4), dtype=DTYPE)
    for j in range(3):
        du[:, j] = post @ (-0.5j * PAULI2[j]) @ core_pre
    post_core = post @ core
    for k in range(3):
        du[:, 3 + k] = post_core @ _batch_kron(r[0][1][k], r[1][0])
        du[:, 6 + k] = post_core @ _batch_kron(r[0][0], r[1][1][k])
        du[:, 9 + k] = _batch_kron(r[2][1][k], r[3][0]) @ core_pre
        du[:, 12 + k] = _batch_kron(r[2][0], r[3][1][k]) @ core_pre
    return u, du


# ---------------------------------------------------------------------------
# canonical (KAK) decomposition

_MAGIC = np.array([[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]],
                  dtype=DTYPE) / np.sqrt(2)
# Pauli eigenvalues (XX, YY, ZZ) of the four magic basis vectors
_MAGIC_SIGNS = np.real(np.array([[np.vdot(_MAGIC[:, k], p @ _MAGIC[:, k]) for p in PAULI2]
                                 for k in range(4)]))


def _kron_factor(k):
    """Split a 4x4 matrix ``a x b`` (up to phase) into unitary factors."""
    r = k.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    u, s, vh = np.linalg.svd(r)
    a = np.sqrt(s[0]) * u[:, 0].reshape(2, 2)
    b = np.sqrt(s[0]) * vh[0].reshape(2, 2)
    return polar(a), polar(b)


def _euler_angles(u):
    """z-y-z Euler angles of a 2x2 unitary, up to global phase."""
    u = u / np.sqrt(np.linalg.det(u))
    beta = 2 * np.arctan2(abs(u[1, 0]), abs(u[0, 0]))
    if abs(u[0, 0]) < 1e-12:
        s = 0.0
        d = 2 * np.angle(u[1, 0])
    elif abs(u[1, 0]) < 1e-12:
        s = 2 * np.angle(u[1, 1])
        d = 0.0
    else:
        s = 2 * np.angle(u[1, 1])
        d = 2 * np.angle(u[1, 0])
    alpha, gamma = (s + d) / 2, (s - d) / 2
    return np.array([alpha, beta, gamma])


def _raw_kak(u, mix):
    ub = _MAGIC.conj().T @ u @ _MAGIC
    ub = ub / np.linalg.det(ub) ** 0.25
    m = ub.T @ ub
    _, p = np.linalg.eigh(m.real + mix * m.imag)
    if np.linalg.det(p) < 0:
        p[:, 0] = -p[:, 0]
    diag = np.diagonal(p.T @ m @ p)
    phi = np.angle(diag) / 2
    k1 = ub @ p @ np.diag(np.exp(-1j * phi))
    if np.linalg.det(k1).real < 0:
        phi[0] += np.pi
        k1[:, 0] = -k1[:, 0]
    thetas = -0.5 * _MAGIC_SIGNS.T @ phi
    left = _MAGIC @ k1.real @ _MAGIC.conj().T
    right = _MAGIC @ p.T @ _MAGIC.conj().T
    a1, a2 = _kron_factor(left)
    b1, b2 = _kron_factor(right)
    return thetas, [a1, a2], [b1, b2]


_SWAP_ROT = {  # v with v s_j v^dag = +-s_k, for the swap of axes (j, k)
    (0, 1): euler_rotation(np.pi / 2, 0, 0),
    (1, 2): np.cos(np.pi / 4) * I2 - 1j * np.sin(np.pi / 4) * X,
    (0, 2): _ry(np.pi / 2),
}


def _canonicalize(thetas, a, b, tol=1e-12):
    """Move ``thetas`` into the Weyl chamber pi/2 >= x >= y >= |z|.

    Maintains ``U ~ (a0 x a1) A(thetas) (b0 x b1)`` up to global phase.
    """
    t = np.array(thetas, dtype=float)
    a = list(a)
    b = list(b)

    def shift(j, k):
        # A(t) = A(t + k pi e_j) (i s_j x s_j)^k, phases dropped
        t[j] += k * np.pi
        if k % 2:
            b[0] = PAULI[j] @ b[0]
            b[1] = PAULI[j] @ b[1]

    def negate_pair(j, k):
        l = 3 - j - k
        t[j], t[k] = -t[j], -t[k]
        a[0] = a[0] @ PAULI[l]
        b[0] = PAULI[l] @ b[0]

    def swap(j, k):
        j, k = min(j, k), max(j, k)
        v = _SWAP_ROT[(j, k)]
        t[j], t[k] = t[k], t[j]
        a[0], a[1] = a[0] @ v.conj().T, a[1] @ v.conj().T
        b[0], b[1] = v @ b[0], v @ b[1]

    for j in range(3):
        k = -int(np.floor((t[j] + np.pi / 2) / np.pi))
        if k:
            shift(j, k)
        if t[j] >= np.pi / 2 - tol:
            shift(j, -1)
    neg = [j for j in range(3) if t[j] < 0]
    while len(neg) >= 2:
        negate_pair(neg[0], neg[1])
        neg = neg[2:]
    if neg:
        j = neg[0]
        k = min((i for i in range(3) if i != j), key=lambda i: abs(t[i]))
        if abs(t[k]) < abs(t[j]):
            negate_pair(j, k)
    # order by magnitude, descending (selection sort using swaps)
    for pos in range(3):
        best = max(range(pos, 3), key=lambda i: abs(t[i]))
        if abs(t[best]) > abs(t[pos]) + tol:
            swap(pos, best)
    for j in (0, 1):
        if t[j] < 0:
            negate_pair(j, 2)
    if abs(t[0] - np.pi / 2) < 1e-10 and t[2] < 0:
        shift(0, -1)
        negate_pair(0, 2)
    for j in range(3):
        if abs(t[j]) < tol:
            t[j] = 0.0
    return t, a, b


def kak_decompose(u, tol: float = 1e-10):
    """Canonical angles of a two-qubit unitary, as a length-15 angle vector.

    ``gate_from_angles(kak_decompose(U))`` equals ``U`` up to a global phase;
    the two-qubit angles satisfy ``pi/2 >= theta_x >= theta_y >= |theta_z|``.
    """
    u = np.asarray(u, dtype=DTYPE)
    if u.shape != (4, 4):
        raise ValueError("expected a 4x4 matrix")
    if np.linalg.norm(u.conj().T @ u - I4) > tol:
        raise ValueError("kak_decompose needs a unitary input")
    best = None
    for mix in (0.7548776662, 1.3247179572, -0.5698402910, 2.2055694304):
        thetas, a, b = _raw_kak(u, mix)
        thetas, a, b = _canonicalize(thetas, a, b)
        angles = np.concatenate([thetas, _euler_angles(b[0]), _euler_angles(b[1]),
                                 _euler_angles(a[0]), _euler_angles(a[1])])
        err = _phase_err(gate_from_angles(angles), u)
        if best is None or err < best[0]:
            best = (err, angles)
        if err < 1e-12:
            break
    return best[1]


def _phase_err(a, b):
    ov = np.vdot(b, a)
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.linalg.norm(a - ph * b))


def two_qubit_angles(gate) -> np.ndarray:
    """The (theta_x, theta_y, theta_z) of a gate, from stored angles or by decomposition."""
    if gate.angles is not None:
        return np.asarray(gate.angles[:3])
    return kak_decompose(gate.unitary)[:3]


# ---------------------------------------------------------------------------
# layouts


@dataclass(frozen=True)
class CircuitLayout:
    n: int
    t: int
    coverings: tuple
    kind: str = BRICKWALL
    seed: int | None = None

    def __post_init__(self):
        for cov in self.coverings:
            used = [w for pair in cov for w in pair]
            if len(used) != len(set(used)):
                raise ValueError("a covering uses some qubit twice")
            if any(not 0 <= w < self.n for w in used):
                raise ValueError("pair outside the circuit")

    @property
    def pairs(self):
        """All gate positions in application order."""
        return [pair for cov in self.coverings for pair in cov]

    @property
    def n_gates(self) -> int:
        return sum(len(c) for c in self.coverings)

    def to_dict(self) -> dict:
        return {"n": self.n, "t": self.t, "kind": self.kind, "seed": self.seed,
                "coverings": [[list(p) for p in cov] for cov in self.coverings]}

    @classmethod
    def from_dict(cls, d):
        cov = tuple(tuple(tuple(p) for p in c) for c in d["coverings"])
        return cls(d["n"], d["t"], cov, d["kind"], d.get("seed"))


def brickwall_layout(n: int, t: int) -> CircuitLayout:
    if n < 2 or t < 1:
        raise ValueError("need n >= 2 and t >= 1")
    even = tuple((i, i + 1) for i in range(0, n - 1, 2))
    odd = tuple((i, i + 1) for i in range(1, n - 1, 2))
    return CircuitLayout(n, t, (even, odd) * t, BRICKWALL)


def random_pairing(n: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    return tuple(sorted(tuple(sorted((int(perm[2 * k]), int(perm[2 * k + 1]))))
                        for k in range(n // 2)))


def prpc_layout(n: int, t: int, rng: np.random.Generator, seed: int | None = None) -> CircuitLayout:
    """Parallel random-pair circuit: 2t coverings, each a uniform perfect matching."""
    if n < 2 or n % 2:
        raise ValueError(f"PRPC needs an even number of qubits, got {n}")
    if t < 1:
        raise ValueError("need t >= 1")
    cov = tuple(random_pairing(n, rng) for _ in range(2 * t))
    return CircuitLayout(n, t, cov, PRPC, seed)


def make_layout(kind: str, n: int, t: int, rng: np.random.Generator) -> CircuitLayout:
    if kind == BRICKWALL:
        return brickwall_layout(n, t)
    if kind == PRPC:
        return prpc_layout(n, t, rng)
    raise ValueError(f"unknown circuit kind {kind!r}")


def perfect_matchings(n: int):
    """All perfect matchings of ``range(n)`` in the normalized form of ``random_pairing``."""
    def rec(items):
        if not items:
            yield ()
            return
        first = items[0]
        for k in range(1, len(items)):
            rest = items[1:k] + items[k + 1:]
            for m in rec(rest):
                yield ((first, items[k]),) + m
    return [tuple(sorted(m)) for m in rec(list(range(n)))]


# ---------------------------------------------------------------------------
# circuits


@dataclass
class Gate:
    wires: tuple
    unitary: np.ndarray
    angles: np.ndarray | None = None

    @classmethod
    def from_angles(cls, wires, angles):
        angles = np.array(angles, dtype=float)
        return cls(tuple(wires), gate_from_angles(angles), angles)


@dataclass
class TrotterCircuit:
    layout: CircuitLayout
    gates: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.gates) != self.layout.n_gates:
            raise ValueError("gate count does not match the layout")

    @property
    def n(self) -> int:
        return self.layout.n

    @classmethod
    def identity(cls, layout: CircuitLayout, with_angles: bool = False):
        if with_angles:
            gates = [Gate.from_angles(p, np.zeros(N_ANGLES)) for p in layout.pairs]
        else:
            gates = [Gate(tuple(p), I4.copy()) for p in layout.pairs]
        return cls(layout, gates)

    @classmethod
    def random(cls, layout: CircuitLayout, rng, with_angles: bool = False):
        if with_angles:
            gates = [Gate.from_angles(p, rng.uniform(-np.pi, np.pi, N_ANGLES)) for p in layout.pairs]
        else:
            gates = [Gate(tuple(p), random_unitary(4, rng)) for p in layout.pairs]
        return cls(layout, gates)

    @classmethod
    def near_identity(cls, layout: CircuitLayout, scale: float, rng, with_angles: bool = False):
        """Gates with two-qubit angles uniform in [-scale, scale], no local rotations."""
        gates = []
        for p in layout.pairs:
            a = np.zeros(N_ANGLES)
            if scale > 0:
                a[:3] = rng.uniform(-scale, scale, 3)
            g = Gate.from_angles(p, a)
            if not with_angles:
                g.angles = None
            gates.append(g)
        return cls(layout, gates)

    def unitaries(self):
        return [g.unitary for g in self.gates]


@functools.lru_cache(maxsize=None)
def _pair_order(wires, n):
    """Basis indices listed with ``wires`` as the two most significant qubits.

    Also returns, for the embedded matrix, the gate row and column feeding
    each entry and the mask of entries that act trivially on the other wires.
    """
    p, q = wires
    rest = [k for k in range(n) if k not in (p, q)]
    idx = np.arange(2**n).reshape((2,) * n)
    order = np.transpose(idx, [p, q] + rest).reshape(-1)
    inv = np.argsort(order)
    pair, other = np.divmod(inv, 2 ** (n - 2))
    rows, cols = np.meshgrid(pair, pair, indexing="ij")
    mask = other[:, None] == other[None, :]
    return order, rows, cols, mask


def embed_gate(u, wires, n):
    """The 2^n x 2^n matrix of a 4x4 gate acting on ``wires``."""
    if n == 2 and tuple(wires) == (0, 1):
        return u
    _, rows, cols, mask = _pair_order(tuple(wires), n)
    return np.where(mask, np.asarray(u)[rows, cols], 0)


def reduce_to_pair(e, wires, n):
    """Partial trace of a 2^n x 2^n matrix over all wires except ``wires``."""
    if n == 2 and tuple(wires) == (0, 1):
        return e
    order = _pair_order(tuple(wires), n)[0]
    r = 2 ** (n - 2)
    return np.trace(e[order][:, order].reshape(4, r, 4, r), axis1=1, axis2=3)


MAX_CIRCUIT_QUBITS = 12


def circuit_unitary(c: TrotterCircuit, unitaries=None):
    """Dense 2^n x 2^n unitary of the circuit (gates applied in layout order)."""
    n = c.n
    if n > MAX_CIRCUIT_QUBITS:
        from .models import CapacityError
        raise CapacityError(f"{n} qubits exceeds the dense limit {MAX_CIRCUIT_QUBITS}")
    return circuit_columns(c, 2**n, unitaries)


def _forward(c, ncols, unitaries):
    n = c.n
    us = c.unitaries() if unitaries is None else unitaries
    full = [embed_gate(u, g.wires, n) for g, u in zip(c.gates, us)]
    cols = [np.eye(2**n, ncols, dtype=DTYPE)]
    for f in full:
        cols.append(f @ cols[-1])
    return full, cols


def circuit_columns(c: TrotterCircuit, ncols: int, unitaries=None):
    """First ``ncols`` columns of the circuit unitary (ancillas fixed to |0>)."""
    return _forward(c, ncols, unitaries)[1][-1]


def circuit_gate_environments(c: TrotterCircuit, ncols: int, env, unitaries=None, forward=None):
    """Chain a tensor environment ``dE/d conj(V)`` down to each gate.

    ``V = C[:, :ncols]`` with ``C`` the circuit unitary. Returns one 4x4
    ``dE/d conj(G)`` per gate.
    """
    full, cols = _forward(c, ncols, unitaries) if forward is None else forward
    z = np.asarray(env, dtype=DTYPE)
    out = [None] * len(full)
    for k in range(len(full) - 1, -1, -1):
        wires = c.gates[k].wires
        out[k] = reduce_to_pair(z @ cols[k].conj().T, wires, c.n)
        z = full[k].conj().T @ z
    return out


DISENTANGLER = "disentangler"
ISOMETRY = "isometry"


def assemble_tensor(c: TrotterCircuit, role: str, q: int, q_out: int | None = None,
                    unitaries=None):
    """Tensor realized by a circuit on ``2q`` wires.

    A disentangler is the full unitary. An isometry maps ``q_out`` (default
    ``q``) qubits to ``2q``: its ``2q - q_out`` ancillas are the lowest-index
    wires, prepared in |0>, so ``V |psi> = C (|0...0> x |psi>)``.
    """
    if c.n != 2 * q:
        raise ValueError(f"circuit has {c.n} wires, expected {2 * q}")
    if role == DISENTANGLER:
        return circuit_columns(c, 2**c.n, unitaries)
    if role == ISOMETRY:
        q_out = q if q_out is None else q_out
        if not 0 < q_out <= 2 * q:
            raise ValueError("isometry output must have between 1 and 2q qubits")
        return circuit_columns(c, 2**q_out, unitaries)
    raise ValueError(f"unknown role {role!r}")


def average_abs_angle(gates) -> float:
    """Mean of |theta_x|, |theta_y|, |theta_z| over the given gates."""
    gates = list(gates)
    if not gates:
        return 0.0
    return float(np.mean([np.abs(two_qubit_angles(g)) for g in gates]))
