"""Critical spin-chain benchmarks: local terms, reference energies, exact diagonalization.

Single-site basis states are ordered by descending S^z, so for spin 1 the
basis is (|+1>, |0>, |-1>). Chains are periodic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.sparse as sp
import scipy.sparse.linalg

from .tensor import DTYPE

FAMILIES = ("xxz", "blbq", "blbqbc", "xxx32")

_SPIN = {"xxz": 0.5, "blbq": 1.0, "blbqbc": 1.5, "xxx32": 1.5}

# Spin-3/2 XXX is known only numerically, to about 1e-5.
XXX32_ENERGY = -2.82833


class NoReferenceError(ValueError):
    """No thermodynamic-limit energy is available for these parameters."""


class CapacityError(ValueError):
    """The requested dense object would not fit in the allowed memory."""


@dataclass(frozen=True)
class ModelSpec:
    family: str
    delta: float = 1.0
    theta: float = -math.pi / 4
    spin: float = field(init=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}; choose from {FAMILIES}")
        object.__setattr__(self, "spin", _SPIN[self.family])

    @property
    def d(self) -> int:
        return int(round(2 * self.spin + 1))

    @property
    def qubits_per_site(self) -> int:
        return int(math.ceil(math.log2(self.d)))

    @property
    def central_charge(self) -> float | None:
        if self.family == "xxz":
            return 1.0 if abs(self.delta) <= 1 else None
        if self.family == "blbq":
            if math.isclose(self.theta, -math.pi / 4):
                return 1.5
            if math.isclose(self.theta, math.pi / 4):
                return 2.0
            return None
        if self.family == "blbqbc":
            return 9 / 5
        return 1.0

    @property
    def parameter(self) -> float:
        """The scannable parameter of the family (delta for XXZ, theta for BLBQ)."""
        return self.theta if self.family == "blbq" else self.delta

    def with_parameter(self, value: float) -> "ModelSpec":
        if self.family == "xxz":
            return ModelSpec("xxz", delta=float(value))
        if self.family == "blbq":
            return ModelSpec("blbq", theta=float(value))
        raise ValueError(f"family {self.family!r} has no scannable parameter")

    def label(self) -> str:
        if self.family == "xxz":
            return f"xxz(delta={self.delta:g})"
        if self.family == "blbq":
            return f"blbq(theta={self.theta:g})"
        return self.family

    def to_dict(self) -> dict:
        out = {"family": self.family}
        if self.family == "xxz":
            out["delta"] = self.delta
        elif self.family == "blbq":
            out["theta"] = self.theta
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        kw = {k: float(d[k]) for k in ("delta", "theta") if k in d}
        return cls(d["family"], **kw)


def xxz(delta: float = 1.0) -> ModelSpec:
    return ModelSpec("xxz", delta=delta)


def spin_matrices(s: float):
    """Return (Sx, Sy, Sz) for spin ``s`` in the descending-S^z basis."""
    if s not in (0.5, 1.0, 1.5):
        raise ValueError(f"unsupported spin {s}")
    d = int(round(2 * s + 1))
    m = s - np.arange(d)
    sz = np.diag(m).astype(DTYPE)
    # <m+1|S+|m> = sqrt(s(s+1) - m(m+1))
    sp_ = np.zeros((d, d), dtype=DTYPE)
    for k in range(1, d):
        mk = m[k]
        sp_[k - 1, k] = math.sqrt(s * (s + 1) - mk * (mk + 1))
    sx = (sp_ + sp_.conj().T) / 2
    sy = (sp_ - sp_.conj().T) / 2j
    return sx, sy, sz


def _heisenberg(s: float):
    sx, sy, sz = spin_matrices(s)
    return np.kron(sx, sx) + np.kron(sy, sy) + np.kron(sz, sz)


def build_term(model: ModelSpec):
    """The nearest-neighbour term h acting on sites (i, i+1), as a d^2 x d^2 matrix."""
    if model.family == "xxz":
        sx, sy, sz = spin_matrices(0.5)
        return np.kron(sx, sx) + np.kron(sy, sy) + model.delta * np.kron(sz, sz)
    if model.family == "blbq":
        ss = _heisenberg(1.0)
        return math.cos(model.theta) * ss + math.sin(model.theta) * (ss @ ss)
    if model.family == "blbqbc":
        ss = _heisenberg(1.5)
        ss2 = ss @ ss
        return -ss / 16 + ss2 / 54 + (ss2 @ ss) / 27
    return _heisenberg(1.5)


def _yang_yang_integral(delta: float) -> float:
    gamma = math.acos(delta)
    one_minus = 1.0 - delta

    def integrand(x):
        # cosh(2 x gamma) - delta, written to avoid cancellation near delta = 1
        denom = 2.0 * math.sinh(x * gamma) ** 2 + one_minus
        return (1.0 - delta * delta) / (2.0 * math.cosh(math.pi * x) * denom)

    # even integrand; beyond |x| = 40 it is below 1e-50
    val, _ = scipy.integrate.quad(integrand, 0.0, 40.0, epsabs=1e-12, epsrel=1e-12, limit=400)
    return 2.0 * val


def reference_energy(model: ModelSpec) -> float:
    """Ground-state energy per site in the thermodynamic limit."""
    if model.family == "xxz":
        delta = model.delta
        if not -1.0 <= delta <= 1.0:
            raise NoReferenceError(f"no reference energy for XXZ with |delta| > 1 (delta={delta})")
        if delta == 1.0:
            return 0.25 - math.log(2)
        if delta == -1.0:
            return -0.25
        return delta / 4 - _yang_yang_integral(delta)
    if model.family == "blbq":
        if math.isclose(model.theta, -math.pi / 4, abs_tol=1e-14):
            return -2.0 * math.sqrt(2.0)
        if math.isclose(model.theta, math.pi / 4, abs_tol=1e-14):
            return -(math.sqrt(2) / 2) * (math.log(3) + math.pi / (3 * math.sqrt(3)) - 2)
        raise NoReferenceError(f"no reference energy for BLBQ at theta={model.theta}")
    if model.family == "blbqbc":
        return -math.log(2) - 1 / 8
    return XXX32_ENERGY


def try_reference_energy(model: ModelSpec) -> float | None:
    try:
        return reference_energy(model)
    except NoReferenceError:
        return None


def critical_exponent_eta(delta: float) -> tuple[float, float]:
    """Transverse exponent eta of the XXZ chain and the longitudinal exponent 1/eta."""
    if not -1.0 <= delta <= 1.0:
        raise ValueError(f"eta is defined for |delta| <= 1, got {delta}")
    eta = 1.0 - math.acos(delta) / math.pi
    return eta, (1.0 / eta if eta > 0 else math.inf)


def embed_to_qubits(term, penalty: float = 0.0):
    """Embed a two-site term on ceil(log2 d) qubits per site.

    For d = 3 the fourth basis state of each site is unphysical: the term is
    zero on it, plus ``penalty`` per unphysical site (split over the two
    bonds touching that site). ``d`` is inferred from the matrix shape.
    """
    term = np.asarray(term, dtype=DTYPE)
    d = int(round(math.sqrt(term.shape[0])))
    if d * d != term.shape[0]:
        raise ValueError("term must be d^2 x d^2")
    if d in (2, 4):
        return term.copy()
    if d != 3:
        raise ValueError(f"unsupported local dimension {d}")
    out = np.zeros((4, 4, 4, 4), dtype=DTYPE)
    out[:3, :3, :3, :3] = term.reshape(3, 3, 3, 3)
    out = out.reshape(16, 16)
    if penalty:
        q = np.diag([0.0, 0.0, 0.0, 1.0])
        eye = np.eye(4)
        out = out + 0.5 * penalty * (np.kron(q, eye) + np.kron(eye, q))
    return out


def qubit_term(model: ModelSpec):
    """Embedded term used by the variational engine.

    Zero padding is enough when the target energy is negative. At positive
    target energies (the ULS point) the unphysical level would be favoured,
    so it is lifted by a penalty larger than the spectral width of h.
    """
    h = build_term(model)
    if model.d != 3:
        return embed_to_qubits(h)
    ref = try_reference_energy(model)
    if ref is not None and ref < 0:
        return embed_to_qubits(h)
    w = np.linalg.eigvalsh(h)
    return embed_to_qubits(h, penalty=4.0 * (w[-1] - w[0]) + 1.0)


def chain_hamiltonian(term, d: int, n: int) -> sp.csr_matrix:
    """Sparse periodic-chain Hamiltonian sum_i h_{i,i+1} on ``n`` sites.

    For ``n = 2`` the ring has a single bond.
    """
    if n < 2:
        raise ValueError("need at least two sites")
    term = sp.csr_matrix(np.asarray(term))
    dim = d**n
    h = sp.csr_matrix((dim, dim), dtype=DTYPE)
    for i in range(n - 1):
        h = h + sp.kron(sp.kron(sp.identity(d**i), term), sp.identity(d ** (n - i - 2)), format="csr")
    if n > 2:
        # bond (n-1, 0): conjugate the bond (0, 1) term by a cyclic shift
        shift = _cyclic_shift(d, n)
        first = sp.kron(term, sp.identity(d ** (n - 2)), format="csr")
        h = h + shift.T @ first @ shift
    return h.tocsr()


def _cyclic_shift(d, n):
    """Permutation P with (P psi)[s_{n-1}, s_0, ..., s_{n-2}] = psi[s_0, ..., s_{n-1}]."""
    idx = np.arange(d**n).reshape((d,) * n)
    perm = np.moveaxis(idx, -1, 0).reshape(-1)
    data = np.ones(d**n)
    return sp.csr_matrix((data, (np.arange(d**n), perm)), shape=(d**n, d**n))


MAX_ED_DIM = 2**20


def exact_ground_energy(model: ModelSpec, n: int, term=None) -> float:
    """Lowest eigenvalue per site of the periodic chain of ``n`` sites."""
    if term is None:
        term = build_term(model)
        d = model.d
    else:
        d = int(round(math.sqrt(np.asarray(term).shape[0])))
    dim = d**n
    if dim > MAX_ED_DIM:
        raise CapacityError(f"Hilbert space dimension {dim} exceeds {MAX_ED_DIM}")
    h = chain_hamiltonian(term, d, n)
    if dim <= 1024:
        e0 = np.linalg.eigvalsh(h.toarray())[0]
    else:
        e0 = scipy.sparse.linalg.eigsh(h, k=1, which="SA", tol=1e-12)[0][0]
    return float(e0.real) / n
