"""Cost of one optimization step: classical full MERA versus the TMERA quantum eigensolver.

All costs are dimensionless operation counts with constant prefactors dropped.
Logarithms are natural.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# exponent r of the classical O(chi^r) contraction cost per MERA variant
R_TABLE = {
    "modified-binary": 7,
    "ternary": 8,
    "binary": 9,
    "2d-3x3": 16,
    "2d-2x2": 28,
}


def _exponent(r) -> int:
    if isinstance(r, str):
        if r not in R_TABLE:
            raise ValueError(f"unknown MERA variant {r!r}; choose from {sorted(R_TABLE)}")
        return R_TABLE[r]
    if r not in R_TABLE.values():
        raise ValueError(f"r={r} is not a tabulated exponent {sorted(set(R_TABLE.values()))}")
    return int(r)


def classical_cost(chi: int, r=7) -> float:
    """chi^r for a tabulated exponent (or variant name)."""
    if chi < 2:
        raise ValueError("chi must be at least 2")
    return float(chi) ** _exponent(r)


def _check_positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be positive, got {v}")


def quantum_cost_sampling(q, t, T, eps) -> float:
    """q t^2 T^2 / eps^2: plain sampling of energies and gradients."""
    _check_positive(q=q, t=t, T=T, eps=eps)
    return q * t * t * T * T / (eps * eps)


def quantum_cost_qae(q, t, T, eps) -> float:
    """q t^2 T^2 ln(1/eps) / eps: with amplitude estimation."""
    _check_positive(q=q, t=t, T=T, eps=eps)
    if eps >= 1:
        raise ValueError("amplitude-estimation cost needs eps < 1")
    return q * t * t * T * T * math.log(1.0 / eps) / eps


def quantum_cost_metric(q, t, eps) -> float:
    """q t^2 ln(1/eps) / eps: the amplitude-estimation cost at fixed T, without the T^2."""
    _check_positive(q=q, t=t, eps=eps)
    if eps >= 1:
        raise ValueError("amplitude-estimation cost needs eps < 1")
    return q * t * t * math.log(1.0 / eps) / eps


@dataclass(frozen=True)
class CostRow:
    q: int
    t: int
    T: int
    eps: float
    chi: int
    cost_classical: float
    cost_quantum_sampling: float
    cost_quantum_qae: float
    cost_quantum_metric: float


def cost_row(q, t, T, eps, r=7) -> CostRow:
    chi = 2**q
    return CostRow(q, t, T, eps, chi, classical_cost(chi, r), quantum_cost_sampling(q, t, T, eps),
                   quantum_cost_qae(q, t, T, eps), quantum_cost_metric(q, t, eps))


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float   # beta in y = prefactor * x^(-beta)
    prefactor: float
    residual: float   # rms residual of log y


def fit_power_law(x, y) -> PowerLawFit:
    """Least-squares fit of ``y = A x^(-beta)`` in log-log space."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    if x.size < 3:
        raise ValueError("need at least three points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fits need positive data")
    lx, ly = np.log(x), np.log(y)
    a = np.vstack([lx, np.ones_like(lx)]).T
    (slope, icpt), *_ = np.linalg.lstsq(a, ly, rcond=None)
    res = float(np.sqrt(np.mean((a @ np.array([slope, icpt]) - ly) ** 2)))
    return PowerLawFit(float(-slope), float(np.exp(icpt)), res)
