"""L-BFGS on products of unitary/Stiefel manifolds and on flat angle vectors.

Points are lists of stacked arrays ("groups"): all 4x4 gates form one
(G, 4, 4) group, full tensors of equal shape share a group, and the angle
vector of the Euclidean mode is a single real 1-D group. The metric is
``<A, B> = Re Tr[A^dag B]`` summed over groups.

Complex derivatives follow the Wirtinger convention used by ``contraction``:
an environment is ``Gamma = de/d conj(X)`` and ``de = 2 Re Tr[Gamma^dag dX]``,
so the Euclidean gradient under the metric above is ``2 Gamma``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import circuits as C
from .contraction import _term, evaluate
from .network import FULL_TENSOR, TROTTER_ANGLES, TROTTER_UNITARY, TMeraState
from .tensor import DTYPE

ENERGY = "energy"
ANGLE_PENALTY = "angle-penalty"
FROBENIUS_PENALTY = "frobenius-penalty"
OBJECTIVES = (ENERGY, ANGLE_PENALTY, FROBENIUS_PENALTY)

CONVERGED = "converged"
MAX_ITER = "max-iter"
LINE_SEARCH_FAILURE = "line-search-failure"


class ManifoldError(ValueError):
    """A point is too far from its constraint set to project onto a tangent space."""


@dataclass(frozen=True)
class OptimizerConfig:
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_iter: int = 10_000
    gtol: float = 1e-7
    max_ls_evals: int = 25
    repolar_tol: float = 1e-12

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.memory < 0 or self.max_iter < 0 or self.gtol < 0:
            raise ValueError("memory, max_iter and gtol must be non-negative")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Objective:
    kind: str = ENERGY
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.kind!r}; choose from {OBJECTIVES}")
        if not self.kappa >= 0:
            raise ValueError("kappa must be non-negative")

    @property
    def penalized(self) -> bool:
        return self.kind != ENERGY and self.kappa > 0

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# manifolds


def _inner(a, b) -> float:
    return float(sum(np.real(np.vdot(x, y)) for x, y in zip(a, b)))


def _axpy(alpha, x, y):
    return [alpha * xi + yi for xi, yi in zip(x, y)]


def _scale(alpha, x):
    return [alpha * xi for xi in x]


def _dag(x):
    return np.swapaxes(x, -1, -2).conj()


def _batch_polar(m):
    u, _, vh = np.linalg.svd(m, full_matrices=False)
    return u @ vh


def constraint_residual(x) -> float:
    """Largest ``||X^dag X - 1||_F`` over all blocks of a manifold point."""
    worst = 0.0
    for g in x:
        eye = np.eye(g.shape[-1])
        worst = max(worst, float(np.max(np.linalg.norm(_dag(g) @ g - eye, axis=(-2, -1)))))
    return worst


class Euclidean:
    """Flat real parameter space (angle vectors)."""

    def project(self, x, z):
        return z

    def retract(self, x, xi, s):
        return _axpy(s, xi, x)

    def transport(self, x, v):
        return v

    def repolarize(self, x, tol):
        return x


class Stiefel:
    """Product of Stiefel manifolds ``X^dag X = 1``; square blocks are unitary groups."""

    def project(self, x, z):
        """Orthogonal projection ``Z - X sym(X^dag Z)`` onto the tangent space at ``x``."""
        out = []
        for xg, zg in zip(x, z):
            a = _dag(xg) @ zg
            out.append(zg - xg @ (0.5 * (a + _dag(a))))
        return out

    def retract(self, x, xi, s):
        """Polar retraction ``polar(X + s xi)``."""
        return [_batch_polar(xg + s * xig) for xg, xig in zip(x, xi)]

    def transport(self, x, v):
        return self.project(x, v)

    def repolarize(self, x, tol):
        return [_batch_polar(g) if constraint_residual([g]) > tol else g for g in x]


def project_to_tangent(env, u, tol: float = 1e-8):
    """Riemannian gradient of ``e`` at ``u`` from its environment ``env = de/d conj(u)``.

    Equals the tangent projection of the Euclidean gradient ``2 env``; for
    square ``u`` it reduces to ``env - u env^dag u``.
    """
    u = np.asarray(u, dtype=DTYPE)
    res = constraint_residual([u])
    if res > tol:
        raise ManifoldError(f"point violates its constraint by {res:.3g}; re-isometrize first")
    return Stiefel().project([u], [2.0 * np.asarray(env, dtype=DTYPE)])[0]


def retract(u, xi, s: float):
    return Stiefel().retract([np.asarray(u, dtype=DTYPE)], [np.asarray(xi, dtype=DTYPE)], s)[0]


# ---------------------------------------------------------------------------
# L-BFGS core


@dataclass
class OptimizeResult:
    x: list
    f: float
    grad_norm: float
    iterations: int
    evaluations: int
    flag: str
    trace: list

    @property
    def converged(self) -> bool:
        return self.flag == CONVERGED


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic through two points with slopes; None if ill-defined."""
    d1 = da + db - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = db - da + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def _line_search(phi, f0, d0, a1, cfg: OptimizerConfig):
    """Strong-Wolfe search. Returns (alpha, payload, strong) or None.

    ``phi(a)`` returns ``(f, slope, payload)``. If no strong-Wolfe point is
    found, the best trial meeting sufficient decrease is returned with
    ``strong=False``.
    """
    evals = [0]
    best = [None]

    def call(a):
        evals[0] += 1
        f, d, pay = phi(a)
        if not np.isfinite(f):
            f, d = math.inf, math.inf
        if f <= f0 + cfg.c1 * a * d0 and f < f0 and (best[0] is None or f < best[0][1]):
            best[0] = (a, f, pay)
        return f, d, pay

    def fallback():
        if best[0] is None:
            return None
        return best[0][0], best[0][2], False

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        while evals[0] < cfg.max_ls_evals:
            a = None
            if np.isfinite(fhi) and np.isfinite(dhi):
                a = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * (right - left)
            if a is None or not left + margin <= a <= right - margin:
                a = 0.5 * (lo + hi)
            if right - left < 1e-16 * max(1.0, right):
                break
            f, d, pay = call(a)
            if f > f0 + cfg.c1 * a * d0 or f >= flo:
                hi, fhi, dhi = a, f, d
            else:
                if abs(d) <= -cfg.c2 * d0:
                    return a, pay, True
                if d * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, f, d
        return fallback()

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = a1
    first = True
    while evals[0] < cfg.max_ls_evals:
        f, d, pay = call(a)
        if f > f0 + cfg.c1 * a * d0 or (not first and f >= f_prev):
            return zoom(a_prev, f_prev, d_prev, a, f, d)
        if abs(d) <= -cfg.c2 * d0:
            return a, pay, True
        if d >= 0:
            return zoom(a, f, d, a_prev, f_prev, d_prev)
        a_prev, f_prev, d_prev = a, f, d
        a = 2.0 * a
        first = False
    return fallback()


def lbfgs(fun, x0, manifold, cfg: OptimizerConfig = OptimizerConfig(), callback=None):
    """Minimize ``fun`` over ``manifold`` starting at ``x0``.

    ``fun(x)`` returns ``(f, egrad, info)`` with ``egrad`` the Euclidean
    gradient (same structure as ``x``) and ``info`` a dict copied into the
    trace. Directions live in the tangent space of the current point;
    stored curvature pairs are carried along by projection.
    """
    x = manifold.repolarize([np.array(g) for g in x0], cfg.repolar_tol)
    n_evals = 1
    f, eg, info = fun(x)
    g = manifold.project(x, eg)
    gnorm = math.sqrt(_inner(g, g))
    trace = [dict(iteration=0, objective=f, grad_norm=gnorm, step=0.0, **info)]
    if callback:
        callback(trace[-1])
    s_hist, y_hist = [], []
    failures = 0
    flag = MAX_ITER
    it = 0
    while True:
        if gnorm <= cfg.gtol:
            flag = CONVERGED
            break
        if it >= cfg.max_iter:
            flag = MAX_ITER
            break
        # two-loop recursion
        q = g
        alphas = []
        for s, y in reversed(list(zip(s_hist, y_hist))):
            rho = 1.0 / _inner(y, s)
            a = rho * _inner(s, q)
            alphas.append((a, rho))
            q = _axpy(-a, y, q)
        gamma = _inner(s_hist[-1], y_hist[-1]) / _inner(y_hist[-1], y_hist[-1]) if s_hist else 1.0
        r = _scale(gamma, q)
        for (s, y), (a, rho) in zip(zip(s_hist, y_hist), reversed(alphas)):
            b = rho * _inner(y, r)
            r = _axpy(a - b, s, r)
        d = manifold.project(x, _scale(-1.0, r))
        slope = _inner(g, d)
        if not slope < 0:
            s_hist, y_hist = [], []
            d = _scale(-1.0, g)
            slope = -gnorm * gnorm
        a1 = 1.0 if s_hist else min(1.0, 1.0 / gnorm)

        def phi(a, x=x, d=d):
            xn = manifold.retract(x, d, a)
            fn, egn, infn = fun(xn)
            gn = manifold.project(xn, egn)
            dn = manifold.transport(xn, d)
            return fn, _inner(gn, dn), (xn, fn, gn, dn, infn)

        before = n_evals
        counter = [0]

        def counted(a):
            counter[0] += 1
            return phi(a)

        res = _line_search(counted, f, slope, a1, cfg)
        n_evals = before + counter[0]
        if res is None:
            # restart from steepest descent; a second failure in a row stops
            failures += 1
            if failures >= 2:
                flag = LINE_SEARCH_FAILURE
                break
            s_hist, y_hist = [], []
            continue
        failures = 0
        a, (xn, fn, gn, dn, infn), strong = res
        xn = manifold.repolarize(xn, cfg.repolar_tol)
        s_new = _scale(a, dn)
        y_new = _axpy(-1.0, manifold.transport(xn, g), gn)
        s_hist = [manifold.transport(xn, s) for s in s_hist]
        y_hist = [manifold.transport(xn, y) for y in y_hist]
        sy = _inner(s_new, y_new)
        if sy > 1e-12 * math.sqrt(_inner(s_new, s_new) * _inner(y_new, y_new)):
            s_hist.append(s_new)
            y_hist.append(y_new)
        # keep only pairs that still satisfy the curvature condition after transport
        keep = [(s, y) for s, y in zip(s_hist, y_hist) if _inner(s, y) > 0][-cfg.memory:] \
            if cfg.memory else []
        s_hist = [s for s, _ in keep]
        y_hist = [y for _, y in keep]
        x, f, g = xn, fn, gn
        gnorm = math.sqrt(_inner(g, g))
        it += 1
        trace.append(dict(iteration=it, objective=f, grad_norm=gnorm, step=a, **infn))
        if callback:
            callback(trace[-1])
    return OptimizeResult(x, f, gnorm, it, n_evals, flag, trace)


# ---------------------------------------------------------------------------
# TMERA problems


class _Slots:
    """Where each variational object of a state lives, grouped by shape."""

    def __init__(self, state: TMeraState, angles: bool):
        self.state = state
        self.angles = angles
        self.entries = []   # (tau, role, gate index or None)
        for tau, layer in enumerate(state.layers):
            for role in ("disentangler", "isometry"):
                if role == "disentangler" and layer.frozen:
                    continue
                obj = getattr(layer, role)
                if isinstance(obj, C.TrotterCircuit):
                    self.entries.extend((tau, role, k) for k in range(len(obj.gates)))
                else:
                    self.entries.append((tau, role, None))
        self.groups = {}    # shape -> list of entry indices
        for i, (tau, role, k) in enumerate(self.entries):
            self.groups.setdefault(self._shape(tau, role, k), []).append(i)
        self.keys = list(self.groups)

    def _obj(self, tau, role, k):
        obj = getattr(self.state.layers[tau], role)
        return obj.gates[k] if k is not None else obj

    def _shape(self, tau, role, k):
        if k is not None:
            return (4, 4)
        return self._obj(tau, role, k).shape

    @property
    def n_gates(self):
        return sum(1 for e in self.entries if e[2] is not None)

    def unitaries(self):
        return [np.stack([self._value(self.entries[i]) for i in self.groups[key]])
                for key in self.keys]

    def _value(self, entry):
        obj = self._obj(*entry)
        return obj.unitary if entry[2] is not None else obj

    def angle_vector(self):
        rows = []
        for tau, role, k in self.entries:
            g = self._obj(tau, role, k)
            rows.append(g.angles if g.angles is not None else C.kak_decompose(g.unitary))
        return np.concatenate(rows) if rows else np.zeros(0)

    def values(self, per_entry):
        """Override list for ``evaluate`` from one value per entry."""
        out = []
        for tau, layer in enumerate(self.state.layers):
            out.append([None, None])
        for (tau, role, k), v in zip(self.entries, per_entry):
            slot = 0 if role == "disentangler" else 1
            if k is None:
                out[tau][slot] = v
            else:
                if out[tau][slot] is None:
                    circ = getattr(self.state.layers[tau], role)
                    out[tau][slot] = [g.unitary for g in circ.gates]
                out[tau][slot][k] = v
        return [tuple(v) for v in out]

    def split(self, groups):
        per_entry = [None] * len(self.entries)
        for key, arr in zip(self.keys, groups):
            for row, i in enumerate(self.groups[key]):
                per_entry[i] = arr[row]
        return per_entry

    def join(self, per_entry):
        return [np.stack([per_entry[i] for i in self.groups[key]]) for key in self.keys]

    def env_per_entry(self, ev):
        out = []
        for tau, role, k in self.entries:
            envs = ev.gate_envs[tau][0 if role == "disentangler" else 1]
            out.append(envs[k] if k is not None else envs)
        return out

    def write(self, per_entry, angle_rows=None) -> TMeraState:
        new = self.state.copy()
        for n, ((tau, role, k), v) in enumerate(zip(self.entries, per_entry)):
            layer = new.layers[tau]
            if k is None:
                setattr(layer, role, np.array(v))
            else:
                g = getattr(layer, role).gates[k]
                g.unitary = np.array(v)
                g.angles = None if angle_rows is None else np.array(angle_rows[n])
        return new


def _check_objective(state: TMeraState, objective: Objective, euclidean: bool):
    par = state.config.parametrization
    if euclidean and par != TROTTER_ANGLES:
        raise ValueError(f"Euclidean L-BFGS needs the {TROTTER_ANGLES!r} parametrization, got {par!r}")
    if not euclidean and par not in (TROTTER_UNITARY, FULL_TENSOR):
        raise ValueError(f"Riemannian L-BFGS needs {TROTTER_UNITARY!r} or {FULL_TENSOR!r}, got {par!r}")
    if objective.kind == ANGLE_PENALTY and not euclidean:
        raise ValueError("the angle penalty needs angle parameters; use the Frobenius penalty "
                         "with Riemannian L-BFGS")
    if objective.kind == FROBENIUS_PENALTY and par == FULL_TENSOR:
        raise ValueError("the Frobenius penalty acts on Trotter gates, not on full tensors")


def _frobenius(us, kappa):
    """(kappa/2) sum ||U - 1||^2 and its environment (kappa/2)(U - 1) for a (G, 4, 4) stack."""
    diff = us - C.I4
    return 0.5 * kappa * float(np.sum(np.abs(diff) ** 2)), 0.5 * kappa * diff


def angle_penalty(angle_rows, kappa: float) -> float:
    """(kappa/2) sum of squared two-qubit rotation angles."""
    a = np.asarray(angle_rows, dtype=float).reshape(-1, C.N_ANGLES)
    return 0.5 * kappa * float(np.sum(a[:, :3] ** 2))


def objective_value(state: TMeraState, model_or_term, objective: Objective = Objective()):
    """Return ``(f, e, penalty)`` for the state's current parameters."""
    e = evaluate(state, model_or_term, gradient=False).energy
    if not objective.penalized:
        return e, e, 0.0
    gates = state.gates()
    if objective.kind == ANGLE_PENALTY:
        rows = [g.angles if g.angles is not None else C.kak_decompose(g.unitary) for g in gates]
        pen = angle_penalty(rows, objective.kappa) if rows else 0.0
    else:
        us = np.stack([g.unitary for g in gates]) if gates else np.zeros((0, 4, 4))
        pen = _frobenius(us, objective.kappa)[0]
    return e + pen, e, pen


def _finish(slots, res, write_args, objective):
    state = slots.write(*write_args)
    summary = dict(flag=res.flag, iterations=res.iterations, evaluations=res.evaluations,
                   objective=res.f, grad_norm=res.grad_norm)
    return state, res.trace, summary


def _riemannian_problem(state, h, objective):
    slots = _Slots(state, angles=False)
    gate_keys = [i for i, key in enumerate(slots.keys) if key == (4, 4)]

    def fun(x):
        ev = evaluate(state, h, values=slots.values(slots.split(x)))
        envs = slots.join(slots.env_per_entry(ev))
        pen = 0.0
        if objective.kind == FROBENIUS_PENALTY and objective.kappa > 0:
            for i in gate_keys:
                p, gp = _frobenius(x[i], objective.kappa)
                pen += p
                envs[i] = envs[i] + gp
        return ev.energy + pen, _scale(2.0, envs), dict(energy=ev.energy, penalty=pen)

    return slots, fun, (slots.unitaries() if slots.entries else []), Stiefel()


def _euclidean_problem(state, h, objective):
    slots = _Slots(state, angles=True)
    n = len(slots.entries)

    def fun(x):
        rows = x[0].reshape(n, C.N_ANGLES)
        us, dus = C.batch_gate_derivatives(rows)
        ev = evaluate(state, h, values=slots.values(list(us)))
        env = np.stack(slots.env_per_entry(ev))
        pen = 0.0
        grad_pen = np.zeros_like(rows)
        if objective.kappa > 0 and objective.kind == ANGLE_PENALTY:
            pen = angle_penalty(rows, objective.kappa)
            grad_pen[:, :3] = objective.kappa * rows[:, :3]
        elif objective.kappa > 0 and objective.kind == FROBENIUS_PENALTY:
            pen, gp = _frobenius(us, objective.kappa)
            env = env + gp
        grad = 2.0 * np.real(np.einsum("gij,gkij->gk", env.conj(), dus)) + grad_pen
        return ev.energy + pen, [grad.reshape(-1)], dict(energy=ev.energy, penalty=pen)

    return slots, fun, ([slots.angle_vector()] if n else []), Euclidean()


def _problem(state, h, objective):
    euclidean = state.config.parametrization == TROTTER_ANGLES
    _check_objective(state, objective, euclidean)
    return (_euclidean_problem if euclidean else _riemannian_problem)(state, h, objective)


def _trivial(state, h, objective):
    f, e, pen = objective_value(state, h, objective)
    return state.copy(), [dict(iteration=0, objective=f, grad_norm=0.0, step=0.0,
                               energy=e, penalty=pen)], \
        dict(flag=CONVERGED, iterations=0, evaluations=1, objective=f, grad_norm=0.0)


def objective_gradient(state: TMeraState, model_or_term, objective: Objective = Objective()):
    """The objective and the gradient the optimizer follows, per variational object.

    Returns ``(f, entries, grads)`` with ``entries`` as ``(layer, role,
    gate_index)``. Angle states give 15-vectors of partial derivatives; the
    others give Riemannian gradients (tangent vectors), so the directional
    derivative along a tangent ``xi`` is ``Re <grad, xi>``.
    """
    h = _term(model_or_term)
    slots, fun, x0, manifold = _problem(state, h, objective)
    if not slots.entries:
        return objective_value(state, h, objective)[0], [], []
    f, eg, _ = fun(x0)
    g = manifold.project(x0, eg)
    if slots.angles:
        return f, list(slots.entries), list(g[0].reshape(-1, C.N_ANGLES))
    return f, list(slots.entries), slots.split(g)


def riemannian_lbfgs(state: TMeraState, model_or_term, objective: Objective = Objective(),
                     cfg: OptimizerConfig = OptimizerConfig(), rng=None, callback=None):
    """Optimize gates (trotter-unitary) or full tensors on their unitary/Stiefel manifolds.

    Returns ``(state*, trace, summary)``; ``summary["flag"]`` is one of
    ``converged``, ``max-iter``, ``line-search-failure``. ``rng`` is accepted
    for interface symmetry; the method is deterministic.
    """
    _check_objective(state, objective, euclidean=False)
    h = _term(model_or_term)
    slots, fun, x0, manifold = _riemannian_problem(state, h, objective)
    if not slots.entries:
        return _trivial(state, h, objective)
    res = lbfgs(fun, x0, manifold, cfg, callback)
    return _finish(slots, res, (slots.split(res.x),), objective)


def euclidean_lbfgs(state: TMeraState, model_or_term, objective: Objective = Objective(),
                    cfg: OptimizerConfig = OptimizerConfig(), callback=None):
    """Plain L-BFGS on the flat vector of all gate angles (15 per unfrozen gate)."""
    _check_objective(state, objective, euclidean=True)
    h = _term(model_or_term)
    slots, fun, x0, manifold = _euclidean_problem(state, h, objective)
    if not slots.entries:
        return _trivial(state, h, objective)
    res = lbfgs(fun, x0, manifold, cfg, callback)
    rows = res.x[0].reshape(-1, C.N_ANGLES)
    us, _ = C.batch_gate_derivatives(rows)
    return _finish(slots, res, (list(us), list(rows)), objective)


def optimize(state: TMeraState, model_or_term, objective: Objective = Objective(),
             cfg: OptimizerConfig = OptimizerConfig(), callback=None):
    """Dispatch on the parametrization: angles use Euclidean L-BFGS, the rest Riemannian."""
    if state.config.parametrization == TROTTER_ANGLES:
        return euclidean_lbfgs(state, model_or_term, objective, cfg, callback)
    return riemannian_lbfgs(state, model_or_term, objective, cfg, callback=callback)


def gradient_vector_length(state: TMeraState) -> int:
    """Number of real parameters the optimizer moves (frozen disentanglers excluded)."""
    slots = _Slots(state, angles=state.config.parametrization == TROTTER_ANGLES)
    if slots.angles:
        return C.N_ANGLES * len(slots.entries)
    total = 0
    for tau, role, k in slots.entries:
        shape = (4, 4) if k is not None else slots._obj(tau, role, k).shape
        d_in, d_out = shape
        # real dimension of the Stiefel manifold St(d_in, d_out)
        total += 2 * d_in * d_out - d_out * d_out
    return total
