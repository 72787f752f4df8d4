"""Pulse-parameter optimization for orientation and alignment.

Objectives are evaluated by full propagation of a parametrized pulse
sequence. Search runs on the unit cube mapped affinely onto the parameter
bounds; every candidate is clipped into the cube before evaluation, so no
evaluation ever leaves the declared bounds.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
from typing import Callable

import numpy as np
from scipy import optimize as sopt

from .dynamics import Drive, QuantumState, propagate_lvn, propagate_schrodinger
from .observables import projector
from .pulses import pulse_energy


def projected_target(basis, op, j_opt, m=0, k=0):
    """Top eigenpair of ``op`` restricted to ``j <= j_opt`` at fixed (k, m).

    Requires ``j_opt <= j_max - 2`` so the projected operator is unaffected by
    the basis edge. The eigenvector phase is fixed by making its largest
    component real and positive.
    """
    if j_opt < 0:
        raise ValueError("j_opt must be >= 0")
    if j_opt > basis.j_max - 2:
        raise ValueError(f"j_opt={j_opt} needs j_max >= {j_opt + 2} (got {basis.j_max})")
    idx = np.flatnonzero((basis.j <= j_opt) & (basis.m == m) & (basis.k == k))
    if idx.size == 0:
        raise ValueError("no states with the requested (k, m) below j_opt")
    sub = op.matrix[idx][:, idx].toarray()
    w, v = np.linalg.eigh(0.5 * (sub + sub.conj().T))
    vec = v[:, -1]
    big = np.argmax(np.abs(vec))
    vec = vec * (abs(vec[big]) / vec[big])
    full = np.zeros(basis.dim, dtype=complex)
    full[idx] = vec
    return QuantumState(basis, vector=full), float(w[-1])


@dataclass(frozen=True)
class Parameter:
    name: str
    low: float
    high: float

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high) and self.low < self.high):
            raise ValueError(f"parameter {self.name!r} needs finite bounds low < high")

    @property
    def width(self):
        return self.high - self.low


@dataclass(frozen=True)
class Objective:
    """``kind`` is 'expectation_at_time', 'target_fidelity' or
    'time_window_average'."""

    kind: str
    time: float = None
    op: object = None
    target: QuantumState = None
    window: tuple = None
    samples: int = 21

    def __post_init__(self):
        if self.kind == "expectation_at_time":
            if self.op is None or self.time is None:
                raise ValueError("expectation_at_time needs op and time")
        elif self.kind == "target_fidelity":
            if self.target is None or self.time is None:
                raise ValueError("target_fidelity needs target and time")
        elif self.kind == "time_window_average":
            if self.op is None or self.window is None or self.window[1] <= self.window[0]:
                raise ValueError("time_window_average needs op and an increasing window")
        else:
            raise ValueError(f"unknown objective kind {self.kind!r}")

    @property
    def end_time(self):
        return self.window[1] if self.kind == "time_window_average" else self.time

    def operator(self):
        return projector(self.target) if self.kind == "target_fidelity" else self.op


@dataclass(eq=False)
class ControlProblem:
    """Maximize ``figure_of_merit - penalty * pulse_energy``.

    ``build_pulses(params: dict) -> list of pulses``; ``settings`` is passed on
    to the propagator (``max_step``, ``resolution``, ``watchdog``, ``scheme``).
    """

    spec: object
    basis: object
    initial_state: QuantumState
    build_pulses: Callable
    parameters: list
    objective: Objective
    penalty: float = 0.0
    t_start: float = 0.0
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.penalty >= 0 and math.isfinite(self.penalty)):
            raise ValueError("penalty must be finite and >= 0")
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")

    @property
    def bounds(self):
        return np.array([(p.low, p.high) for p in self.parameters])

    def as_dict(self, x):
        return {p.name: float(v) for p, v in zip(self.parameters, x)}

    def from_unit(self, u):
        b = self.bounds
        return b[:, 0] + np.clip(u, 0.0, 1.0) * (b[:, 1] - b[:, 0])


@dataclass(frozen=True)
class Evaluation:
    value: float
    figure_of_merit: float
    energy: float
    diagnostics: dict


def evaluate(problem, params):
    """Objective value and diagnostics for a parameter vector (or dict)."""
    if isinstance(params, dict):
        x = np.array([params[p.name] for p in problem.parameters], dtype=float)
    else:
        x = np.asarray(params, dtype=float)
    b = problem.bounds
    if x.shape != (len(problem.parameters),):
        raise ValueError("wrong number of parameters")
    if np.any(x < b[:, 0]) or np.any(x > b[:, 1]) or not np.all(np.isfinite(x)):
        raise ValueError(f"parameters {x} outside bounds")
    pulses = problem.build_pulses(problem.as_dict(x))
    drive = Drive.from_pulses(problem.spec, problem.basis, pulses)
    obj = problem.objective
    if obj.kind == "time_window_average":
        window = np.linspace(obj.window[0], obj.window[1], obj.samples)
        grid = np.concatenate([[problem.t_start], window]) if obj.window[0] > problem.t_start \
            else window
    else:
        grid = np.array([problem.t_start, obj.time]) if obj.time > problem.t_start \
            else np.array([obj.time])
    op = obj.operator()
    run = propagate_schrodinger if problem.initial_state.is_pure else propagate_lvn
    traj = run(problem.initial_state, drive, grid, {"fom": op}, **problem.settings)
    values = traj["fom"]
    if obj.kind == "time_window_average":
        fom = float(np.mean(values[-obj.samples:]))
    else:
        fom = float(values[-1])
    energy = pulse_energy(pulses)
    top = traj.meta.get("top_population")
    diag = {
        "norm_drift": traj.meta["norm_drift"],
        "top_population": float(np.max(top)) if top is not None else None,
        "substeps": traj.meta["substeps"],
    }
    return Evaluation(fom - problem.penalty * energy, fom, energy, diag)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HistoryEntry:
    index: int
    params: tuple
    value: float
    best: float


@dataclass(frozen=True)
class OptimizationResult:
    params: dict
    value: float
    history: list
    n_evaluations: int
    budget_exhausted: bool
    method: str
    seed: int
    message: str = ""


class _BudgetExhausted(Exception):
    pass


class _Tracker:
    def __init__(self, problem, budget):
        self.problem = problem
        self.budget = budget
        self.history = []
        self.best_value = -math.inf
        self.best_x = None

    def value(self, u):
        return evaluate(self.problem, self.problem.from_unit(np.asarray(u, dtype=float))).value

    def record(self, u, val):
        x = self.problem.from_unit(np.asarray(u, dtype=float))
        if val > self.best_value:
            self.best_value, self.best_x = val, x
        self.history.append(HistoryEntry(len(self.history), tuple(float(v) for v in x),
                                         val, self.best_value))
        return -val

    def __call__(self, u):
        if len(self.history) >= self.budget:
            raise _BudgetExhausted
        return self.record(u, self.value(u))

    def parallel_map(self, pool):
        """``map`` for a whole generation: evaluations run on ``pool``, results
        are recorded afterwards in population order."""
        def mapper(_func, population):
            items = [np.asarray(u, dtype=float) for u in population]
            room = self.budget - len(self.history)
            if room <= 0:
                raise _BudgetExhausted
            vals = list(pool.map(self.value, items[:room]))
            out = [self.record(u, v) for u, v in zip(items, vals)]
            if len(items) > room:
                raise _BudgetExhausted
            return out
        return mapper


def optimize(problem, method="simplex", budget=200, seed=0, x0=None, popsize=8,
             workers=1, tol=1e-8):
    """Maximize the problem objective.

    ``method='simplex'`` runs Nelder-Mead from ``x0`` (default: centre of the
    bounds); ``'population'`` runs differential evolution seeded by ``seed``.
    Running out of ``budget`` evaluations is a normal stop, flagged in the
    result.
    """
    n = len(problem.parameters)
    if method not in ("simplex", "population"):
        raise ValueError("method must be 'simplex' or 'population'")
    minimum = n + 1 if method == "simplex" else popsize * n
    if budget < minimum:
        raise ValueError(f"budget {budget} below the {method} minimum of {minimum}")
    tracker = _Tracker(problem, budget)
    exhausted = False
    message = ""
    b = problem.bounds
    try:
        if method == "simplex":
            if x0 is None:
                u0 = np.full(n, 0.5)
            else:
                x0 = np.asarray(x0, dtype=float)
                u0 = (x0 - b[:, 0]) / (b[:, 1] - b[:, 0])
            res = sopt.minimize(tracker, u0, method="Nelder-Mead",
                                bounds=[(0.0, 1.0)] * n,
                                options={"maxfev": budget, "xatol": tol, "fatol": tol})
            message = str(res.message)
        else:
            pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
            try:
                res = sopt.differential_evolution(
                    tracker, [(0.0, 1.0)] * n, seed=seed, popsize=popsize,
                    maxiter=max(1, budget // (popsize * n)), polish=False, tol=tol,
                    updating="deferred",
                    workers=tracker.parallel_map(pool) if pool else 1, init="sobol" if n > 1 else "latinhypercube")
            finally:
                if pool:
                    pool.shutdown()
            message = str(res.message)
    except _BudgetExhausted:
        exhausted = True
        message = "evaluation budget exhausted"
    if len(tracker.history) >= budget:
        exhausted = True
    return OptimizationResult(problem.as_dict(tracker.best_x), tracker.best_value,
                              tracker.history, len(tracker.history), exhausted, method, seed,
                              message)


def grid_scan(problem, points):
    """Exhaustive scan over the tensor grid of ``points`` (one array per
    parameter, ascending). Ties go to the lexicographically lowest parameters.

    Returns ``(best_params, best_value, values)`` with ``values`` shaped like
    the grid.
    """
    axes = [np.sort(np.asarray(p, dtype=float)) for p in points]
    if len(axes) != len(problem.parameters):
        raise ValueError("one point array per parameter")
    shape = tuple(len(a) for a in axes)
    values = np.empty(shape)
    best, best_x = -math.inf, None
    for idx in np.ndindex(*shape):
        x = np.array([a[i] for a, i in zip(axes, idx)])
        v = evaluate(problem, x).value
        values[idx] = v
        if v > best:
            best, best_x = v, x
    return problem.as_dict(best_x), best, values


def finite_difference_gradient(problem, params, rel_step=1e-4):
    """Central differences with step ``rel_step * (high - low)``, one-sided
    at the bounds."""
    x = np.asarray(params, dtype=float)
    b = problem.bounds
    g = np.empty_like(x)
    for i, p in enumerate(problem.parameters):
        h = rel_step * p.width
        lo, hi = max(x[i] - h, b[i, 0]), min(x[i] + h, b[i, 1])
        xp, xm = x.copy(), x.copy()
        xp[i], xm[i] = hi, lo
        g[i] = (evaluate(problem, xp).value - evaluate(problem, xm).value) / (hi - lo)
    return g
