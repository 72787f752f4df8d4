"""Canned simulations shared by the command-line runner and the test-suite:
field-free alignment after kicks, two-kick echoes, periodic kick trains and
two-color phase sweeps."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import os

import numpy as np

from .dynamics import (Drive, Thermalization, energy_dephasing, propagate_lindblad,
                       propagate_lvn, propagate_schrodinger)
from .hamiltonian import cos_product, direction_cosine, j_squared
from .observables import alignment_operators, echo_analysis, expectation
from .pulses import KickTrain, TwoColor

THREADS_ENV = "ROTORKIT_THREADS"


def worker_count(default=1):
    """Thread count from ``ROTORKIT_THREADS`` (falls back to ``default``)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return default
    n = int(raw)
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer")
    return n


def ordered_map(fn, items, workers):
    """``list(map(fn, items))`` over a thread pool; results keep input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def kick(P, t0=0.0):
    """A single sudden kick ``exp(i P cos^2)`` at ``t0``."""
    return KickTrain(period=1.0, count=1, P=P, t0=t0)


def propagate(state, drive, grid, observables, method="auto", dissipators=(), **kw):
    """Dispatch to the Schrodinger, von Neumann or Lindblad propagator."""
    if method == "auto":
        method = "lindblad" if dissipators else ("schrodinger" if state.is_pure else "lvn")
    if method == "schrodinger":
        return propagate_schrodinger(state, drive, grid, observables, **kw)
    if method == "lvn":
        return propagate_lvn(state, drive, grid, observables, **kw)
    if method == "lindblad":
        return propagate_lindblad(state, drive, list(dissipators), grid, observables, **kw)
    raise ValueError(f"unknown propagation method {method!r}")


def dissipators(drive, dephasing=0.0, thermalization=0.0, rho_eq=None):
    out = []
    if dephasing:
        out += energy_dephasing(drive.H0, dephasing)
    if thermalization:
        if rho_eq is None:
            raise ValueError("thermalization needs an equilibrium state")
        out.append(Thermalization(rho_eq, thermalization))
    return out


def alignment_run(spec, state, pulses, grid, method="auto", dissipators_=(), keep_isotropic=True,
                  **kw):
    """Trajectory carrying every alignment-record column. ``keep_isotropic=False``
    drops the orientation-independent polarizability term (a pure energy shift)."""
    basis = state.basis
    drive = Drive.from_pulses(spec, basis, pulses, keep_isotropic)
    return propagate(state, drive, grid, alignment_operators(spec, basis), method,
                     dissipators_, **kw)


@dataclass(frozen=True)
class EchoSignals:
    times: np.ndarray
    s12: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s0: float
    report: object


def echo_signals(spec, state, P, tau, grid, window=(1.8, 2.2), workers=1, **kw):
    """Two kicks (at 0 and ``tau``) against both single-kick controls,
    observed through ``<cos^2 theta_zZ>``."""
    basis = state.basis
    op = {"c": cos_product(basis, "Z", "Z")}
    runs = [[kick(P, 0.0), kick(P, tau)], [kick(P, 0.0)], [kick(P, tau)]]

    def run(pulses):
        drive = Drive.from_pulses(spec, basis, pulses)
        return propagate(state, drive, grid, op, **kw)["c"]

    s12, s1, s2 = ordered_map(run, runs, workers)
    s0 = expectation(op["c"], state)
    rep = echo_analysis(grid, s12, s1, s2, s0, tau, window)
    return EchoSignals(np.asarray(grid), s12, s1, s2, s0, rep)


def kicked_series(spec, state, P, period, count, **kw):
    """``<J^2>`` just after each kick of a periodic train (index ``n - 1``
    holds the value after ``n`` kicks)."""
    basis = state.basis
    train = KickTrain(period=period, count=count, P=P, t0=0.0)
    drive = Drive.from_pulses(spec, basis, [train])
    traj = propagate(state, drive, train.times, {"j2": j_squared(basis)}, **kw)
    return traj["j2"]


def two_color_sweep(spec, state, phis, t0, fwhm, E1, E2, t_probe, workers=1, **kw):
    """``<cos theta_zZ>`` and ``<cos^2 theta_zZ>`` at ``t_probe`` for each
    relative phase."""
    basis = state.basis
    ops = {"cos_z": direction_cosine(basis, "Z"), "cos2_z": cos_product(basis, "Z", "Z")}
    pulse0 = TwoColor(t0=t0, fwhm=fwhm, E1=E1, E2=E2)
    t_start = min(pulse0.support[0], t_probe)
    grid = np.array([t_start, t_probe]) if t_probe > t_start else np.array([t_probe])

    def run(phi):
        p = TwoColor(t0=t0, fwhm=fwhm, E1=E1, E2=E2, phi=float(phi))
        traj = propagate(state, Drive.from_pulses(spec, basis, [p]), grid, ops, **kw)
        return traj["cos_z"][-1], traj["cos2_z"][-1]

    res = np.array(ordered_map(run, phis, workers))
    return res[:, 0], res[:, 1]
