import math

import numpy as np
import pytest

from rotorkit.basis import build_basis
from rotorkit.control import (ControlProblem, Objective, Parameter, evaluate,
                              finite_difference_gradient, grid_scan, optimize, projected_target)
from rotorkit.dynamics import Drive, QuantumState, propagate_schrodinger, thermal_state
from rotorkit.hamiltonian import RotorSpec, cos_product, direction_cosine
from rotorkit.pulses import KickTrain, Ramp, TwoColor, pulse_energy

SPEC = RotorSpec.linear(1.0, alpha_par=1.0)
B10 = build_basis("linear", 10)
GROUND = QuantumState.basis_state(B10, (0, 0, 0))


B16 = build_basis("linear", 16)


def kick_problem(penalty=0.0, t=0.3):
    return ControlProblem(
        SPEC, B16, QuantumState.basis_state(B16, (0, 0, 0)), lambda p: [KickTrain(period=1.0, count=1, P=p["P"])],
        [Parameter("P", 0.0, 4.0)],
        Objective("expectation_at_time", time=t, op=cos_product(B16, "Z", "Z")), penalty)


def test_projected_target():
    op = direction_cosine(B10, "Z")
    vals = [projected_target(B10, op, j)[1] for j in range(0, 9)]
    assert vals[0] == pytest.approx(0.0, abs=1e-15)
    assert vals[1] == pytest.approx(1 / math.sqrt(3), rel=1e-12)
    assert np.all(np.diff(vals) > 0)
    state, v = projected_target(B10, op, 5)
    assert np.vdot(state.vector, op.matrix @ state.vector).real == pytest.approx(v, rel=1e-12)
    with pytest.raises(ValueError):
        projected_target(B10, op, 9)
    with pytest.raises(ValueError):
        projected_target(B10, op, -1)


def test_parameter_and_objective_validation():
    with pytest.raises(ValueError):
        Parameter("x", 1.0, 1.0)
    with pytest.raises(ValueError):
        Parameter("x", 0.0, math.inf)
    with pytest.raises(ValueError):
        Objective("expectation_at_time", time=1.0)
    with pytest.raises(ValueError):
        Objective("time_window_average", op=cos_product(B10, "Z", "Z"), window=(2.0, 1.0))
    with pytest.raises(ValueError):
        Objective("maximum")
    with pytest.raises(ValueError):
        kick_problem(penalty=-1.0)


def test_penalty_shifts_by_energy():
    a = evaluate(kick_problem(0.0), [2.5])
    b = evaluate(kick_problem(0.3), [2.5])
    assert a.value - b.value == pytest.approx(0.3 * a.energy, rel=1e-14)
    assert a.energy == pytest.approx(2.5)
    assert a.figure_of_merit == b.figure_of_merit


def test_evaluate_matches_direct_propagation():
    ev = evaluate(kick_problem(), {"P": 1.7})
    drive = Drive.from_pulses(SPEC, B16, [KickTrain(period=1.0, count=1, P=1.7)])
    ref = propagate_schrodinger(QuantumState.basis_state(B16, (0, 0, 0)), drive, [0.0, 0.3],
                                {"c": cos_product(B16, "Z", "Z")})
    assert ev.figure_of_merit == pytest.approx(ref["c"][-1], abs=1e-14)
    with pytest.raises(ValueError):
        evaluate(kick_problem(), [5.0])


def test_zero_field_gives_no_orientation_from_thermal_state():
    rho = thermal_state(SPEC, B10, 1.0)
    spec = RotorSpec.linear(1.0, mu0=1.0, alpha_par=1.0)
    prob = ControlProblem(
        spec, B10, rho, lambda p: [Ramp(rise=0.1, hold=0.2, fall=0.1, strength=p["E"],
                                        mode="resonant")],
        [Parameter("E", 0.0, 1.0)],
        Objective("expectation_at_time", time=1.0, op=direction_cosine(B10, "Z")))
    assert abs(evaluate(prob, [0.0]).value) < 1e-15
    assert abs(evaluate(prob, [1.0]).value) > 1e-3


def test_time_window_average_and_fidelity():
    op = cos_product(B10, "Z", "Z")
    prob = ControlProblem(SPEC, B10, GROUND, lambda p: [KickTrain(period=1.0, count=1, P=p["P"])],
                          [Parameter("P", 0.0, 4.0)],
                          Objective("time_window_average", op=op, window=(0.1, 0.5), samples=5))
    drive = Drive.from_pulses(SPEC, B10, [KickTrain(period=1.0, count=1, P=2.0)])
    ref = propagate_schrodinger(GROUND, drive, np.r_[0.0, np.linspace(0.1, 0.5, 5)], {"c": op})
    assert evaluate(prob, [2.0]).value == pytest.approx(ref["c"][1:].mean(), abs=1e-14)
    target, _ = projected_target(B10, op, 4)
    fid = ControlProblem(SPEC, B10, GROUND, prob.build_pulses, prob.parameters,
                         Objective("target_fidelity", time=0.3, target=target))
    v = evaluate(fid, [2.0]).value
    assert 0.0 <= v <= 1.0


def test_simplex_is_deterministic_and_bounded():
    prob = kick_problem()
    r1 = optimize(prob, "simplex", budget=25)
    r2 = optimize(prob, "simplex", budget=25)
    assert [h.value for h in r1.history] == [h.value for h in r2.history]
    assert all(0.0 <= h.params[0] <= 4.0 for h in r1.history)
    bests = [h.best for h in r1.history]
    assert bests == sorted(bests)
    assert r1.value == max(h.value for h in r1.history)


def test_budget_rules():
    prob = kick_problem()
    with pytest.raises(ValueError):
        optimize(prob, "simplex", budget=1)
    with pytest.raises(ValueError):
        optimize(prob, "population", budget=5, popsize=8)
    with pytest.raises(ValueError):
        optimize(prob, "gradient")
    r = optimize(prob, "simplex", budget=4)
    assert r.budget_exhausted and r.n_evaluations == 4


def test_population_search_is_seeded():
    prob = kick_problem()
    a = optimize(prob, "population", budget=24, seed=3, popsize=6)
    b = optimize(prob, "population", budget=24, seed=3, popsize=6)
    assert [h.params for h in a.history] == [h.params for h in b.history]
    assert a.n_evaluations <= 24


def test_grid_scan_tie_break():
    prob = ControlProblem(SPEC, B10, GROUND, lambda p: [], [Parameter("x", 0.0, 1.0)],
                          Objective("expectation_at_time", time=0.1,
                                    op=cos_product(B10, "Z", "Z")))
    best, val, values = grid_scan(prob, [np.linspace(0, 1, 5)])
    assert best == {"x": 0.0}
    assert np.ptp(values) == 0.0


def test_two_color_optimum_sits_at_phase_extremes():
    spec = RotorSpec.linear(1.0, alpha_par=2.0, alpha_perp=1.0, beta_par=0.05,
                            beta_perp=0.05 / 3)
    b = build_basis("linear", 12)
    psi = QuantumState.basis_state(b, (0, 0, 0))
    prob = ControlProblem(
        spec, b, psi,
        lambda p: [TwoColor(t0=0.0, fwhm=0.2, E1=3.0, E2=p["E2"], phi=p["phi"])],
        [Parameter("phi", 0.0, 2 * math.pi), Parameter("E2", 0.0, 3.0)],
        Objective("expectation_at_time", time=0.8, op=direction_cosine(b, "Z")), t_start=-0.6)
    res = optimize(prob, "simplex", budget=80, x0=[1.0, 1.5])
    assert abs(math.cos(res.params["phi"])) > 1 - 1e-4
    assert res.params["E2"] == pytest.approx(3.0, abs=1e-3)


def test_finite_difference_gradient():
    prob = kick_problem()
    g1 = finite_difference_gradient(prob, [1.0], rel_step=1e-4)
    g2 = finite_difference_gradient(prob, [1.0], rel_step=1e-3)
    assert g1[0] == pytest.approx(g2[0], rel=1e-4)
    # one-sided at the bound
    g0 = finite_difference_gradient(prob, [0.0])
    assert np.isfinite(g0[0])
    assert pulse_energy([]) == 0.0
