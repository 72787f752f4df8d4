import math

import numpy as np
import pytest

from rotorkit.basis import build_basis
from rotorkit.dynamics import (Drive, PositivityError, QuantumState, StepSizeError,
                               Thermalization, TruncationError, _layouts, energy_dephasing,
                               propagate_lindblad, propagate_lvn, propagate_schrodinger,
                               thermal_state)
from rotorkit.hamiltonian import (RotorSpec, cos_product, direction_cosine, j_squared,
                                  zero_operator)
from rotorkit.pulses import GaussianEnvelope, KickTrain

SPEC = RotorSpec.linear(1.0, alpha_par=1.0)


def kick(P, t0=0.0):
    return KickTrain(period=1.0, count=1, P=P, t0=t0)


def test_free_phase_is_exact():
    b = build_basis("linear", 4)
    v = np.zeros(b.dim, dtype=complex)
    v[b.index_of((0, 0, 0))] = v[b.index_of((1, 0, 0))] = 1 / math.sqrt(2)
    psi = QuantumState(b, vector=v)
    t = 0.37
    run = propagate_schrodinger(psi, Drive.from_pulses(SPEC, b), [0.0, t], checkpoints=[t])
    out = run.states[t].vector
    ratio = out[b.index_of((1, 0, 0))] / out[b.index_of((0, 0, 0))]
    assert abs(ratio - np.exp(-2j * t)) < 1e-14


def test_revival_period():
    b = build_basis("linear", 24)
    rho = thermal_state(SPEC, b, 5.0)
    t = np.array([0.0, 0.3, 0.3 + math.pi])
    run = propagate_lvn(rho, Drive.from_pulses(SPEC, b, [kick(2.0)]), t,
                        {"c": cos_product(b, "Z", "Z")})
    assert abs(run["c"][1] - run["c"][2]) < 1e-10


def test_zero_hamiltonian_leaves_state():
    b = build_basis("linear", 3)
    rng = np.random.default_rng(1)
    v = rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)
    psi = QuantumState.pure(b, v, normalize=True)
    run = propagate_schrodinger(psi, zero_operator(b), [0.0, 5.0], checkpoints=[5.0],
                                watchdog=None)
    assert np.allclose(run.states[5.0].vector, psi.vector, atol=1e-15)


def test_lvn_matches_schrodinger_for_pure_state():
    b = build_basis("linear", 12)
    psi = QuantumState.basis_state(b, (1, 0, 1))
    g = GaussianEnvelope(t0=1.0, fwhm=0.3, peak=(0.0, 0.0, 3.0))
    drive = Drive.from_pulses(SPEC, b, [g])
    grid = np.linspace(0.0, 3.0, 31)
    ops = {"c": cos_product(b, "Z", "Z"), "j2": j_squared(b)}
    a = propagate_schrodinger(psi, drive, grid, ops)
    r = propagate_lvn(psi, drive, grid, ops)
    for k in ops:
        assert np.abs(a[k] - r[k]).max() < 1e-10


def test_thermal_state_is_stationary():
    b = build_basis("linear", 20)
    rho = thermal_state(SPEC, b, 10.0)
    run = propagate_lvn(rho, Drive.from_pulses(SPEC, b), np.linspace(0, 4, 9),
                        {"c": cos_product(b, "Z", "Z")})
    assert np.ptp(run["c"]) < 1e-13
    assert run["c"][0] == pytest.approx(1 / 3, abs=1e-12)


def test_zero_temperature_is_ground_state():
    b = build_basis("linear", 6)
    rho = thermal_state(SPEC, b, 0.0)
    assert rho.populations()[b.index_of((0, 0, 0))] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        thermal_state(SPEC, b, -1.0)


def test_thermal_truncation_guard():
    with pytest.raises(TruncationError):
        thermal_state(SPEC, build_basis("linear", 4), 300.0)


def test_lindblad_without_dissipation_matches_lvn():
    b = build_basis("linear", 8)
    rho = thermal_state(SPEC, b, 2.0)
    g = GaussianEnvelope(t0=0.6, fwhm=0.2, peak=(0.0, 0.0, 3.0))
    drive = Drive.from_pulses(SPEC, b, [g])
    grid = np.linspace(0.0, 1.5, 16)
    ops = {"c": cos_product(b, "Z", "Z")}
    ref = propagate_lvn(rho, drive, grid, ops, scheme="magnus4", max_step=2e-3)
    lin = propagate_lindblad(rho, drive, [], grid, ops, tol=1e-11)
    assert np.abs(ref["c"] - lin["c"]).max() < 1e-8


def test_dephasing_keeps_populations_and_damps_coherences():
    b = build_basis("linear", 10)
    psi = QuantumState.basis_state(b, (0, 0, 0))
    drive = Drive.from_pulses(SPEC, b, [kick(1.5)])
    gamma = 0.5
    grid = [0.0, 1.0, 3.0]
    run = propagate_lindblad(psi, drive, energy_dephasing(drive.H0, gamma), grid,
                             {"j2": j_squared(b), "c": cos_product(b, "Z", "Z")})
    assert np.ptp(run["j2"]) < 1e-12
    free = propagate_schrodinger(psi, drive, [0.0, 3.0], checkpoints=[3.0]).states[3.0]
    rho = run.meta["final_state"].density_matrix()
    i0, i2 = b.index_of((0, 0, 0)), b.index_of((2, 0, 0))
    c_free = free.vector[i0] * np.conj(free.vector[i2])
    assert abs(rho[i0, i2]) == pytest.approx(abs(c_free) * math.exp(-gamma * 3.0), rel=1e-8)
    assert np.allclose(np.diag(rho).real, np.abs(free.vector) ** 2, atol=1e-12)


def test_thermalization_relaxes_to_isotropy():
    b = build_basis("linear", 16)
    rho_eq = thermal_state(SPEC, b, 5.0)
    drive = Drive.from_pulses(SPEC, b, [kick(3.0)])
    run = propagate_lindblad(rho_eq, drive, [Thermalization(rho_eq, 2.0)], [0.0, 0.2, 20.0],
                             {"c": cos_product(b, "Z", "Z")})
    assert abs(run["c"][1] - 1 / 3) > 1e-3
    assert run["c"][-1] == pytest.approx(1 / 3, abs=1e-12)


def test_truncation_watchdog():
    b = build_basis("linear", 4)
    psi = QuantumState.basis_state(b, (0, 0, 0))
    with pytest.raises(TruncationError):
        propagate_schrodinger(psi, Drive.from_pulses(SPEC, b, [kick(20.0)]), [0.0, 0.1])
    run = propagate_schrodinger(psi, Drive.from_pulses(SPEC, b, [kick(20.0)]), [0.0, 0.1],
                                watchdog=None)
    assert run.meta["top_population"] is None


def test_step_size_guard():
    b = build_basis("linear", 10)
    psi = QuantumState.basis_state(b, (0, 0, 0))
    g = GaussianEnvelope(t0=3.0, fwhm=0.5, peak=(0.0, 0.0, 5.0))
    with pytest.raises(StepSizeError):
        propagate_schrodinger(psi, Drive.from_pulses(SPEC, b, [g]), [0.0, 6.0], max_step=1.0,
                              resolution=0, watchdog=None)


def test_positivity_guard():
    b = build_basis("linear", 4)
    psi = QuantumState.basis_state(b, (0, 0, 0))
    L = direction_cosine(b, "Z")
    L = type(L)(b, 30.0 * L.matrix, L.selection, "strong")
    with pytest.raises(PositivityError):
        propagate_lindblad(psi, Drive.from_pulses(SPEC, b), [L], [0.0, 1.0], tol=1e6, h0=1.0,
                           watchdog=None)


def test_grid_and_checkpoint_validation():
    b = build_basis("linear", 3)
    psi = QuantumState.basis_state(b, (0, 0, 0))
    drive = Drive.from_pulses(SPEC, b)
    with pytest.raises(ValueError):
        propagate_schrodinger(psi, drive, [0.0, 1.0], checkpoints=[0.5])
    with pytest.raises(ValueError):
        propagate_schrodinger(psi, drive, [1.0, 0.5])
    with pytest.raises(ValueError):
        propagate_schrodinger(psi, Drive.from_pulses(SPEC, b, [kick(1.0, -1.0)]), [0.0, 1.0])


def test_kick_at_grid_time_is_applied_before_recording():
    b = build_basis("linear", 12)
    psi = QuantumState.basis_state(b, (0, 0, 0))
    run = propagate_schrodinger(psi, Drive.from_pulses(SPEC, b, [kick(2.0)]), [0.0, 1.0],
                                {"j2": j_squared(b)})
    assert run["j2"][0] > 0.1


def test_layouts_find_parity_blocks():
    b = build_basis("linear", 6)
    ops = [Drive.from_pulses(SPEC, b).H0, cos_product(b, "Z", "Z")]
    finest = _layouts(b, ops)[0]
    for idx in finest:
        assert len(set(b.m[idx])) == 1
        assert len(set(b.j[idx] % 2)) == 1
    assert sum(len(i) for i in finest) == b.dim
    # odd couplings mix parities but still conserve m
    finest = _layouts(b, ops + [direction_cosine(b, "Z")])[0]
    assert len(finest) == 2 * b.j_max + 1


def test_state_file_roundtrip(tmp_path):
    from rotorkit.dynamics import load_state, save_state
    b = build_basis("linear", 5)
    psi = QuantumState.pure(b, np.arange(b.dim) + 1j, normalize=True)
    rho = thermal_state(SPEC, b, 4.0)
    for name, s in (("pure.npz", psi), ("mixed.npz", rho)):
        save_state(s, tmp_path / name)
        back = load_state(tmp_path / name, b)
        assert back.is_pure == s.is_pure
        assert np.array_equal(back.density_matrix(), s.density_matrix())
    with pytest.raises(ValueError):
        load_state(tmp_path / "pure.npz", build_basis("linear", 6))
