import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from rotorkit.basis import build_basis
from rotorkit.dynamics import Drive, QuantumState, propagate_schrodinger
from rotorkit.hamiltonian import RotorSpec
from rotorkit.pulses import (GaussianEnvelope, HalfCycleTHz, KickTrain, Ramp, TwoColor,
                             kick_strength, pulse_energy, sample, sudden_propagator)


def test_gaussian_sample():
    g = GaussianEnvelope(t0=2.0, fwhm=0.1, peak=(0.0, 0.0, 3.0))
    assert sample(g, 2.0).values == (0.0, 0.0, 3.0)
    for t in (2.0 - 0.5, 2.0 + 0.5):
        assert abs(sample(g, t).values[2]) < 1e-15 * 3.0
    # intensity FWHM: E^2 falls to half at t0 +- fwhm / 2
    assert sample(g, 2.05).values[2] ** 2 == pytest.approx(9.0 / 2, rel=1e-12)


def test_gaussian_fluence_matches_quadrature():
    g = GaussianEnvelope(t0=0.0, fwhm=0.3, peak=(1.0, 0.0, 2.0))
    a, b = g.support
    num, _ = integrate.quad(lambda t: sum(v * v for v in g.field_vector(t)), a, b,
                            epsabs=0, epsrel=1e-12, limit=200)
    assert pulse_energy(g) == pytest.approx(num, rel=1e-10)


def test_pulse_validation():
    with pytest.raises(ValueError):
        GaussianEnvelope(t0=0.0, fwhm=0.0)
    with pytest.raises(ValueError):
        GaussianEnvelope(t0=math.nan, fwhm=0.1)
    with pytest.raises(ValueError):
        HalfCycleTHz(amplitude=1.0, duration=-1.0)
    with pytest.raises(ValueError):
        TwoColor(t0=0.0, fwhm=0.1, E1=-1.0, E2=1.0)


def test_ramp_shape_and_fluence():
    r = Ramp(rise=1.0, hold=2.0, fall=0.5, strength=2.0)
    assert sample(r, 1.5).values[2] == pytest.approx(2.0)
    assert sample(r, 0.0).values[2] == pytest.approx(0.0)
    assert pulse_energy(r) == pytest.approx(4.0 * (2.0 + 3 / 8 * 1.5), rel=1e-12)


def test_kick_strength_examples():
    spec = RotorSpec.linear(1.0, alpha_par=2.0, alpha_perp=0.5)
    zero = GaussianEnvelope(t0=0.0, fwhm=0.01, peak=(0.0, 0.0, 0.0))
    assert kick_strength(zero, spec) == 0.0
    g1 = GaussianEnvelope(t0=0.0, fwhm=0.01, peak=(0.0, 0.0, 1.0))
    g2 = GaussianEnvelope(t0=0.0, fwhm=0.01, peak=(0.0, 0.0, math.sqrt(2.0)))
    assert kick_strength(g2, spec) == pytest.approx(2 * kick_strength(g1, spec), rel=1e-12)
    h, w = 3.0, 0.02
    rect = Ramp(rise=0.0, hold=w, fall=0.0, strength=math.sqrt(h))
    assert kick_strength(rect, spec) == pytest.approx(1.5 * h * w / 4, rel=1e-12)


def test_kick_strength_warns_for_long_pulses():
    spec = RotorSpec.linear(1.0, alpha_par=1.0)
    with pytest.warns(UserWarning):
        kick_strength(GaussianEnvelope(t0=0.0, fwhm=2.0), spec)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        kick_strength(GaussianEnvelope(t0=0.0, fwhm=0.01), spec)


def test_thz_zero_area():
    p = HalfCycleTHz(amplitude=2.0, duration=0.5, zero_area=True)
    a, b = p.support
    t = np.linspace(a, b, 200001)
    area = integrate.simpson([p.value(x) for x in t], x=t)
    assert abs(area) < 1e-10 * 2.0 * 0.5
    assert p.area() == 0.0
    plain = HalfCycleTHz(amplitude=2.0, duration=0.5)
    assert plain.area() == pytest.approx(0.5)


def test_kick_train_times_and_energy():
    kt = KickTrain(period=0.5, count=4, P=1.5, t0=1.0)
    assert kt.times == [1.0, 1.5, 2.0, 2.5]
    assert pulse_energy(kt) == pytest.approx(6.0)
    assert sample(kt, 1.5).extra["kick"] == 1.5


def test_sudden_propagator():
    b = build_basis("linear", 20)
    assert np.allclose(sudden_propagator(b, 0.0).toarray(), np.eye(b.dim))
    U = sudden_propagator(b, 3.0).toarray()
    assert np.abs(U.conj().T @ U - np.eye(b.dim)).max() < 1e-12
    psi = U[:, b.index_of((0, 0, 0))]
    # small kick: first-order population in |2,0,0>
    P = 0.01
    v = sudden_propagator(b, P).toarray()[:, b.index_of((0, 0, 0))]
    pop = abs(v[b.index_of((2, 0, 0))]) ** 2
    assert pop == pytest.approx(P**2 * 4 / 45, rel=1e-3)
    assert abs(np.linalg.norm(psi) - 1) < 1e-13


def test_short_gaussian_converges_to_kick():
    spec = RotorSpec.linear(1.0, alpha_par=1.0)
    b = build_basis("linear", 16)
    psi = QuantumState.basis_state(b, (0, 0, 0))
    target = sudden_propagator(b, 1.0).toarray()[:, 0]
    errs = []
    for fwhm in (0.02, 0.005):
        g = GaussianEnvelope(t0=0.0, fwhm=fwhm, peak=(0.0, 0.0, 1.0))
        scale = math.sqrt(1.0 / kick_strength(g, spec, warn=False))
        g = GaussianEnvelope(t0=0.0, fwhm=fwhm, peak=(0.0, 0.0, scale))
        a, bnd = g.support
        run = propagate_schrodinger(psi, Drive.from_pulses(spec, b, [g]), [a, bnd],
                                    checkpoints=[bnd])
        # undo the free phase accumulated across the symmetric window
        phase = np.exp(1j * b.j * (b.j + 1) * (bnd - a) / 2)
        back = run.states[bnd]
        errs.append(np.abs(phase * back.vector - target).max())
    assert errs[1] < errs[0] < 0.05


def test_kick_train_equals_sequential_kicks():
    spec = RotorSpec.linear(1.0, alpha_par=1.0)
    b = build_basis("linear", 20)
    psi = QuantumState.basis_state(b, (0, 0, 0))
    T, N = 0.7, 4
    train = propagate_schrodinger(psi, Drive.from_pulses(spec, b, [KickTrain(T, N, 1.0)]),
                                  [0.0, N * T], checkpoints=[N * T]).states[N * T].vector
    v = psi.vector
    U = sudden_propagator(b, 1.0).toarray()
    phase = np.exp(-1j * b.j * (b.j + 1) * T)
    for _ in range(N):
        v = phase * (U @ v)
    assert np.abs(train - v).max() < 1e-12


def test_sample_is_reproducible():
    for p in (GaussianEnvelope(t0=0.0, fwhm=0.3, peak=(1.0, 2.0, 0.5), phases=(0.0, 1.0, 0.0)),
              TwoColor(t0=0.0, fwhm=0.2, E1=1.0, E2=0.5, phi=0.3),
              HalfCycleTHz(amplitude=1.0, duration=0.4, zero_area=True)):
        assert sample(p, 0.0731) == sample(p, 0.0731)
        assert all(v == 0 for v in sample(p, 100.0).values)
