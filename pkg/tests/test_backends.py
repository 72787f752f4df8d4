"""Compiled and pure-Python kernels must agree; property checks run on the
active backend."""
import math
import os
import subprocess
import sys

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from rotorkit import kernels
from rotorkit.basis import build_basis
from rotorkit.classical import ClassicalState, InertiaSpec, integrate_euler
from rotorkit.hamiltonian import _cached_multipole, cos_product, direction_cosine
from rotorkit.wigner import three_j, wigner_small_d

compiled = pytest.mark.skipif("compiled" not in kernels.available_backends(),
                              reason="compiled extension not built")


@pytest.fixture
def backend():
    previous = kernels.BACKEND

    def switch(name):
        kernels.use_backend(name)
        _cached_multipole.cache_clear()

    yield switch
    switch(previous)


def test_fallback_selected_at_import():
    env = dict(os.environ, ROTORKIT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from rotorkit import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


@compiled
def test_three_j_parity(backend):
    args = [(j1, j2, j3, m1, m2, -m1 - m2)
            for j1 in range(0, 6) for j2 in range(0, 6) for j3 in range(abs(j1 - j2), j1 + j2 + 1)
            for m1 in range(-j1, j1 + 1) for m2 in range(-j2, j2 + 1)]
    out = {}
    for name in ("python", "compiled"):
        backend(name)
        out[name] = np.array([kernels.three_j(*a) for a in args])
    assert np.abs(out["python"] - out["compiled"]).max() < 1e-14


@compiled
def test_small_d_parity(backend):
    theta = np.linspace(0, math.pi, 17)
    out = {}
    for name in ("python", "compiled"):
        backend(name)
        out[name] = np.array([kernels.small_d(j, m, k, theta) for j in range(0, 9)
                              for m in range(-j, j + 1) for k in range(-j, j + 1)])
    assert np.abs(out["python"] - out["compiled"]).max() < 1e-13


@compiled
@pytest.mark.parametrize("top", ["linear", "asymmetric"])
def test_multipole_parity(backend, top):
    b = build_basis(top, 6)
    mats = {}
    for name in ("python", "compiled"):
        backend(name)
        mats[name] = [direction_cosine(b, "X").matrix.toarray(),
                      cos_product(b, "Y", "Z").matrix.toarray()]
    for a, c in zip(mats["python"], mats["compiled"]):
        assert np.abs(a - c).max() < 1e-14


@compiled
def test_rigid_body_parity(backend):
    inertia = InertiaSpec(2.0, 1.5, 1.0)
    s0 = ClassicalState(np.array([0.1, 0.98, 0.1]))
    t = np.linspace(0, 20, 41)
    out = {}
    for name in ("python", "compiled"):
        backend(name)
        out[name] = integrate_euler(inertia, s0, t, tol=1e-10)
    assert np.abs(out["python"].J - out["compiled"].J).max() < 1e-12
    assert out["python"].n_steps == out["compiled"].n_steps


# ---------------------------------------------------------------------------
# properties

def triples(max_j=8):
    return st.tuples(st.integers(0, max_j), st.integers(0, max_j)).flatmap(
        lambda jj: st.tuples(st.just(jj[0]), st.just(jj[1]),
                             st.integers(abs(jj[0] - jj[1]), jj[0] + jj[1])))


@settings(max_examples=150, deadline=None)
@given(triples(), st.data())
def test_three_j_symmetry_properties(js, data):
    j1, j2, j3 = js
    m1 = data.draw(st.integers(-j1, j1))
    m2 = data.draw(st.integers(-j2, j2))
    m3 = -m1 - m2
    if abs(m3) > j3:
        assert three_j(j1, j2, j3, m1, m2, m3) == 0.0
        return
    v = three_j(j1, j2, j3, m1, m2, m3)
    sign = (-1) ** (j1 + j2 + j3)
    assert three_j(j2, j3, j1, m2, m3, m1) == pytest.approx(v, abs=1e-13)
    assert three_j(j2, j1, j3, m2, m1, m3) == pytest.approx(sign * v, abs=1e-13)
    assert three_j(j1, j2, j3, -m1, -m2, -m3) == pytest.approx(sign * v, abs=1e-13)


@settings(max_examples=60, deadline=None)
@given(triples(6), st.integers(-12, 12))
def test_three_j_orthogonality(js, m3):
    j1, j2, j3 = js
    if abs(m3) > j3:
        return
    total = (2 * j3 + 1) * sum(three_j(j1, j2, j3, m1, -m1 - m3, m3) ** 2
                               for m1 in range(-j1, j1 + 1) if abs(m1 + m3) <= j2)
    assert total == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10), st.floats(0.0, math.pi))
def test_small_d_is_orthogonal(j, theta):
    d = np.array([[wigner_small_d(j, m, k, theta) for k in range(-j, j + 1)]
                  for m in range(-j, j + 1)])
    assert np.abs(d @ d.T - np.eye(2 * j + 1)).max() < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["linear", "prolate", "asymmetric"]), st.integers(1, 5))
def test_cosine_sum_rule(top, j_max):
    b = build_basis(top, j_max)
    total = sum(cos_product(b, K, K).matrix for K in "XYZ").toarray()
    # the identity is exact away from the top shell, which misses j_max + 1
    inner = b.j < j_max
    assert np.abs(total[np.ix_(inner, inner)] - np.eye(inner.sum())).max() < 1e-12
