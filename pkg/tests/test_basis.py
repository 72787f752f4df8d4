import numpy as np
import pytest

from rotorkit.basis import TopClass, build_basis, classify_constants, classify_inertia, m_block


def test_dimensions():
    assert build_basis("linear", 2).dim == 9
    assert build_basis("prolate", 1).dim == 10
    b = build_basis("linear", 0)
    assert b.dim == 1 and tuple(b.state_at(0)) == (0, 0, 0)
    for top in ("prolate", "oblate", "spherical", "asymmetric"):
        assert build_basis(top, 4).dim == sum((2 * j + 1) ** 2 for j in range(5))


@pytest.mark.parametrize("top", list(TopClass))
def test_state_invariants_and_round_trip(top):
    b = build_basis(top, 4)
    assert np.all(np.abs(b.k) <= b.j) and np.all(np.abs(b.m) <= b.j) and np.all(b.j <= 4)
    if top is TopClass.LINEAR:
        assert np.all(b.k == 0)
    for i in range(b.dim):
        assert b.index_of(tuple(b.state_at(i))) == i


def test_m_block():
    b = build_basis("linear", 2)
    assert sorted(b.j[m_block(b, 0)]) == [0, 1, 2]
    assert len(m_block(b, 2)) == 1
    assert len(m_block(b, 3)) == 0
    idx = m_block(build_basis("prolate", 2), 1)
    assert np.all(np.diff(idx) > 0)


def test_index_of_rejects_missing_state():
    b = build_basis("linear", 2)
    with pytest.raises((KeyError, ValueError)):
        b.index_of((3, 0, 0))


def test_build_basis_errors():
    with pytest.raises(ValueError):
        build_basis("linear", -1)
    with pytest.raises(ValueError):
        build_basis("cylinder", 2)


def test_classification():
    assert classify_inertia(1.0, 1.0, 0.0) is TopClass.LINEAR
    assert classify_inertia(2.0, 2.0, 1.0) is TopClass.PROLATE
    assert classify_inertia(2.0, 1.0, 1.0) is TopClass.OBLATE
    assert classify_inertia(1.0, 1.0, 1.0) is TopClass.SPHERICAL
    assert classify_inertia(3.0, 2.0, 1.0) is TopClass.ASYMMETRIC
    assert classify_constants(1.0, 1.0, 2.0) is TopClass.PROLATE
    assert classify_constants(1.0, 2.0, 2.0) is TopClass.OBLATE
