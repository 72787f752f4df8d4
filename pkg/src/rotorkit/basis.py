"""Truncated |j, k, m> basis sets.

States are ordered by ascending j, then k, then m. Linear rotors carry k = 0
only. For symmetric tops k is the projection on the symmetry axis; for
asymmetric tops on the axis of the largest rotational constant (C).
"""
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np


class TopClass(str, Enum):
    LINEAR = "linear"
    PROLATE = "prolate"
    OBLATE = "oblate"
    SPHERICAL = "spherical"
    ASYMMETRIC = "asymmetric"

    @property
    def has_k(self):
        return self is not TopClass.LINEAR


def classify_inertia(Ix, Iy, Iz, rtol=1e-12):
    """Top class from principal moments with ``Ix >= Iy >= Iz``."""
    if not (Ix >= Iy >= Iz >= 0):
        raise ValueError("expected Ix >= Iy >= Iz >= 0")
    if Ix <= 0:
        raise ValueError("moments of inertia must not all vanish")

    def eq(a, b):
        return abs(a - b) <= rtol * max(abs(a), abs(b))

    if Iz == 0:
        if not eq(Ix, Iy):
            raise ValueError("a linear top needs Ix == Iy")
        return TopClass.LINEAR
    if eq(Ix, Iy) and eq(Iy, Iz):
        return TopClass.SPHERICAL
    if eq(Ix, Iy):
        return TopClass.PROLATE
    if eq(Iy, Iz):
        return TopClass.OBLATE
    return TopClass.ASYMMETRIC


def classify_constants(A, B, C, rtol=1e-12):
    """Top class from rotational constants ``A <= B <= C`` (C = inf for linear)."""
    if C is None or np.isinf(C):
        return TopClass.LINEAR
    return classify_inertia(1.0 / A, 1.0 / B, 1.0 / C, rtol=rtol)


@dataclass(frozen=True, eq=False)
class BasisSet:
    top: TopClass
    j_max: int
    states: np.ndarray = field(repr=False)

    def __len__(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[0]

    @property
    def j(self):
        return self.states[:, 0]

    @property
    def k(self):
        return self.states[:, 1]

    @property
    def m(self):
        return self.states[:, 2]

    @cached_property
    def lookup(self):
        """Dense index table: ``lookup[j, k + j_max, m + j_max]`` or -1."""
        n = self.j_max
        table = np.full((n + 1, 2 * n + 1, 2 * n + 1), -1, dtype=np.int_)
        j, k, m = self.states.T
        table[j, k + n, m + n] = np.arange(self.dim)
        table.setflags(write=False)
        return table

    def index_of(self, state):
        j, k, m = (int(v) for v in state)
        n = self.j_max
        if j < 0 or j > n or abs(k) > j or abs(m) > j:
            raise KeyError(f"state {state!r} not in basis")
        idx = int(self.lookup[j, k + n, m + n])
        if idx < 0:
            raise KeyError(f"state {state!r} not in basis")
        return idx

    def state_at(self, i):
        return tuple(int(v) for v in self.states[i])

    @cached_property
    def block_index(self):
        """m -> sorted index array of all states with that m."""
        out = {}
        for mv in range(-self.j_max, self.j_max + 1):
            idx = np.flatnonzero(self.m == mv)
            idx.setflags(write=False)
            out[mv] = idx
        return out

    @cached_property
    def km_index(self):
        """(k, m) -> sorted index array; invariant blocks of Z-polarized
        interactions in symmetric-top bases."""
        out = {}
        for i, (_, kv, mv) in enumerate(self.states.tolist()):
            out.setdefault((kv, mv), []).append(i)
        return {key: np.array(v, dtype=np.int64) for key, v in sorted(out.items())}

    @cached_property
    def parity_index(self):
        """'even' / 'odd' (parity of j) -> sorted index array."""
        even = np.flatnonzero(self.j % 2 == 0)
        odd = np.flatnonzero(self.j % 2 == 1)
        return {"even": even, "odd": odd}

    def shell(self, j):
        return np.flatnonzero(self.j == j)

    def same_as(self, other):
        return (
            self is other
            or (self.top == other.top and self.j_max == other.j_max
                and np.array_equal(self.states, other.states))
        )


def build_basis(top, j_max):
    """All |j,k,m> with j <= j_max (k = 0 for linear rotors)."""
    top = TopClass(top)
    if j_max < 0:
        raise ValueError("j_max must be >= 0")
    if j_max > 128:
        raise ValueError("j_max above 128 is not supported")
    rows = []
    for j in range(j_max + 1):
        ks = (0,) if top is TopClass.LINEAR else range(-j, j + 1)
        for k in ks:
            for m in range(-j, j + 1):
                rows.append((j, k, m))
    states = np.array(rows, dtype=np.int64).reshape(-1, 3)
    states.setflags(write=False)
    return BasisSet(top, int(j_max), states)


def m_block(basis, m):
    """Indices of all states with magnetic quantum number ``m``.

    The indices are sorted but, with the (j, k, m) ordering, not contiguous.
    ``|m| > j_max`` gives an empty array.
    """
    if abs(m) > basis.j_max:
        return np.empty(0, dtype=np.int64)
    return basis.block_index[int(m)]
