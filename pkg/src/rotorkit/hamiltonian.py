"""Free-rotor Hamiltonians and field-interaction operators.

Units: hbar = 1, energies in rad/ps, times in ps. Field couplings are given
as "interaction strengths": the products mu0*E, alpha*E^2, beta*E^3 are in
rad/ps when the field amplitude is expressed in the user's field unit.

Operators that are functions of orientation (direction cosines and their
powers/products) are expanded exactly in Wigner D functions and assembled
through 3-j symbols, so every element is exact up to j_max. Products of
truncated cos(theta) matrices are *not* used: they are wrong in the last
shells (see ``tests/test_hamiltonian.py::test_truncated_product_differs``).
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math
import warnings

import numpy as np
import scipy.constants as const
import scipy.sparse as sp

from . import kernels
from .basis import BasisSet, TopClass, classify_constants
from .wigner import three_j

# 2*pi*c in rad/ps per cm^-1
CM1_TO_RADPS = 2.0 * math.pi * const.c * 100.0 * 1e-12   # 0.1883651567
GHZ_TO_RADPS = 2.0 * math.pi * 1e-3                      # 0.006283185307
KB_RADPS_PER_K = const.k / const.hbar * 1e-12            # 0.1309203391
DEBYE = 1e-21 / const.c                                  # C*m

UNIT_FACTORS = {"rad/ps": 1.0, "cm-1": CM1_TO_RADPS, "GHz": GHZ_TO_RADPS}

AXES = ("X", "Y", "Z")


def to_radps(value, units):
    try:
        return value * UNIT_FACTORS[units]
    except KeyError:
        raise ValueError(f"unknown energy unit {units!r}; use one of {sorted(UNIT_FACTORS)}")


def dipole_coupling_radps(mu_debye, field_v_per_m):
    """mu*E in rad/ps for a dipole in Debye and a field in V/m."""
    return mu_debye * DEBYE * field_v_per_m / const.hbar * 1e-12


@dataclass(frozen=True)
class RotorSpec:
    """Rotational constants (rad/ps, ``A <= B <= C``; ``C = inf`` for linear
    rotors) and field-response parameters."""

    A: float
    B: float
    C: float = math.inf
    mu0: float = 0.0
    alpha_par: float = 0.0
    alpha_perp: float = 0.0
    beta_par: float = 0.0
    beta_perp: float = 0.0
    centrifugal_D: float = 0.0
    spin_weights: dict = field(default_factory=lambda: {"even": 1.0, "odd": 1.0})

    def __post_init__(self):
        if not (0 < self.A <= self.B <= self.C):
            raise ValueError(f"need 0 < A <= B <= C, got {self.A}, {self.B}, {self.C}")
        for name in ("mu0", "alpha_par", "alpha_perp", "beta_par", "beta_perp", "centrifugal_D"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if set(self.spin_weights) != {"even", "odd"}:
            raise ValueError("spin_weights needs exactly the keys 'even' and 'odd'")
        if any(w < 0 for w in self.spin_weights.values()):
            raise ValueError("spin weights must be non-negative")
        if math.isinf(self.C) and self.A != self.B:
            raise ValueError("a linear rotor has A == B")
        if self.centrifugal_D and self.top is not TopClass.LINEAR:
            raise ValueError("centrifugal distortion is supported for linear rotors only")
        da = self.delta_alpha
        if da and self.top in (TopClass.LINEAR, TopClass.PROLATE) and da < 0:
            warnings.warn("negative polarizability anisotropy for a linear/prolate rotor")
        if da and self.top is TopClass.OBLATE and da > 0:
            warnings.warn("positive polarizability anisotropy for an oblate rotor")

    @classmethod
    def linear(cls, B, units="rad/ps", **kw):
        B = to_radps(B, units)
        if "centrifugal_D" in kw:
            kw["centrifugal_D"] = to_radps(kw["centrifugal_D"], units)
        return cls(A=B, B=B, C=math.inf, **kw)

    @classmethod
    def from_constants(cls, A, B, C, units="rad/ps", **kw):
        return cls(A=to_radps(A, units), B=to_radps(B, units), C=to_radps(C, units), **kw)

    @property
    def top(self):
        return classify_constants(self.A, self.B, self.C)

    @property
    def delta_alpha(self):
        return self.alpha_par - self.alpha_perp

    def weight(self, j):
        return self.spin_weights["even" if j % 2 == 0 else "odd"]

    @property
    def revival_period(self):
        """pi / B for linear rotors (ps)."""
        return math.pi / self.B


@dataclass(frozen=True)
class Selection:
    """Allowed changes (row minus column) of j, k and m."""

    dj: frozenset
    dk: frozenset
    dm: frozenset

    def __or__(self, other):
        return Selection(self.dj | other.dj, self.dk | other.dk, self.dm | other.dm)

    def __add__(self, other):
        def sums(a, b):
            return frozenset(x + y for x in a for y in b)
        return Selection(sums(self.dj, other.dj), sums(self.dk, other.dk), sums(self.dm, other.dm))


DIAGONAL = Selection(frozenset({0}), frozenset({0}), frozenset({0}))
EMPTY = Selection(frozenset(), frozenset(), frozenset())


@dataclass(frozen=True, eq=False)
class Operator:
    """Operator over a basis, stored as a sparse CSR matrix.

    Everything built in this module is Hermitian; ``hermitian=False`` marks
    derived objects such as propagators and truncated products.
    """

    basis: BasisSet
    matrix: sp.csr_matrix = field(repr=False)
    selection: Selection = DIAGONAL
    label: str = ""
    hermitian: bool = True

    @property
    def shape(self):
        return self.matrix.shape

    def toarray(self):
        return self.matrix.toarray()

    @property
    def conserves_m(self):
        return self.selection.dm <= {0}

    def _check(self, other):
        if not self.basis.same_as(other.basis):
            raise ValueError("operators live on different bases")

    def __add__(self, other):
        if other == 0:
            return self
        self._check(other)
        return Operator(self.basis, (self.matrix + other.matrix).tocsr(),
                        self.selection | other.selection, f"{self.label}+{other.label}",
                        self.hermitian and other.hermitian)

    __radd__ = __add__

    def __neg__(self):
        return Operator(self.basis, -self.matrix, self.selection, f"-{self.label}", self.hermitian)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, Operator):
            raise TypeError("use @ for operator products")
        herm = self.hermitian
        if np.iscomplexobj(scalar) and np.imag(scalar) != 0:
            herm = False
        else:
            scalar = float(np.real(scalar))
        sel = self.selection if scalar != 0 else EMPTY
        return Operator(self.basis, (self.matrix * scalar).tocsr(), sel, self.label, herm)

    __rmul__ = __mul__

    def __matmul__(self, other):
        """Matrix product within the truncated space (not Hermitian in general)."""
        self._check(other)
        return Operator(self.basis, (self.matrix @ other.matrix).tocsr(),
                        self.selection + other.selection, f"{self.label}@{other.label}", False)

    def hermiticity_error(self):
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def commutator_norm(self, other):
        self._check(other)
        c = self.matrix @ other.matrix - other.matrix @ self.matrix
        return float(abs(c).max()) if c.nnz else 0.0

    def block(self, idx_row, idx_col=None):
        idx_col = idx_row if idx_col is None else idx_col
        return self.matrix[idx_row][:, idx_col].toarray()


def zero_operator(basis):
    n = basis.dim
    return Operator(basis, sp.csr_matrix((n, n), dtype=complex), EMPTY, "0")


def identity(basis):
    return Operator(basis, sp.identity(basis.dim, dtype=complex, format="csr"), DIAGONAL, "1")


def diagonal_operator(basis, values, label=""):
    return Operator(basis, sp.diags(np.asarray(values, dtype=complex), format="csr"), DIAGONAL, label)


def j_squared(basis):
    j = basis.j.astype(float)
    return diagonal_operator(basis, j * (j + 1), "J^2")


def jz_space(basis):
    return diagonal_operator(basis, basis.m.astype(float), "J_Z")


def jz_body(basis):
    return diagonal_operator(basis, basis.k.astype(float), "J_z")


# ---------------------------------------------------------------------------
# Multipole (Wigner-D) expansions of orientation functions.
# An expansion maps (L, p, q) -> coefficient c with f = sum c * D^L_{pq}.

_S2 = 1.0 / math.sqrt(2.0)

_COS_EXPANSION = {
    "Z": {(1, 0, 0): 1.0 + 0j},
    # sin(theta) cos(phi)
    "X": {(1, -1, 0): _S2 + 0j, (1, 1, 0): -_S2 + 0j},
    # sin(theta) sin(phi)
    "Y": {(1, -1, 0): -1j * _S2, (1, 1, 0): -1j * _S2},
}


def _check_axis(K):
    if K not in AXES:
        raise ValueError(f"space axis must be one of {AXES}, got {K!r}")


def cos_expansion(K):
    _check_axis(K)
    return dict(_COS_EXPANSION[K])


def clebsch_gordan(j1, m1, j2, m2, J, M):
    if m1 + m2 != M:
        return 0.0
    w = three_j(j1, j2, J, m1, m2, -M)
    sign = -1.0 if (j1 - j2 + M) % 2 else 1.0
    return sign * math.sqrt(2 * J + 1) * w


def multiply_expansions(e1, e2, cutoff=1e-15):
    """Product of two D-function expansions via the Clebsch-Gordan series
    ``D^a_{pq} D^b_{p'q'} = sum_L <a p b p'|L P><a q b q'|L Q> D^L_{PQ}``."""
    out = {}
    for (L1, p1, q1), c1 in e1.items():
        for (L2, p2, q2), c2 in e2.items():
            P, Q = p1 + p2, q1 + q2
            for L in range(abs(L1 - L2), L1 + L2 + 1):
                if abs(P) > L or abs(Q) > L:
                    continue
                w = clebsch_gordan(L1, p1, L2, p2, L, P) * clebsch_gordan(L1, q1, L2, q2, L, Q)
                if w:
                    key = (L, P, Q)
                    out[key] = out.get(key, 0.0) + c1 * c2 * w
    return {k: v for k, v in sorted(out.items()) if abs(v) > cutoff}


def expansion_selection(expansion):
    dj, dk, dm = set(), set(), set()
    for (L, p, q) in expansion:
        dj.update(range(-L, L + 1))
        dm.update((-p, p))
        dk.update((-q, q))
    return Selection(frozenset(dj), frozenset(dk), frozenset(dm))


def multipole_operator(basis, expansion, label=""):
    """Operator of a real orientation function given by its D expansion.

    Elements are ``sqrt((2j'+1)(2j+1)) (-1)^(m-k) (j' L j; m' p -m)(j' L j; k' q -k)``
    per term; only the upper triangle is computed and then mirrored, so the
    result is Hermitian exactly.
    """
    n = basis.dim
    if not expansion:
        return zero_operator(basis)
    keys = list(expansion)
    Ls = np.array([k[0] for k in keys], dtype=np.intc)
    ps = np.array([k[1] for k in keys], dtype=np.intc)
    qs = np.array([k[2] for k in keys], dtype=np.intc)
    coef = np.array([expansion[k] for k in keys], dtype=complex)
    rows, cols, vals = kernels.multipole_upper(
        np.ascontiguousarray(basis.states, dtype=np.intc), basis.lookup, basis.j_max,
        Ls, ps, qs, coef)
    upper = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    upper.sum_duplicates()
    diag = upper.diagonal()
    strict = sp.triu(upper, k=1)
    full = strict + strict.conj().T + sp.diags(diag.real.astype(complex))
    full = full.tocsr()
    full.eliminate_zeros()
    return Operator(basis, full, expansion_selection(expansion), label)


@lru_cache(maxsize=256)
def _cached_multipole(basis, key):
    kind = key[0]
    if kind == "cos":
        K = key[1]
        return multipole_operator(basis, cos_expansion(K), f"cos_z{K}")
    if kind == "cos2":
        K, Kp = key[1], key[2]
        e = multiply_expansions(cos_expansion(K), cos_expansion(Kp))
        return multipole_operator(basis, e, f"cos_z{K}*cos_z{Kp}")
    if kind == "cos3":
        e = multiply_expansions(multiply_expansions(cos_expansion("Z"), cos_expansion("Z")),
                                cos_expansion("Z"))
        return multipole_operator(basis, e, "cos^3_zZ")
    raise KeyError(key)


def direction_cosine(basis, K):
    """cos(theta_zK): molecular z axis against space axis K."""
    _check_axis(K)
    return _cached_multipole(basis, ("cos", K))


def cos_product(basis, K, Kp):
    """cos(theta_zK) cos(theta_zK'), exact rank-0 + rank-2 expansion."""
    _check_axis(K)
    _check_axis(Kp)
    K, Kp = sorted((K, Kp))
    return _cached_multipole(basis, ("cos2", K, Kp))


def cos_cubed(basis):
    """cos^3(theta_zZ) = (3 P1 + 2 P3) / 5; linear and symmetric tops only."""
    if basis.top is TopClass.ASYMMETRIC:
        raise ValueError("cos^3 operator is defined for linear/symmetric bases only")
    return _cached_multipole(basis, ("cos3",))


# ---------------------------------------------------------------------------
# Free Hamiltonians

def _check_spec_basis(spec, basis):
    top = spec.top
    if top is TopClass.LINEAR or basis.top is TopClass.LINEAR:
        ok = top is basis.top
    else:
        ok = top is basis.top or basis.top is TopClass.ASYMMETRIC
    if not ok:
        raise ValueError(f"rotor class {top.value} does not match basis class {basis.top.value}")


def asymmetric_hamiltonian(A, B, C, basis):
    """``A Jx^2 + B Jy^2 + C Jz^2`` in a |j,k,m> basis, k along the body z axis.

    Couples k <-> k +- 2 inside each (j, m) block.
    """
    if basis.top is TopClass.LINEAR:
        raise ValueError("asymmetric-top Hamiltonian needs a basis with k")
    j = basis.j.astype(float)
    k = basis.k.astype(float)
    jj = j * (j + 1)
    diag = 0.5 * (A + B) * (jj - k**2) + C * k**2
    rows, cols, vals = [], [], []
    lk, n = basis.lookup, basis.j_max
    for b, (jb, kb, mb) in enumerate(basis.states):
        if kb + 2 <= jb:
            a = int(lk[jb, kb + 2 + n, mb + n])
            x = jb * (jb + 1)
            v = 0.25 * (A - B) * math.sqrt(x - kb * (kb + 1)) * math.sqrt(x - (kb + 1) * (kb + 2))
            rows += [a, b]
            cols += [b, a]
            vals += [v, v]
    dim = basis.dim
    off = sp.coo_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(dim, dim))
    mat = (off + sp.diags(diag.astype(complex))).tocsr()
    sel = Selection(frozenset({0}), frozenset({-2, 0, 2}), frozenset({0}))
    return Operator(basis, mat, sel, "H0")


def free_hamiltonian(spec, basis):
    _check_spec_basis(spec, basis)
    j = basis.j.astype(float)
    k = basis.k.astype(float)
    jj = j * (j + 1)
    top = spec.top
    if basis.top is TopClass.ASYMMETRIC:
        return asymmetric_hamiltonian(spec.A, spec.B, spec.C, basis)
    if top is TopClass.LINEAR:
        e = spec.B * jj - spec.centrifugal_D * jj**2
    elif top is TopClass.PROLATE:
        e = spec.A * jj + (spec.C - spec.A) * k**2
    elif top is TopClass.OBLATE:
        e = spec.C * jj + (spec.A - spec.C) * k**2
    else:  # spherical
        e = spec.A * jj
    return diagonal_operator(basis, e, "H0")


# ---------------------------------------------------------------------------
# Field interactions

def _pairs():
    return [(K, Kp) for i, K in enumerate(AXES) for Kp in AXES[i + 1:]]


def resonant_interaction(spec, basis, E, keep_isotropic=True):
    """Instantaneous interaction for a field vector ``E = (E_X, E_Y, E_Z)``:

    ``-sum_K mu0 cos_K E_K - sum_K E_K^2/2 (da cos_K^2 + a_perp)
    - sum_{K<K'} E_K E_K' da cos_K cos_K'``.
    """
    E = np.asarray(E, dtype=float)
    if E.shape != (3,):
        raise ValueError("field vector needs three components")
    da = spec.delta_alpha
    H = zero_operator(basis)
    for i, K in enumerate(AXES):
        if E[i] == 0:
            continue
        if spec.mu0:
            H = H - spec.mu0 * E[i] * direction_cosine(basis, K)
        if da:
            H = H - 0.5 * E[i] ** 2 * da * cos_product(basis, K, K)
        if keep_isotropic and spec.alpha_perp:
            H = H - 0.5 * E[i] ** 2 * spec.alpha_perp * identity(basis)
    if da:
        for K, Kp in _pairs():
            c = E[AXES.index(K)] * E[AXES.index(Kp)]
            if c:
                H = H - c * da * cos_product(basis, K, Kp)
    return H


def averaged_interaction(spec, basis, envelopes, phases=(0.0, 0.0, 0.0), keep_isotropic=True):
    """Cycle-averaged polarizability interaction for envelopes (E_X, E_Y, E_Z)
    and carrier phases (phi_X, phi_Y, phi_Z).

    ``-1/4 sum_K E_K^2 (da cos_K^2 + a_perp)
    - 1/2 sum_{K<K'} E_K E_K' cos(phi_K - phi_K') da cos_K cos_K'``.
    """
    env = np.asarray(envelopes, dtype=float)
    ph = np.asarray(phases, dtype=float)
    if env.shape != (3,) or ph.shape != (3,):
        raise ValueError("envelopes and phases need three components")
    if np.any(env < 0):
        raise ValueError("envelope amplitudes must be >= 0")
    da = spec.delta_alpha
    H = zero_operator(basis)
    for i, K in enumerate(AXES):
        if env[i] == 0:
            continue
        if da:
            H = H - 0.25 * env[i] ** 2 * da * cos_product(basis, K, K)
        if keep_isotropic and spec.alpha_perp:
            H = H - 0.25 * env[i] ** 2 * spec.alpha_perp * identity(basis)
    if da:
        for K, Kp in _pairs():
            i, ip = AXES.index(K), AXES.index(Kp)
            c = env[i] * env[ip] * math.cos(ph[i] - ph[ip])
            # cos(pi/2) is ~6e-17 in floating point; circular polarization must
            # drop the cross term exactly.
            if abs(c) <= 1e-14 * env[i] * env[ip]:
                continue
            H = H - 0.5 * c * da * cos_product(basis, K, Kp)
    return H


def _require_linear(spec, basis):
    if spec.top is not TopClass.LINEAR or basis.top is not TopClass.LINEAR:
        raise ValueError("two-color interaction is defined for linear molecules")


def two_color_alignment_part(spec, basis, E1, E2, keep_isotropic=True):
    """``-1/4 (da cos^2 + a_perp)(E1^2 + E2^2)``."""
    _require_linear(spec, basis)
    s = E1**2 + E2**2
    H = zero_operator(basis)
    if spec.delta_alpha and s:
        H = H - 0.25 * s * spec.delta_alpha * cos_product(basis, "Z", "Z")
    if keep_isotropic and spec.alpha_perp and s:
        H = H - 0.25 * s * spec.alpha_perp * identity(basis)
    return H


def two_color_orientation_part(spec, basis, E1, E2, phi):
    """``-(cos(phi)/8) [(b_par - 3 b_perp) cos^3 + 3 b_perp cos] E1^2 E2``."""
    _require_linear(spec, basis)
    c = math.cos(phi)
    if abs(c) < 1e-15:  # phi = pi/2 exactly in intent
        c = 0.0
    pref = -c / 8.0 * E1**2 * E2
    H = zero_operator(basis)
    if pref == 0:
        return H
    b3 = spec.beta_par - 3.0 * spec.beta_perp
    if b3:
        H = H + pref * b3 * cos_cubed(basis)
    if spec.beta_perp:
        H = H + pref * 3.0 * spec.beta_perp * direction_cosine(basis, "Z")
    return H


def two_color_interaction(spec, basis, E1, E2, phi, keep_isotropic=True):
    """Cycle-averaged two-color (omega + 2 omega) interaction, Z-polarized."""
    if E1 < 0 or E2 < 0:
        raise ValueError("envelopes must be >= 0")
    return (two_color_alignment_part(spec, basis, E1, E2, keep_isotropic)
            + two_color_orientation_part(spec, basis, E1, E2, phi))
