"""Classical free rigid body: Euler equations, attitude, energy-momentum
diagram and tennis-racket flips.

Conventions: principal moments ``Ix >= Iy >= Iz``; body angular momentum
``J``, angular velocity ``Omega_k = J_k / I_k`` and ``dJ/dt = J x Omega``.
Attitude is integrated as a unit quaternion (body to space), so the Euler
angles are only read out, never integrated: the Euler-angle ODE is singular at
``theta = 0, pi`` and is kept here as ``euler_angle_rates`` for checks.

The rotation matrix ``R(theta, phi, chi)`` maps space components to body
components, ``v_body = R v_space``; its third row holds the direction cosines
of the body z axis and its third column gives ``J_body / J`` when J lies
along the space Z axis.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate
from scipy.spatial.transform import Rotation

from . import kernels
from .basis import build_basis
from .hamiltonian import asymmetric_hamiltonian


@dataclass(frozen=True)
class InertiaSpec:
    Ix: float
    Iy: float
    Iz: float

    def __post_init__(self):
        vals = (self.Ix, self.Iy, self.Iz)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("moments of inertia must be finite")
        if not (self.Ix >= self.Iy >= self.Iz >= 0) or self.Ix <= 0:
            raise ValueError("expected Ix >= Iy >= Iz >= 0 with Ix > 0")

    @property
    def moments(self):
        return np.array([self.Ix, self.Iy, self.Iz])

    @property
    def is_linear(self):
        return self.Iz == 0

    def energy(self, J):
        J = np.asarray(J, dtype=float)
        return 0.5 * np.sum(J**2 / self.moments, axis=-1)

    def characteristic_period(self, J):
        """``2 pi Iy / |J|``: rotation period about the intermediate axis."""
        return 2.0 * math.pi * self.Iy / float(np.linalg.norm(J))

    def rotational_constants(self):
        """Quantum constants ``(A, B, C) = 1 / (2 I)`` with hbar = 1."""
        if self.is_linear:
            raise ValueError("a linear top has no finite C")
        return 0.5 / self.Ix, 0.5 / self.Iy, 0.5 / self.Iz


def rotation_matrix(theta, phi, chi):
    """Space-to-body rotation ``R = R_z(chi) R_y(theta) R_z(phi)``."""
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp_ = math.cos(phi), math.sin(phi)
    cc, sc = math.cos(chi), math.sin(chi)
    return np.array([
        [cp * cc * ct - sp_ * sc, sp_ * cc * ct + cp * sc, -st * cc],
        [-cp * sc * ct - sp_ * cc, -sp_ * sc * ct + cp * cc, st * sc],
        [st * cp, st * sp_, ct],
    ])


def euler_from_matrix(R):
    """(theta, phi, chi) from a space-to-body rotation matrix."""
    theta = math.acos(max(-1.0, min(1.0, R[2, 2])))
    phi = math.atan2(R[2, 1], R[2, 0])
    chi = math.atan2(R[1, 2], -R[0, 2])
    return theta, phi, chi


def _quat_from_matrix(R):
    # scipy uses scalar-last (x, y, z, w); the kernels use scalar-first
    x, y, z, w = Rotation.from_matrix(R.T).as_quat()
    return np.array([w, x, y, z])


def _matrix_from_quat(q):
    w, x, y, z = q
    return Rotation.from_quat([x, y, z, w]).as_matrix().T


@dataclass(frozen=True)
class ClassicalState:
    J_body: np.ndarray
    euler: tuple = (0.0, 0.0, 0.0)

    @classmethod
    def from_euler(cls, J, theta, phi, chi):
        """State with angular momentum ``J`` along the space Z axis."""
        R = rotation_matrix(theta, phi, chi)
        return cls(J * R[:, 2], (theta, phi, chi))


def euler_angle_rates(inertia, J, euler):
    """Euler-angle derivatives for angular momentum ``J`` along space Z."""
    theta, phi, chi = euler
    ax, ay, az = 1.0 / inertia.Ix, 1.0 / inertia.Iy, 1.0 / inertia.Iz
    s2, c2 = math.sin(chi) ** 2, math.cos(chi) ** 2
    return np.array([
        J * (ay - ax) * math.sin(theta) * math.sin(chi) * math.cos(chi),
        J * (ay * s2 + ax * c2),
        J * (az - ay * s2 - ax * c2) * math.cos(theta),
    ])


@dataclass(frozen=True, eq=False)
class ClassicalTrajectory:
    times: np.ndarray
    J: np.ndarray
    quaternion: np.ndarray
    inertia: InertiaSpec
    n_steps: int
    n_rejected: int

    @property
    def euler(self):
        return np.array([euler_from_matrix(_matrix_from_quat(q)) for q in self.quaternion])

    @property
    def energy(self):
        return self.inertia.energy(self.J)

    @property
    def j2(self):
        return np.sum(self.J**2, axis=1)

    def drift(self):
        """Maximum relative drift of energy and |J|^2."""
        e, j2 = self.energy, self.j2
        return (float(np.max(np.abs(e - e[0])) / abs(e[0])),
                float(np.max(np.abs(j2 - j2[0])) / j2[0]))


def integrate_euler(inertia, state0, t_eval, tol=1e-12, max_steps=50_000_000):
    """Adaptive Dormand-Prince 5(4) integration of ``dJ/dt = J x Omega``
    together with the attitude quaternion, sampled exactly at ``t_eval``.

    ``tol`` is the relative tolerance (absolute tolerance ``tol * |J|``).
    """
    if inertia.is_linear:
        raise ValueError("linear tops (Iz = 0) cannot be integrated")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or t_eval.size < 1 or np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must be strictly increasing")
    J0 = np.asarray(state0.J_body, dtype=float)
    Jn = float(np.linalg.norm(J0))
    if Jn == 0:
        raise ValueError("|J| must be > 0")
    q0 = _quat_from_matrix(rotation_matrix(*state0.euler))
    y0 = np.concatenate([J0, q0])
    h0 = 0.01 * inertia.characteristic_period(J0)
    out, n_acc, n_rej = kernels.rigid_body_dp45(
        inertia.moments, y0, t_eval, tol, tol * Jn, h0, max_steps)
    return ClassicalTrajectory(t_eval, out[:, :3].copy(), out[:, 3:].copy(), inertia,
                               int(n_acc), int(n_rej))


# ---------------------------------------------------------------------------
# Energy-momentum diagram

def em_diagram(inertia, J_values):
    """Rows ``(J, E_min, E_sep, E_max)`` with ``E = J^2 / (2 I)`` for
    ``I = Ix, Iy, Iz``."""
    J = np.asarray(J_values, dtype=float)
    if np.any(J < 0) or not np.all(np.isfinite(J)):
        raise ValueError("J values must be finite and >= 0")
    half = 0.5 * J**2
    with np.errstate(divide="ignore"):
        e_max = half / inertia.Iz if inertia.Iz > 0 else np.where(J > 0, np.inf, 0.0)
    return np.column_stack([J, half / inertia.Ix, half / inertia.Iy, e_max])


def quantum_overlay(inertia, j_max):
    """Asymmetric-top levels placed at ``J = j + 1/2`` (hbar = 1).

    Returns rows ``(j, J, E)``, one per distinct level of each j shell (m
    degeneracy removed).
    """
    A, B, C = inertia.rotational_constants()
    basis = build_basis("asymmetric", j_max)
    H = asymmetric_hamiltonian(A, B, C, basis)
    rows = []
    for j in range(j_max + 1):
        idx = np.flatnonzero((basis.j == j) & (basis.m == 0))
        w = np.linalg.eigvalsh(H.matrix[idx][:, idx].toarray())
        rows += [(j, j + 0.5, float(e)) for e in w]
    return np.array(rows)


def classify(inertia, E, J):
    """'rotating', 'oscillating', 'separatrix' or 'forbidden'."""
    J2 = float(J) ** 2
    tol = 1e-12 * J2
    e_min = 0.5 * J2 / inertia.Ix
    e_sep = 0.5 * J2 / inertia.Iy
    e_max = 0.5 * J2 / inertia.Iz if inertia.Iz > 0 else math.inf
    if E < e_min - tol or E > e_max + tol:
        return "forbidden"
    if abs(E - e_sep) <= tol:
        return "separatrix"
    return "rotating" if E > e_sep else "oscillating"


# ---------------------------------------------------------------------------
# Tennis-racket effect

def tennis_racket_flips(trajectory, axis=1):
    """Times at which the body component ``J[axis]`` (default: intermediate
    axis y) changes sign, linearly interpolated between samples."""
    t = trajectory.times
    y = trajectory.J[:, axis]
    s = np.sign(y)
    idx = np.flatnonzero(s[:-1] * s[1:] < 0)
    return [float(t[i] - y[i] * (t[i + 1] - t[i]) / (y[i + 1] - y[i])) for i in idx]


def flip_period(flips):
    """Period of a flip train: flips alternate direction, so a full period
    spans two consecutive intervals."""
    if len(flips) < 3:
        raise ValueError("need at least three flips")
    f = np.asarray(flips)
    return float(np.mean(f[2:] - f[:-2]))


def _period_constants(inertia, J_body):
    J_body = np.asarray(J_body, dtype=float)
    ax, ay, az = 1.0 / inertia.moments
    J2 = float(np.sum(J_body**2))
    twoE = 2.0 * float(inertia.energy(J_body))
    c1, c2 = ay - ax, az - ay
    if c1 <= 0 or c2 <= 0:
        raise ValueError("elliptic period needs strictly ordered moments")
    u1 = math.sqrt(max(0.0, (twoE - ax * J2) / c1))
    u2 = math.sqrt(max(0.0, (az * J2 - twoE) / c2))
    ub, ubig = sorted((u1, u2))
    if ub == ubig:
        raise ValueError("initial condition lies on the separatrix")
    return c1, c2, ub, ubig


def elliptic_period(inertia, J_body):
    """Period of ``J_y(t)`` by quadrature of
    ``T = 4 int_0^{pi/2} ds / sqrt(c1 c2 (u_big^2 - u_b^2 sin^2 s))`` with
    ``c1 = 1/Iy - 1/Ix``, ``c2 = 1/Iz - 1/Iy`` and ``u_b < u_big`` the turning
    amplitudes of ``J_y`` obtained from E and |J|."""
    c1, c2, ub, ubig = _period_constants(inertia, J_body)

    def f(s):
        return 1.0 / math.sqrt(c1 * c2 * (ubig**2 - (ub * math.sin(s)) ** 2))

    val, _ = integrate.quad(f, 0.0, 0.5 * math.pi, epsabs=0.0, epsrel=1e-13, limit=500)
    return 4.0 * val
