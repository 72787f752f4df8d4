"""Expectation values, alignment records, angular densities and feature
detection on time signals."""
from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp
from scipy.signal import find_peaks

from . import kernels
from .basis import TopClass
from .dynamics import Trajectory
from .hamiltonian import AXES, Operator, cos_product, direction_cosine, free_hamiltonian, j_squared

ORIENTED_THRESHOLD = 0.9
PLANAR_THRESHOLD = 0.1


def expectation(op, state):
    """``<psi|O|psi>`` or ``Tr(rho O)``; real for Hermitian operators."""
    if not op.basis.same_as(state.basis):
        raise ValueError("operator and state live on different bases")
    if state.is_pure:
        v = complex(np.vdot(state.vector, op.matrix @ state.vector))
    else:
        v = 0j
        for idx, r in state.blocks:
            # only the diagonal blocks of O meet a block-diagonal rho
            v += np.sum(op.matrix[idx][:, idx].toarray().T * r)
        v = complex(v)
    return v.real if op.hermitian else v


def projector(state, label="projector"):
    """``|psi><psi|`` as an operator (fidelity observable)."""
    if not state.is_pure:
        raise ValueError("projector needs a pure state")
    v = sp.csr_matrix(state.vector.reshape(-1, 1))
    return Operator(state.basis, (v @ v.conj().T).tocsr(), label=label)


def alignment_operators(spec, basis):
    """Operators behind every alignment-record column, keyed by column name."""
    ops = {}
    for K in AXES:
        ops[f"cos_{K.lower()}"] = direction_cosine(basis, K)
    for K in AXES:
        ops[f"cos2_{K.lower()}"] = cos_product(basis, K, K)
    ops["energy"] = free_hamiltonian(spec, basis)
    ops["j2"] = j_squared(basis)
    return ops


@dataclass(frozen=True)
class AlignmentRecord:
    cos: dict
    cos2: dict
    energy: float
    j2: float
    t: float = None
    planar_threshold: float = PLANAR_THRESHOLD
    oriented_threshold: float = ORIENTED_THRESHOLD

    @property
    def sumrule_residual(self):
        return sum(self.cos2.values()) - 1.0

    @property
    def planar(self):
        """Axes along which the molecule is planar-aligned (small <cos^2>)."""
        return [K for K in AXES if self.cos2[K] <= self.planar_threshold]

    @property
    def oriented(self):
        return [K for K in AXES if abs(self.cos[K]) >= self.oriented_threshold]

    def row(self):
        return {
            "cos_x": self.cos["X"], "cos_y": self.cos["Y"], "cos_z": self.cos["Z"],
            "cos2_x": self.cos2["X"], "cos2_y": self.cos2["Y"], "cos2_z": self.cos2["Z"],
            "energy": self.energy, "j2": self.j2, "sumrule_residual": self.sumrule_residual,
        }


def _record_from_values(vals, t=None, **kw):
    return AlignmentRecord(
        cos={K: vals[f"cos_{K.lower()}"] for K in AXES},
        cos2={K: vals[f"cos2_{K.lower()}"] for K in AXES},
        energy=vals["energy"], j2=vals["j2"], t=t, **kw)


def alignment_record(state, spec, basis=None, planar_threshold=PLANAR_THRESHOLD,
                     oriented_threshold=ORIENTED_THRESHOLD):
    basis = state.basis if basis is None else basis
    vals = {k: expectation(op, state) for k, op in alignment_operators(spec, basis).items()}
    return _record_from_values(vals, planar_threshold=planar_threshold,
                               oriented_threshold=oriented_threshold)


def alignment_series(trajectory, **kw):
    """Alignment records from a trajectory recorded with ``alignment_operators``."""
    recs = trajectory.records
    return [
        _record_from_values({k: float(recs[k][i]) for k in recs}, t=float(t), **kw)
        for i, t in enumerate(trajectory.times)
    ]


def angular_distribution(state, theta_grid, phi_grid):
    """Probability density ``rho(theta, phi)`` of the molecular axis on the
    sphere, shape ``(len(theta_grid), len(phi_grid))``; integrates to 1 with the
    ``sin(theta) dtheta dphi`` measure."""
    basis = state.basis
    if basis.top is not TopClass.LINEAR:
        raise ValueError("angular distributions are provided for linear rotors only")
    theta = np.asarray(theta_grid, dtype=float)
    phi = np.asarray(phi_grid, dtype=float)
    T, F = np.meshgrid(theta, phi, indexing="ij")

    def harmonics(idx):
        out = np.empty((len(idx),) + T.shape, dtype=complex)
        for r, i in enumerate(idx):
            j, _, m = basis.state_at(i)
            d = kernels.small_d(j, m, 0, T.ravel()).reshape(T.shape)
            out[r] = math.sqrt((2 * j + 1) / (4 * math.pi)) * np.exp(1j * m * F) * d
        return out

    if state.is_pure:
        idx = np.flatnonzero(state.vector)
        amp = np.tensordot(state.vector[idx], harmonics(idx), axes=1)
        return np.abs(amp) ** 2
    dens = np.zeros(T.shape)
    for idx, r in state.blocks:
        Y = harmonics(idx).reshape(len(idx), -1)
        dens += np.real(np.einsum("ag,ab,bg->g", Y, r, Y.conj())).reshape(T.shape)
    return dens


# ---------------------------------------------------------------------------
# Features

@dataclass(frozen=True)
class Feature:
    time: float
    value: float
    kind: str
    prominence: float


def detect_features(trajectory, signal=None, prominence=None, rel_prominence=0.1,
                    noise_floor=1e-12, kinds=("peak", "trough")):
    """Local extrema of a recorded signal.

    ``trajectory`` is a ``Trajectory`` (with ``signal`` naming a record) or a
    ``(times, values)`` pair. The default prominence is ``rel_prominence`` times
    the signal range; signals flatter than ``noise_floor`` have no features.
    """
    if isinstance(trajectory, Trajectory):
        if signal is None:
            raise ValueError("name the signal to analyse")
        times, values = trajectory.times, trajectory.records[signal]
    else:
        times, values = (np.asarray(a, dtype=float) for a in trajectory)
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape:
        raise ValueError("times and values differ in length")
    span = float(values.max() - values.min()) if values.size else 0.0
    if span <= noise_floor:
        return []
    prom = rel_prominence * span if prominence is None else prominence
    out = []
    if "peak" in kinds:
        idx, props = find_peaks(values, prominence=prom)
        out += [Feature(float(times[i]), float(values[i]), "peak", float(p))
                for i, p in zip(idx, props["prominences"])]
    if "trough" in kinds:
        idx, props = find_peaks(-values, prominence=prom)
        out += [Feature(float(times[i]), float(values[i]), "trough", float(p))
                for i, p in zip(idx, props["prominences"])]
    return sorted(out, key=lambda f: (f.time, f.kind))


@dataclass(frozen=True)
class EchoReport:
    """Two-kick echo analysis inside a window around ``2 tau``.

    ``residual = S12 - S1 - S2 + S0`` (two-kick signal minus both single-kick
    responses, baseline restored); ``control = S1 - S0``. Amplitudes are
    peak-to-peak inside the window, so a constant offset (the permanent
    alignment left by a kick on a thermal ensemble) does not count as a
    feature.
    """

    tau: float
    window: tuple
    echo_time: float
    echo_amplitude: float
    control_amplitude: float
    features: list = field(default_factory=list)
    residual: np.ndarray = field(default=None, repr=False)

    @property
    def ratio(self):
        if self.control_amplitude == 0:
            return math.inf
        return self.echo_amplitude / self.control_amplitude


def echo_analysis(times, s12, s1, s2, s0, tau, window=(1.8, 2.2), rel_prominence=0.1):
    times = np.asarray(times, dtype=float)
    s12, s1, s2 = (np.asarray(a, dtype=float) for a in (s12, s1, s2))
    s0 = np.broadcast_to(np.asarray(s0, dtype=float), times.shape)
    residual = s12 - s1 - s2 + s0
    control = s1 - s0
    lo, hi = window[0] * tau, window[1] * tau
    w = (times >= lo) & (times <= hi)
    if not w.any():
        raise ValueError("echo window contains no samples")
    rw = residual[w]
    i = np.argmax(np.abs(rw - np.median(rw)))
    feats = [f for f in detect_features((times, residual), rel_prominence=rel_prominence)
             if lo <= f.time <= hi]
    return EchoReport(
        tau=float(tau), window=(lo, hi), echo_time=float(times[w][i]),
        echo_amplitude=float(np.ptp(rw)),
        control_amplitude=float(np.ptp(control[w])),
        features=feats, residual=residual)
