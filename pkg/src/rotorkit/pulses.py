"""Pulse descriptions and the impulsive (sudden) kick propagator.

Every field-carrying pulse exposes ``couplings(spec, basis)``: a list of
``Coupling`` objects, each a set of fixed operators with time-dependent real
coefficients active inside a support window. The propagators only ever see
``H(t) = H0 + sum_i c_i(t) O_i``.

Envelopes are amplitude envelopes. A Gaussian with intensity FWHM ``fwhm`` is
``exp(-2 ln2 (t - t0)^2 / fwhm^2)`` and is cut at ``t0 +- 5 fwhm`` where its
value is ``2^-50 ~ 8.9e-16`` of the peak; the discarded fluence is below
``erfc(5 sqrt(4 ln 2)) ~ 1e-31`` of the total.
"""
from dataclasses import dataclass, field
import math
from typing import Callable
import warnings

import numpy as np
from scipy import integrate
from scipy.special import erf
import scipy.sparse as sp

from .hamiltonian import (
    AXES, Operator, Selection, averaged_interaction, cos_product, direction_cosine,
    identity, two_color_alignment_part, two_color_orientation_part,
)

LN2 = math.log(2.0)
SUPPORT_FWHM = 5.0


@dataclass(frozen=True)
class FieldSample:
    """Field record at one instant.

    ``values`` holds per-axis envelopes (averaged mode) or the instantaneous
    field (resonant mode); ``extra`` carries variant-specific values.
    """

    t: float
    mode: str
    values: tuple
    phases: tuple = (0.0, 0.0, 0.0)
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Coupling:
    operators: tuple
    coefficients: Callable
    window: tuple

    def active(self, t0, t1):
        """True if the window overlaps the open interval (t0, t1)."""
        return self.window[0] < t1 and self.window[1] > t0

    def coefficient_bound(self, n=2001):
        ts = np.linspace(self.window[0], self.window[1], n)
        vals = np.array([self.coefficients(t) for t in ts])
        return np.max(np.abs(vals), axis=0)


def _check_positive(**kw):
    for name, v in kw.items():
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be finite and > 0, got {v}")


def _check_finite(**kw):
    for name, v in kw.items():
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{name} must be finite")


def _triple(v, name):
    arr = tuple(float(x) for x in v)
    if len(arr) != 3:
        raise ValueError(f"{name} needs three components (X, Y, Z)")
    _check_finite(**{name: arr})
    return arr


def _resonant_couplings(spec, basis, field_fn, window, keep_isotropic=True):
    """Couplings for the instantaneous (non-averaged) interaction of a field
    ``field_fn(t) -> (E_X, E_Y, E_Z)``."""
    da = spec.delta_alpha
    probe = np.array([field_fn(t) for t in np.linspace(window[0], window[1], 257)])
    used = np.any(probe != 0, axis=0)
    ops, picks = [], []
    for i, K in enumerate(AXES):
        if not used[i]:
            continue
        if spec.mu0:
            ops.append(-spec.mu0 * direction_cosine(basis, K))
            picks.append((i,))
        quad = 0.0 * identity(basis)
        if da:
            quad = quad - 0.5 * da * cos_product(basis, K, K)
        if keep_isotropic and spec.alpha_perp:
            quad = quad - 0.5 * spec.alpha_perp * identity(basis)
        if da or (keep_isotropic and spec.alpha_perp):
            ops.append(quad)
            picks.append((i, i))
    if da:
        for i in range(3):
            for ip in range(i + 1, 3):
                if used[i] and used[ip]:
                    ops.append(-da * cos_product(basis, AXES[i], AXES[ip]))
                    picks.append((i, ip))
    if not ops:
        return []

    def coef(t):
        E = field_fn(t)
        return np.array([np.prod([E[i] for i in p]) for p in picks])

    return [Coupling(tuple(ops), coef, window)]


class _Pulse:
    mode = "averaged"

    @property
    def support(self):
        raise NotImplementedError

    def couplings(self, spec, basis, keep_isotropic=True):
        return []

    def kicks(self, spec, basis):
        return []

    def fluence(self):
        raise NotImplementedError


# ---------------------------------------------------------------------------

class _Envelope(_Pulse):
    """Shared logic for per-axis envelope pulses (Gaussian, Ramp)."""

    def shape(self, t):
        raise NotImplementedError

    def _shape_integral_sq(self):
        a, b = self.support
        val, _ = integrate.quad(lambda t: self.shape(t) ** 2, a, b, limit=200,
                                epsabs=0.0, epsrel=1e-13)
        return val

    def field_vector(self, t):
        g = self.shape(t)
        if self.mode == "averaged":
            return tuple(p * g for p in self.peak)
        return tuple(p * g * math.cos(self.omega * t + ph) for p, ph in zip(self.peak, self.phases))

    def sample(self, t):
        return FieldSample(float(t), self.mode, self.field_vector(t), self.phases)

    def couplings(self, spec, basis, keep_isotropic=True):
        if not any(self.peak):
            return []
        if self.mode == "averaged":
            op = averaged_interaction(spec, basis, self.peak, self.phases, keep_isotropic)
            if op.matrix.nnz == 0:
                return []
            return [Coupling((op,), lambda t: np.array([self.shape(t) ** 2]), self.support)]
        return _resonant_couplings(spec, basis, self.field_vector, self.support, keep_isotropic)

    def fluence(self):
        """``sum_K int E_K(t)^2 dt`` over the envelope."""
        return sum(p * p for p in self.peak) * self._shape_integral_sq()


@dataclass(frozen=True)
class GaussianEnvelope(_Envelope):
    """Gaussian pulse; ``fwhm`` is the intensity full width at half maximum.

    ``mode='averaged'`` uses the cycle-averaged polarizability interaction with
    per-axis carrier phases; ``mode='resonant'`` uses the instantaneous field
    ``E_K(t) = peak_K g(t) cos(omega t + phase_K)``.
    """

    t0: float
    fwhm: float
    peak: tuple = (0.0, 0.0, 1.0)
    phases: tuple = (0.0, 0.0, 0.0)
    mode: str = "averaged"
    omega: float = 0.0

    def __post_init__(self):
        _check_positive(fwhm=self.fwhm)
        _check_finite(t0=self.t0, omega=self.omega)
        object.__setattr__(self, "peak", _triple(self.peak, "peak"))
        object.__setattr__(self, "phases", _triple(self.phases, "phases"))
        if any(p < 0 for p in self.peak):
            raise ValueError("envelope amplitudes must be >= 0")
        if self.mode not in ("averaged", "resonant"):
            raise ValueError("mode must be 'averaged' or 'resonant'")

    @property
    def support(self):
        half = SUPPORT_FWHM * self.fwhm
        return (self.t0 - half, self.t0 + half)

    def shape(self, t):
        a, b = self.support
        if t < a or t > b:
            return 0.0
        x = (t - self.t0) / self.fwhm
        return math.exp(-2.0 * LN2 * x * x)

    def _shape_integral_sq(self):
        # int exp(-4 ln2 x^2) over |x| <= 5, times fwhm
        c = math.sqrt(4.0 * LN2)
        return self.fwhm * math.sqrt(math.pi) / c * erf(c * SUPPORT_FWHM)


@dataclass(frozen=True)
class Ramp(_Envelope):
    """Trapezoid envelope with sine-squared edges, starting at ``t0``.

    ``rise = fall = 0`` gives a rectangular pulse.
    """

    rise: float
    hold: float
    fall: float
    strength: float
    t0: float = 0.0
    axis: str = "Z"
    mode: str = "averaged"
    omega: float = 0.0

    def __post_init__(self):
        _check_positive(hold=self.hold)
        _check_finite(rise=self.rise, fall=self.fall, strength=self.strength, t0=self.t0)
        if self.rise < 0 or self.fall < 0:
            raise ValueError("rise and fall must be >= 0")
        if self.strength < 0:
            raise ValueError("strength must be >= 0")
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if self.mode not in ("averaged", "resonant"):
            raise ValueError("mode must be 'averaged' or 'resonant'")

    @property
    def peak(self):
        return tuple(self.strength if K == self.axis else 0.0 for K in AXES)

    @property
    def phases(self):
        return (0.0, 0.0, 0.0)

    @property
    def support(self):
        return (self.t0, self.t0 + self.rise + self.hold + self.fall)

    def shape(self, t):
        s = t - self.t0
        if s < 0 or s > self.rise + self.hold + self.fall:
            return 0.0
        if s < self.rise:
            return math.sin(0.5 * math.pi * s / self.rise) ** 2
        s -= self.rise
        if s <= self.hold:
            return 1.0
        s -= self.hold
        return math.cos(0.5 * math.pi * s / self.fall) ** 2

    def _shape_integral_sq(self):
        # sin^4 averages to 3/8 over a quarter period
        return self.hold + 0.375 * (self.rise + self.fall)


@dataclass(frozen=True)
class TwoColor(_Pulse):
    """Z-polarized omega + 2 omega pair under a common Gaussian envelope."""

    t0: float
    fwhm: float
    E1: float
    E2: float
    phi: float = 0.0
    mode = "two_color"

    def __post_init__(self):
        _check_positive(fwhm=self.fwhm)
        _check_finite(t0=self.t0, E1=self.E1, E2=self.E2, phi=self.phi)
        if self.E1 < 0 or self.E2 < 0:
            raise ValueError("envelopes must be >= 0")

    @property
    def envelope(self):
        return GaussianEnvelope(self.t0, self.fwhm, (0.0, 0.0, 1.0))

    @property
    def support(self):
        return self.envelope.support

    def sample(self, t):
        g = self.envelope.shape(t)
        return FieldSample(float(t), self.mode, (0.0, 0.0, g * self.E1),
                           extra={"E1": g * self.E1, "E2": g * self.E2, "phi": self.phi})

    def couplings(self, spec, basis, keep_isotropic=True):
        env = self.envelope
        out = []
        align = two_color_alignment_part(spec, basis, self.E1, self.E2, keep_isotropic)
        if align.matrix.nnz:
            out.append(Coupling((align,), lambda t: np.array([env.shape(t) ** 2]), env.support))
        orient = two_color_orientation_part(spec, basis, self.E1, self.E2, self.phi)
        if orient.matrix.nnz:
            out.append(Coupling((orient,), lambda t: np.array([env.shape(t) ** 3]), env.support))
        return out

    def fluence(self):
        return (self.E1**2 + self.E2**2) * self.envelope._shape_integral_sq()


@dataclass(frozen=True)
class HalfCycleTHz(_Pulse):
    """Unipolar sine-squared lobe of length ``duration`` starting at ``t0``.

    With ``zero_area`` an opposite-sign sine-squared tail of amplitude
    ``amplitude / tail_ratio`` and length ``tail_ratio * duration`` follows, so
    the net area vanishes. The field enters the resonant interaction (dipole
    and polarizability terms); ``amplitude`` is in the same field unit as the
    coupling constants of the rotor.
    """

    amplitude: float
    duration: float
    t0: float = 0.0
    axis: str = "Z"
    zero_area: bool = False
    tail_ratio: float = 5.0
    mode = "resonant"

    def __post_init__(self):
        _check_positive(duration=self.duration, tail_ratio=self.tail_ratio)
        _check_finite(amplitude=self.amplitude, t0=self.t0)
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")

    @property
    def support(self):
        end = self.duration * (1.0 + self.tail_ratio) if self.zero_area else self.duration
        return (self.t0, self.t0 + end)

    def value(self, t):
        s = t - self.t0
        d = self.duration
        if 0.0 <= s <= d:
            return self.amplitude * math.sin(math.pi * s / d) ** 2
        if self.zero_area and d < s <= d * (1.0 + self.tail_ratio):
            r = self.tail_ratio
            return -self.amplitude / r * math.sin(math.pi * (s - d) / (r * d)) ** 2
        return 0.0

    def area(self):
        # each sine-squared lobe contributes half its height times its length
        a = 0.5 * self.amplitude * self.duration
        return 0.0 if self.zero_area else a

    def field_vector(self, t):
        v = self.value(t)
        return tuple(v if K == self.axis else 0.0 for K in AXES)

    def sample(self, t):
        return FieldSample(float(t), self.mode, self.field_vector(t))

    def couplings(self, spec, basis, keep_isotropic=True):
        if self.amplitude == 0:
            return []
        return _resonant_couplings(spec, basis, self.field_vector, self.support, keep_isotropic)

    def fluence(self):
        # sin^4 averages to 3/8
        e = 0.375 * self.amplitude**2 * self.duration
        if self.zero_area:
            e += 0.375 * (self.amplitude / self.tail_ratio) ** 2 * self.tail_ratio * self.duration
        return e


@dataclass(frozen=True)
class KickTrain(_Pulse):
    """``count`` impulsive Z-polarized kicks ``exp(i P cos^2)`` at
    ``t0 + n * period``."""

    period: float
    count: int
    P: float
    t0: float = 0.0
    mode = "kick"

    def __post_init__(self):
        _check_finite(P=self.P, t0=self.t0)
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if self.count > 1:
            _check_positive(period=self.period)

    @property
    def times(self):
        return [self.t0 + n * self.period for n in range(self.count)]

    @property
    def support(self):
        ts = self.times or [self.t0]
        return (ts[0], ts[-1])

    def sample(self, t):
        hit = any(t == tk for tk in self.times)
        return FieldSample(float(t), self.mode, (0.0, 0.0, 0.0),
                           extra={"kick": self.P if hit else 0.0})

    def kicks(self, spec, basis):
        if self.P == 0 or self.count == 0:
            return []
        U = sudden_propagator(basis, self.P)
        return [(t, U) for t in self.times]

    def fluence(self):
        """Kicks carry no sampled field; ``count * |P|`` is reported instead."""
        return self.count * abs(self.P)


# ---------------------------------------------------------------------------

def sample(pulse, t):
    """Field record of ``pulse`` at time ``t`` (zero outside its support)."""
    return pulse.sample(t)


def pulse_energy(pulses):
    """Total fluence ``sum int E^2 dt`` of a pulse or list of pulses."""
    if isinstance(pulses, _Pulse):
        pulses = [pulses]
    return float(sum(p.fluence() for p in pulses))


def kick_strength(pulse, spec, warn=True):
    """Dimensionless kick ``P = (da / 4) int E(t)^2 dt`` of a linearly
    polarized averaged-mode envelope pulse."""
    if not isinstance(pulse, _Envelope) or pulse.mode != "averaged":
        raise ValueError("kick strength is defined for averaged-mode envelope pulses")
    if sum(1 for p in pulse.peak if p) > 1:
        raise ValueError("kick strength needs a linearly polarized pulse along one axis")
    if warn:
        a, b = pulse.support
        width = pulse.fwhm if isinstance(pulse, GaussianEnvelope) else b - a
        finite = [c for c in (spec.A, spec.B, spec.C) if math.isfinite(c)]
        period = math.pi / max(finite)
        if width > 0.1 * period:
            warnings.warn(f"pulse width {width:g} ps is not short against the rotational "
                          f"time scale {period:g} ps; the sudden limit is questionable")
    return 0.25 * spec.delta_alpha * pulse.fluence()


def sudden_propagator(basis, P, axis="Z"):
    """``exp(i P cos^2(theta_zK))`` built by diagonalizing the cos^2 matrix in
    each invariant block. Unitary to rounding."""
    _check_finite(P=P)
    c2 = cos_product(basis, axis, axis)
    n = basis.dim
    if axis == "Z":
        blocks = list(basis.km_index.values())
    else:
        blocks = [np.arange(n)]
    rows, cols, vals = [], [], []
    for idx in blocks:
        sub = c2.matrix[idx][:, idx].toarray()
        w, v = np.linalg.eigh(sub)
        u = (v * np.exp(1j * P * w)) @ v.conj().T
        r, c = np.meshgrid(idx, idx, indexing="ij")
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(u.ravel())
    mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n))
    # powers of an even-rank operator reach every even dj
    dj = frozenset(range(-2 * basis.j_max, 2 * basis.j_max + 1, 2))
    if axis == "Z":
        sel = Selection(dj, frozenset({0}), frozenset({0}))
    else:
        sel = Selection(dj, frozenset(range(-2 * basis.j_max, 2 * basis.j_max + 1, 2)),
                        frozenset(range(-2 * basis.j_max, 2 * basis.j_max + 1, 2)))
    return Operator(basis, mat, sel, f"kick(P={P:g})", hermitian=False)
