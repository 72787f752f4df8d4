"""Angular-momentum primitives: 3-j symbols, Wigner d/D functions and an
Euler-angle quadrature used as an independent check of matrix elements.

Conventions
-----------
``D^j_{mk}(phi, theta, chi) = exp(-i m phi) d^j_{mk}(theta) exp(-i k chi)``,
and the rotor wavefunctions are
``<phi, theta, chi | j, k, m> = sqrt((2j+1) / (8 pi^2)) conj(D^j_{mk})``,
which are orthonormal over the full Euler volume ``8 pi^2``.

Only integer angular momenta are supported; ``JMAX_CAP`` bounds the
log-factorial table (j1 + j2 + j3 <= 4 * JMAX_CAP).
"""
from functools import lru_cache
from numbers import Integral

import numpy as np

from . import kernels

JMAX_CAP = kernels.JMAX_CAP
EULER_VOLUME = 8.0 * np.pi**2


def _check_int(*values):
    for v in values:
        if not isinstance(v, Integral):
            raise TypeError(f"quantum numbers must be integers, got {v!r}")


def three_j(j1, j2, j3, m1, m2, m3):
    """Wigner 3-j symbol ``(j1 j2 j3; m1 m2 m3)`` from the Racah formula.

    Returns 0.0 whenever a selection rule fails (m-sum, triangle, |m| > j).
    Negative ``j`` values are malformed input and raise ``ValueError``.

    >>> round(three_j(1, 1, 0, 0, 0, 0), 10)
    -0.5773502692
    """
    _check_int(j1, j2, j3, m1, m2, m3)
    if j1 < 0 or j2 < 0 or j3 < 0:
        raise ValueError("angular momenta must be non-negative")
    if j1 + j2 + j3 > 4 * JMAX_CAP:
        raise ValueError(f"j1 + j2 + j3 exceeds table cap {4 * JMAX_CAP}")
    return float(kernels.three_j(int(j1), int(j2), int(j3), int(m1), int(m2), int(m3)))


def _check_jmk(j, m, k):
    _check_int(j, m, k)
    if j < 0 or abs(m) > j or abs(k) > j:
        raise ValueError(f"invalid quantum numbers j={j}, m={m}, k={k}")
    if j > JMAX_CAP:
        raise ValueError(f"j={j} exceeds JMAX_CAP={JMAX_CAP}")


def wigner_small_d(j, m, k, theta):
    """Reduced rotation matrix element ``d^j_{mk}(theta)``.

    ``theta`` may be a scalar or an array; the result has the same shape.
    """
    _check_jmk(j, m, k)
    out = kernels.small_d(int(j), int(m), int(k), np.asarray(theta, dtype=float))
    return float(out) if np.ndim(theta) == 0 else out


def wigner_D(j, m, k, phi, theta, chi):
    """``D^j_{mk}(phi, theta, chi) = e^{-i m phi} d^j_{mk}(theta) e^{-i k chi}``."""
    _check_jmk(j, m, k)
    phi, theta, chi = np.broadcast_arrays(
        np.asarray(phi, float), np.asarray(theta, float), np.asarray(chi, float)
    )
    d = kernels.small_d(int(j), int(m), int(k), theta)
    out = np.exp(-1j * m * phi) * d * np.exp(-1j * k * chi)
    return complex(out) if out.ndim == 0 else out


@lru_cache(maxsize=32)
def euler_nodes(band):
    """Product quadrature over (phi, theta, chi) for integrands of total
    angular band limit ``band``.

    Gauss-Legendre in ``cos(theta)`` with ``band // 2 + 2`` nodes (exact for
    polynomials of degree ``band + 3``) and ``band + 2`` uniform nodes in each
    azimuth (exact for frequencies ``|n| <= band + 1``).

    Returns flattened ``(phi, theta, chi, weight)`` arrays; weights sum to 8 pi^2.
    """
    if band < 0:
        raise ValueError("band must be non-negative")
    n_theta = band // 2 + 2
    n_az = band + 2
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x)
    az = 2.0 * np.pi * np.arange(n_az) / n_az
    w_az = 2.0 * np.pi / n_az
    P, T, C = np.meshgrid(az, theta, az, indexing="ij")
    W = np.broadcast_to(wx[None, :, None] * w_az * w_az, P.shape)
    arrays = tuple(np.ascontiguousarray(a.ravel()) for a in (P, T, C, W))
    for a in arrays:
        a.setflags(write=False)
    return arrays


def euler_quadrature(f, band=8):
    """Integrate ``f(phi, theta, chi)`` over the Euler volume with measure
    ``sin(theta) dtheta dphi dchi``.

    ``f`` must accept broadcastable arrays. The rule is exact (to rounding) for
    band-limited integrands whose total angular order is at most ``band``.
    """
    phi, theta, chi, w = euler_nodes(int(band))
    values = np.asarray(f(phi, theta, chi))
    total = np.sum(w * values)
    return complex(total)


def wavefunctions(states, phi, theta, chi):
    """Rotor wavefunctions at the given nodes, shape ``(len(states), n_nodes)``."""
    states = np.asarray(states, dtype=int).reshape(-1, 3)
    out = np.empty((states.shape[0], np.size(theta)), dtype=complex)
    d_cache = {}
    for i, (j, k, m) in enumerate(states):
        key = (j, m, k)
        if key not in d_cache:
            d_cache[key] = kernels.small_d(int(j), int(m), int(k), theta)
        norm = np.sqrt((2 * j + 1) / EULER_VOLUME)
        out[i] = norm * np.exp(1j * m * phi) * d_cache[key] * np.exp(1j * k * chi)
    return out


def quadrature_matrix(states, f, band):
    """Matrix ``<a| f |b>`` over the listed |j,k,m> states by direct quadrature.

    This is the reference path for all analytic matrix elements: it never
    touches 3-j symbols, only the wavefunctions and ``f`` itself.
    """
    phi, theta, chi, w = euler_nodes(int(band))
    psi = wavefunctions(states, phi, theta, chi)
    fw = w * np.asarray(f(phi, theta, chi))
    return (psi.conj() * fw) @ psi.T
