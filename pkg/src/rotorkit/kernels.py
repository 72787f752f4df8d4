"""Backend selection for the numerical kernels.

The compiled extension (``rotorkit._ckernels``) is used when it imports;
otherwise the pure-Python module is used. Set ``ROTORKIT_PURE_PYTHON=1`` to
force the fallback. ``use_backend`` switches at runtime (tests, benchmarks).
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels

JMAX_CAP = _pykernels.JMAX_CAP

_active = None
BACKEND = ""


def use_backend(name):
    """Activate ``"compiled"`` or ``"python"``; returns the previous name."""
    global _active, BACKEND
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} not available (have {sorted(BACKENDS)})")
    previous = BACKEND
    _active = BACKENDS[name]
    BACKEND = name
    return previous


def available_backends():
    return sorted(BACKENDS)


def three_j(j1, j2, j3, m1, m2, m3):
    return _active.three_j(j1, j2, j3, m1, m2, m3)


def small_d(j, m, k, theta):
    return _active.small_d(j, m, k, theta)


def multipole_upper(states, lookup, jmax, terms_L, terms_p, terms_q, coef):
    return _active.multipole_upper(states, lookup, jmax, terms_L, terms_p, terms_q, coef)


def rigid_body_dp45(inertia, y0, t_eval, rtol, atol, h0, max_steps):
    return _active.rigid_body_dp45(inertia, y0, t_eval, rtol, atol, h0, max_steps)


if os.environ.get("ROTORKIT_PURE_PYTHON", "0") == "1" or _ckernels is None:
    use_backend("python")
else:
    use_backend("compiled")
