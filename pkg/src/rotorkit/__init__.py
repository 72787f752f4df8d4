"""rotorkit: quantum and classical rigid-rotor dynamics in external fields.

Build a ``RotorSpec`` and a ``BasisSet``, assemble operators and pulses, and
propagate states with ``propagate_schrodinger``, ``propagate_lvn`` or
``propagate_lindblad``. Numerical kernels come from a compiled extension when
available and from pure Python otherwise (see ``rotorkit.kernels``).
"""
__version__ = "0.1.0"

from .basis import BasisSet, TopClass, build_basis, m_block  # noqa: E402
from .dynamics import (  # noqa: E402
    Drive, PositivityError, QuantumState, StepSizeError, TruncationError, Trajectory,
    load_state, propagate_lindblad, propagate_lvn, propagate_schrodinger, save_state,
    thermal_state,
)
from .hamiltonian import (  # noqa: E402
    Operator, RotorSpec, cos_cubed, cos_product, direction_cosine, free_hamiltonian,
)
from .kernels import available_backends, use_backend  # noqa: E402
from .observables import alignment_record, detect_features, expectation  # noqa: E402
from .pulses import (  # noqa: E402
    GaussianEnvelope, HalfCycleTHz, KickTrain, Ramp, TwoColor, sudden_propagator,
)

__all__ = [
    "__version__", "BasisSet", "TopClass", "build_basis", "m_block", "Drive",
    "PositivityError", "QuantumState", "StepSizeError", "TruncationError", "Trajectory",
    "load_state", "propagate_lindblad", "propagate_lvn", "propagate_schrodinger",
    "save_state", "thermal_state",
    "Operator", "RotorSpec", "cos_cubed", "cos_product", "direction_cosine",
    "free_hamiltonian", "available_backends", "use_backend", "alignment_record",
    "detect_features", "expectation", "GaussianEnvelope", "HalfCycleTHz", "KickTrain",
    "Ramp", "TwoColor", "sudden_propagator",
]
