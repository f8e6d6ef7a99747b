"""Bell tests with heralded entanglement between quantum-dot photons.

Models partially distinguishable photons (dephasing plus a slow spectral
detuning), the heralding station with threshold detectors, the local
polarization measurements and the resulting CHSH statistics.  A brute-force
Fock-space simulator in :mod:`qdbell.fock_oracle` serves as ground truth.
"""

from .chsh import ChshResult, ProtocolParams, chsh_value, runs_needed
from .model import ChshSettings, MeasurementSettings, SetupParams
from .noise import IndistMoments, NoiseParams, PurityParams, moment_table
from .optimize import OptimizeConfig, Scenario, ThresholdQuery, optimize_angles, optimize_transmittance, threshold

__all__ = [
    "ChshResult",
    "ChshSettings",
    "IndistMoments",
    "MeasurementSettings",
    "NoiseParams",
    "OptimizeConfig",
    "ProtocolParams",
    "PurityParams",
    "Scenario",
    "SetupParams",
    "ThresholdQuery",
    "chsh_value",
    "moment_table",
    "optimize_angles",
    "optimize_transmittance",
    "runs_needed",
    "threshold",
]

__version__ = "0.1.0"
