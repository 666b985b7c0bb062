"""gmcal: simulation and intensity-only calibration of FFT-butterfly optical networks.

Modules
-------
network    transfer-matrix construction (ideal / Hadamard / Butler / custom)
codebook   analytic codebook extraction, verification, gauge handling
device     stateful intensity-only device model with bench-grade noise
calibrate  GBNM and systematic sweep learners, 2-D error-space scans
cli        command-line front end (``gmcal``)
"""

from .network import (
    CouplerSpec,
    IDEAL_COUPLER,
    NetworkSpec,
    build_butler,
    build_hadamard,
    build_ideal,
    build_with_errors,
    butler_spec,
    coupler_matrix,
    hadamard_spec,
    ideal_spec,
    random_error_spec,
    shuffle_stage,
    transfer_matrix,
    unitarity_residual,
)
from .codebook import (
    Codebook,
    Codeword,
    SingularMatrixError,
    codeword_distance,
    extract_codebook,
    gauge_normalize,
    verify_codebook,
    wrap_angle,
)
from .device import (
    DeviceModel,
    DeviceState,
    IntensityReading,
    NoiseConfig,
    PhaseBoundsError,
    noise_preset,
)
from .calibrate import (
    CalibrationResult,
    ConvergenceTrace,
    DegenerateInterferenceError,
    GbnmConfig,
    ScanGrid,
    SweepStep,
    calibrate_codebook,
    default_systematic_mapping,
    evaluate_objective,
    gbnm_calibrate,
    minima_per_cell,
    periodicity_residual,
    scan_error_space,
    strict_local_minima,
    systematic_calibrate,
)

__version__ = "0.1.0"

__all__ = [
    "CouplerSpec",
    "IDEAL_COUPLER",
    "NetworkSpec",
    "build_butler",
    "build_hadamard",
    "build_ideal",
    "build_with_errors",
    "butler_spec",
    "coupler_matrix",
    "hadamard_spec",
    "ideal_spec",
    "random_error_spec",
    "shuffle_stage",
    "transfer_matrix",
    "unitarity_residual",
    "Codebook",
    "Codeword",
    "SingularMatrixError",
    "codeword_distance",
    "extract_codebook",
    "gauge_normalize",
    "verify_codebook",
    "wrap_angle",
    "DeviceModel",
    "DeviceState",
    "IntensityReading",
    "NoiseConfig",
    "PhaseBoundsError",
    "noise_preset",
    "CalibrationResult",
    "ConvergenceTrace",
    "DegenerateInterferenceError",
    "GbnmConfig",
    "ScanGrid",
    "SweepStep",
    "calibrate_codebook",
    "default_systematic_mapping",
    "evaluate_objective",
    "gbnm_calibrate",
    "minima_per_cell",
    "periodicity_residual",
    "scan_error_space",
    "strict_local_minima",
    "systematic_calibrate",
    "__version__",
]
