"""Frequency-domain localization of uniformly moving tonal sound sources.

The pipeline: simulate (or load) microphone-array recordings of a tone
moving at constant speed, build the leakage-aware transfer matrix between
a moving source grid and selected DFT bins, invert it with L-curve
regularized Tikhonov least squares, and reduce the solution to source maps
and beamwidth metrics.
"""

from .errors import (
    ConfigurationError,
    DomainError,
    EvaluationError,
    KernelCollarSignal,
    LCurveError,
    QuadratureError,
    WindowCoverageError,
)
from .estimator import MovingSourceLocalizer
from .inverse import (
    ObservationVector,
    RegularizationResult,
    TikhonovInverse,
    lcurve_corner,
    solve_pipeline,
    tikhonov_solve,
)
from .kernels import Kernel2D, evanescent_kernel, hankel0_h1, q2d
from .mapping import (
    BeamwidthReport,
    SourceMap,
    beamwidth,
    beamwidth_report,
    find_peak,
    sidelobe_period,
    to_source_map,
)
from .scenario import (
    GroundPlane,
    Medium,
    MicArray,
    MotionSpec,
    Scenario,
    SourceGrid,
    analysis_band,
    doppler_band,
    load_array_file,
    make_source_grid,
    make_spiral_array,
    scenario_from_config,
)
from .simulate import (
    NoiseSpec,
    Recording,
    SignalSpec,
    add_noise,
    add_stabilization_noise,
    load_recording,
    record_array,
    record_with_positions,
    retarded_time,
    save_recording,
    simulate_pressure,
)
from .spectral import (
    BinSelection,
    Window,
    available_bins,
    decay_limits,
    select_bins,
    stft_matrix,
    window_dtft,
    windowed_dft,
)
from .transfer import (
    QuadratureSpec,
    TransferMatrix,
    assemble,
    limit_transfer_entry,
    load_transfer,
    predicted_period,
    save_transfer,
    transfer_entry,
)

__version__ = "0.1.0"

__all__ = [
    "BeamwidthReport",
    "BinSelection",
    "ConfigurationError",
    "DomainError",
    "EvaluationError",
    "GroundPlane",
    "Kernel2D",
    "KernelCollarSignal",
    "LCurveError",
    "Medium",
    "MicArray",
    "MotionSpec",
    "MovingSourceLocalizer",
    "NoiseSpec",
    "ObservationVector",
    "QuadratureError",
    "QuadratureSpec",
    "Recording",
    "RegularizationResult",
    "Scenario",
    "SignalSpec",
    "SourceGrid",
    "SourceMap",
    "TikhonovInverse",
    "TransferMatrix",
    "Window",
    "WindowCoverageError",
    "add_noise",
    "add_stabilization_noise",
    "analysis_band",
    "assemble",
    "available_bins",
    "beamwidth",
    "beamwidth_report",
    "decay_limits",
    "doppler_band",
    "evanescent_kernel",
    "find_peak",
    "hankel0_h1",
    "lcurve_corner",
    "limit_transfer_entry",
    "load_array_file",
    "load_recording",
    "load_transfer",
    "make_source_grid",
    "make_spiral_array",
    "predicted_period",
    "q2d",
    "record_array",
    "record_with_positions",
    "retarded_time",
    "save_recording",
    "save_transfer",
    "scenario_from_config",
    "select_bins",
    "sidelobe_period",
    "simulate_pressure",
    "solve_pipeline",
    "stft_matrix",
    "tikhonov_solve",
    "to_source_map",
    "transfer_entry",
    "window_dtft",
    "windowed_dft",
]
