"""Identification and control toolkit for cross-directional slot-die coating."""

__version__ = "0.1.0"

from .control import (
    ClosedLoopResult,
    DivergenceError,
    ImcController,
    PController,
    SurrogateLoopPlant,
    TruthLoopPlant,
    design_imc,
    design_p,
    shape_reference,
    simulate_closed_loop,
)
from .core import (
    Geometry,
    LogFormatError,
    OperatingPoint,
    SignalLog,
    default_geometry,
    read_log_csv,
    to_absolute,
    to_deviation,
    write_log_csv,
)
from .dynamics import DiscreteFilter, ScalarSurrogate, discretize_zoh, simulate_mimo, surrogate_from_geometry
from .estimators import KernelCalibrator, SurrogateIdentifier
from .ident import FitReport, PrbsSpec, design_prbs, estimate_delay, fit_H, fit_siso, validate
from .kernelmap import CalibrationResult, CrossGain, KernelParams, build_h_pde, calibrate, kappa_star
from .numerics import ConvergenceError, IllConditionedError, NumericalError
from .truthplant import TruthPlantConfig, TruthPlantState, dc_sensitivity, run_experiment

__all__ = [
    "CalibrationResult",
    "ClosedLoopResult",
    "ConvergenceError",
    "CrossGain",
    "DiscreteFilter",
    "DivergenceError",
    "FitReport",
    "Geometry",
    "IllConditionedError",
    "ImcController",
    "KernelCalibrator",
    "KernelParams",
    "LogFormatError",
    "NumericalError",
    "OperatingPoint",
    "PController",
    "PrbsSpec",
    "ScalarSurrogate",
    "SignalLog",
    "SurrogateIdentifier",
    "SurrogateLoopPlant",
    "TruthLoopPlant",
    "TruthPlantConfig",
    "TruthPlantState",
    "build_h_pde",
    "calibrate",
    "dc_sensitivity",
    "default_geometry",
    "design_imc",
    "design_p",
    "design_prbs",
    "discretize_zoh",
    "estimate_delay",
    "fit_H",
    "fit_siso",
    "kappa_star",
    "read_log_csv",
    "run_experiment",
    "shape_reference",
    "simulate_closed_loop",
    "simulate_mimo",
    "surrogate_from_geometry",
    "to_absolute",
    "to_deviation",
    "validate",
    "write_log_csv",
]
