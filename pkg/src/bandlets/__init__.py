"""Best-basis bandlet denoising of geometrically regular images."""

from .errors import BandletError, InputError, OutOfRegimeError, ParameterError, SpecError
from .estimator import (
    EstimatorPlan,
    OracleReport,
    denoise,
    denoise_wavelet_baseline,
    lambda0,
    oracle_cost,
    plan_from_sigma,
    psnr,
    risk_of,
)
from .geometry import FlowConfig, GeometricFlow, QuadtreeGeometry, build_alpert, parse_geometry, serialize_geometry
from .pyramid import WaveletPyramid, daubechies, dwt2, idwt2
from .selection import PenalizedCost, Selection, best_geometry, threshold_select
from .synthlab import concentration_experiment, edge_scene, observe, render_scene, risk_curve

__version__ = "0.1.0"

__all__ = [
    "BandletError", "InputError", "OutOfRegimeError", "ParameterError", "SpecError",
    "EstimatorPlan", "OracleReport", "denoise", "denoise_wavelet_baseline", "lambda0",
    "oracle_cost", "plan_from_sigma", "psnr", "risk_of",
    "FlowConfig", "GeometricFlow", "QuadtreeGeometry", "build_alpert", "parse_geometry",
    "serialize_geometry", "WaveletPyramid", "daubechies", "dwt2", "idwt2",
    "PenalizedCost", "Selection", "best_geometry", "threshold_select",
    "concentration_experiment", "edge_scene", "observe", "render_scene", "risk_curve",
]
