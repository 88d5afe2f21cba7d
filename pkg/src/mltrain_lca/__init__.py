"""Life-cycle assessment of machine-learning training runs.

Modules
-------
hardware
    Graphics-card catalog: ingestion, merging, name resolution, efficiency.
lca
    Production and energy impacts (GWP, ADPe) of training servers.
estimator
    GPU-hour estimates, calibration of the performance ratio, footprints.
analysis
    Exponential trend fits and carbon-intensity reduction scenarios.
cli
    ``mltrain-lca`` command-line interface.
"""

__version__ = "0.1.0"

from .intervals import Interval  # noqa: E402
from .lca import ImpactFactors, ImpactVector, PhasedImpact, pue_at  # noqa: E402
from .hardware import GraphicsCard, resolve_card_name  # noqa: E402
from .estimator import (  # noqa: E402
    EstimationContext,
    MLSystemRecord,
    TrainingFootprint,
    calibrate,
    estimate_all,
    estimate_footprint,
)
from .analysis import Scenario, apply_scenario, fit_trend, trend_by_modality  # noqa: E402

__all__ = [
    "EstimationContext",
    "GraphicsCard",
    "ImpactFactors",
    "ImpactVector",
    "Interval",
    "MLSystemRecord",
    "PhasedImpact",
    "Scenario",
    "TrainingFootprint",
    "apply_scenario",
    "calibrate",
    "estimate_all",
    "estimate_footprint",
    "fit_trend",
    "pue_at",
    "resolve_card_name",
    "trend_by_modality",
]
