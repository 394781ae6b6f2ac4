"""Joint UAV placement and rate-splitting precoder optimization."""
from .channel import RicianParams, los_channel, rician_channel
from .joint import JointParams, JointSolution, alternating_optimize, avg_location_baseline
from .placement import PlacementParams, optimize_placement
from .precoder import PrecoderOptParams, Scheme, optimize
from .scenario import PlacementBox, Scenario
from .signal_model import rate_report

__all__ = [
    "JointParams", "JointSolution", "PlacementBox", "PlacementParams", "PrecoderOptParams",
    "RicianParams", "Scenario", "Scheme", "alternating_optimize", "avg_location_baseline",
    "los_channel", "optimize", "optimize_placement", "rate_report", "rician_channel",
]
