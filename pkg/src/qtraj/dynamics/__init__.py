"""Time evolution: deterministic Lindblad, diffusive SME, hybrid jump/diffusion SSE."""

from .analysis import coherence_trace, expected_current, output_flux, smooth_trace
from .engine import CompiledSme, CompiledSse, compile_sme, compile_sse, drift_generator
from .master import (
    CoherenceResult,
    FluxResult,
    coherence_trace_exact,
    evolve_master,
    expected_current_exact,
    output_flux_exact,
)
from .sme import run_sme_trajectory, sme_ensemble_mean_a, step_sme
from .trajectory import (
    RawTrajectory,
    TraceRequest,
    default_workers,
    run_raw,
    run_study,
    run_trajectory,
)
from .types import Diagnostics, MeanTrace, TimeGrid, TrajectoryRecord

__all__ = [
    "CompiledSme",
    "CompiledSse",
    "CoherenceResult",
    "Diagnostics",
    "FluxResult",
    "MeanTrace",
    "RawTrajectory",
    "TimeGrid",
    "TraceRequest",
    "TrajectoryRecord",
    "coherence_trace",
    "coherence_trace_exact",
    "compile_sme",
    "compile_sse",
    "default_workers",
    "drift_generator",
    "evolve_master",
    "expected_current",
    "expected_current_exact",
    "output_flux",
    "output_flux_exact",
    "run_raw",
    "run_sme_trajectory",
    "run_study",
    "run_trajectory",
    "sme_ensemble_mean_a",
    "smooth_trace",
    "step_sme",
]
