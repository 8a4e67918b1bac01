"""qtraj: stochastic-trajectory simulation and matched-filter detection
of itinerant microwave photons in cascaded transmon-cavity counters."""

from .config import EnsembleConfig, config_from_dict, default_config_dict, load_config
from .detection import (
    DecisionStats,
    FilterKernel,
    apply_filter,
    combine_two_channel,
    decide,
    distinguishability,
    matched_kernel,
    optimize_threshold,
    snr,
)
from .dynamics import (
    MeanTrace,
    TimeGrid,
    TrajectoryRecord,
    coherence_trace,
    evolve_master,
    expected_current,
    output_flux,
    run_trajectory,
    step_sme,
)
from .ensemble import EnsembleReport, build_model, run_ensemble, sweep
from .errors import (
    ConfigurationError,
    DegenerateKernelError,
    DimensionError,
    NumericalError,
    QtrajError,
)
from .hypotest import hypothesis_filter
from .model import (
    CascadeModel,
    SourceParams,
    UnitParams,
    build_single_unit,
    build_two_unit,
    initial_state,
)
from .operators import (
    Dims,
    Operator,
    QuantumState,
    annihilation,
    coherent_state,
    embed,
    expectation,
    transition,
)

__version__ = "0.1.0"
