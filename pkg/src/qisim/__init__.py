"""Detection theory and event-level Monte Carlo for two-photon quantum illumination."""

from .analytic import (
    EquivalenceResult,
    classical_single,
    classical_two_photon,
    entangled_two_photon,
    hypothesis_stats,
    lloyd_entangled,
    m_trial,
    snr_report,
    solve_equivalent_bandwidth,
)
from .core import (
    ConfigError,
    ExperimentConfig,
    Hypothesis,
    HypothesisStats,
    Protocol,
    RangeEstimate,
    SnrReport,
    load_config,
    uniform_mode_table,
    validate_config,
)
from .engine import SimulationSummary, run_monte_carlo
from .events import PhotonEvent, generate_trial_events
from .matcher import TrialOutcome, coincidence_decide
from .ranging import estimate_range, simulate_ranges

__version__ = "0.1.0"
