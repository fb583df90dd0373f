"""Distributed clock skew/offset estimation on multi-hop sensor networks.

Library plus CLI: generate random geometric topologies, simulate two-way
timestamp exchanges, run synchronous or totally asynchronous Gaussian
message passing with packet loss, and verify the results against
centralized least-squares and lower-bound oracles.
"""

from .bp import (
    Belief,
    InfoMessage,
    PriorInfo,
    aggregate_info,
    compute_belief,
    compute_outgoing,
    extract_clock_estimate,
    reference_outgoing,
)
from .centralized import (
    CrbMatrix,
    StackedEstimate,
    centralized_wls,
    compute_crb,
    crb_per_node,
)
from .clocks import (
    ClockParams,
    ClockRanges,
    ExchangeTiming,
    TimestampSet,
    TrueNetworkState,
    local_reading,
    sample_true_state,
    simulate_exchange,
)
from .errors import (
    ClockBPError,
    ConfigurationError,
    DegenerateEstimateError,
    DegenerateObservationError,
    IdentifiabilityError,
    TopologyFileError,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    load_config,
    run_experiment,
    run_mse_vs_rounds,
    run_mse_vs_tick,
    write_rows,
)
from .observations import (
    ObservationPair,
    beta_from_clock,
    build_observation,
    clock_from_beta,
)
from .scheduler import RunResult, ScheduleConfig, SimState, run, step
from .topology import (
    Topology,
    generate_connected_topology,
    generate_random_topology,
    is_strongly_connected,
    load_topology,
    save_topology,
)

__version__ = "0.1.0"
