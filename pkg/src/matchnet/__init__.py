"""matchnet: interaction-effect estimation on two-sided matching networks.

The package models observed worker-firm (or manager-task, student-school,
...) matches as a bipartite graph with one outcome per edge, diagnoses what
the graph's structure lets you recover, estimates the single interaction
parameter of the multiplicative-in-productivities outcome model from
edge-disjoint four-cycles, tests for the absence of complementarities, and
recovers node productivities by additive projection or alternating least
squares.  A simulation engine reproduces the estimator's finite-sample
behavior on controlled cycle populations.
"""

from .diagnostics import (
    DiagnosticsReport,
    FourCycle,
    SnowballTrace,
    build_report,
    connected_components,
    count_four_cycles_total,
    enumerate_disjoint_four_cycles,
    informative_cycle_exists,
    is_connected,
    largest_component,
    leave_one_out_connected,
    seed_and_snowballs,
    within_side_diameters,
)
from .estimation import (
    DEFAULT_SEED,
    BetaEstimate,
    CycleStats,
    IdentificationSet,
    InstrumentSet,
    Labeling,
    ModularityTest,
    assign_labels,
    closed_form_beta,
    cycle_stats,
    estimate_beta,
    identification_set,
    modularity_test,
    read_instrument_file,
)
from .estimators import AlsEstimator, InteractionEstimator, TwfeEstimator
from .exceptions import (
    DegenerateStatisticError,
    DegenerateUpdateError,
    EdgeListParseError,
    EmptyNetworkError,
    IncompleteAssignmentError,
    InstrumentCoverageError,
    MatchnetError,
    MissingEdgeError,
    MonotonicityViolationError,
    NoCyclesError,
    NotIdentifiedError,
    UndefinedCorrelationError,
    UninformativeCyclesError,
)
from .montecarlo import (
    CyclePopulation,
    GridCell,
    SimConfig,
    SimReport,
    default_grid,
    draw_cycle_population,
    er_generate,
    format_grid_tables,
    outcome_labeling_bias_experiment,
    read_grid_file,
    run_grid,
    run_simulation,
)
from .network import (
    Match,
    MatchingNetwork,
    NodeId,
    ProductivityAssignment,
    Side,
    edge_file_text,
    load_network,
    read_edge_file,
    synthesize_outcomes,
    write_edge_file,
)
from .productivity import (
    AlsFit,
    MisspecificationBias,
    SeriationRanks,
    SortingReport,
    TwfeProjection,
    als_fit,
    misspecification_bias,
    read_productivity_file,
    seriation_ranks,
    sorting_correlation,
    sorting_report,
    twfe_project,
    write_productivity_file,
)

__version__ = "0.1.0"
