"""Cache placement optimization and delivery-rate bounds for coded multicast caching."""

from .bounds import (
    BoundResult,
    conditional_expected_bound_distinct,
    distinct_set_probability,
    lower_bound_p1,
    lower_bound_p2,
    lower_bound_p5,
    rlb_general,
    rlb_popfirst,
)
from .closedform import (
    RateCoefficients,
    avg_rate_ccs_closed,
    avg_rate_closed,
    g_coefficients,
    redundancy_probabilities,
)
from .delivery import (
    LeaderGroup,
    RedundancyProfile,
    coded_message_size,
    conditional_expected_rate_distinct,
    distinct_set,
    expected_rate,
    leader_group,
    rate_ccs,
    rate_mccs,
    rate_mccs_lemma3,
)
from .lp import LpProblem, LpSolution, SizeGuardError, solve, solve_via_dual
from .model import (
    Demand,
    DistinctSet,
    Instance,
    Placement,
    PlacementVector,
    Violation,
    ingest_instance,
    ingest_popularity,
    is_popularity_first,
    parse_instance_json,
    step_popularity,
    validate_placement,
    zipf_popularity,
)
from .optimizer import (
    GroupingCandidate,
    LpOptimum,
    OptimizeReport,
    one_group_candidate,
    optimize_ccs,
    optimize_mccs,
    solve_p3_lp,
    solve_p4_lp,
    three_group_candidates,
    two_group_case2i,
    two_group_case2ii,
)

__version__ = "0.1.0"

__all__ = [
    "BoundResult",
    "Demand",
    "DistinctSet",
    "GroupingCandidate",
    "Instance",
    "LeaderGroup",
    "LpOptimum",
    "LpProblem",
    "LpSolution",
    "OptimizeReport",
    "Placement",
    "PlacementVector",
    "RateCoefficients",
    "RedundancyProfile",
    "SizeGuardError",
    "Violation",
    "avg_rate_ccs_closed",
    "avg_rate_closed",
    "coded_message_size",
    "conditional_expected_bound_distinct",
    "conditional_expected_rate_distinct",
    "distinct_set",
    "distinct_set_probability",
    "expected_rate",
    "g_coefficients",
    "ingest_instance",
    "ingest_popularity",
    "is_popularity_first",
    "leader_group",
    "lower_bound_p1",
    "lower_bound_p2",
    "lower_bound_p5",
    "one_group_candidate",
    "optimize_ccs",
    "optimize_mccs",
    "parse_instance_json",
    "rate_ccs",
    "rate_mccs",
    "rate_mccs_lemma3",
    "redundancy_probabilities",
    "rlb_general",
    "rlb_popfirst",
    "solve",
    "solve_p3_lp",
    "solve_p4_lp",
    "solve_via_dual",
    "step_popularity",
    "three_group_candidates",
    "two_group_case2i",
    "two_group_case2ii",
    "validate_placement",
    "zipf_popularity",
]
