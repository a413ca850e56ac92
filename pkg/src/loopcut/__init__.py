"""Loop-cutset sampling engine for discrete Bayesian networks."""

from .model import (
    BayesNet,
    Cpt,
    Evidence,
    EvidenceError,
    NetworkFormatError,
    NetworkValidationError,
    Variable,
    generate_random_network,
    make_network,
    networks_equal,
    parse_evidence,
    parse_network,
    serialize_network,
)
from .graphs import (
    Cutset,
    Subnetwork,
    check_prefix_polytrees,
    find_loop_cutset,
    is_singly_connected,
    relevant_subnetwork,
    topological_order,
    validate_loop_cutset,
)
from .exact import (
    Factor,
    QueryResult,
    StateSpaceError,
    bucket_elimination_query,
    enumerate_joint_query,
    enumerate_joint_table,
)
from .polytree import NotSinglyConnectedError, PolytreePlan, polytree_query
from .ibp import iterative_bp
from .sampling import (
    EstimatorState,
    RunResult,
    UnresolvedEstimateError,
    WeightedSample,
    estimate_marginals,
    gibbs_run,
    lw_run,
    lw_sample,
    rejection_rate,
)
from .cutset import (
    CutsetOrder,
    InvalidCutsetError,
    build_cutset_order,
    lcs_run,
    lwlc_run,
    lwlc_sample,
)
from .cache import SampleTree, SampleTreeNode, lookup_or_compute, lwlc_buf_run, mark_dead_end
from .evaluation import (
    KlReductionResult,
    enumerated_weight_variances,
    kl,
    mse,
    run_comparison,
    verify_kl_reduction,
    weight_variance_report,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
