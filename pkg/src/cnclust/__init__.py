"""cnclust: spatial clustering and hierarchical permutation testing of
discretized DNA copy-number regions."""

from .assoc import (
    ContingencyTable,
    PermutationEnsemble,
    PermutationTestResult,
    cluster_pvalues,
    pearson_x2,
    permutation_test,
    region_pvalues,
)
from .collapse import CollapseReport, collapse_exact
from .datamodel import (
    ContiguousPartition,
    Labels,
    RegionMeta,
    StateMatrix,
    column_multiset_fingerprint,
    read_labels,
    read_state_matrix,
    validate_matrix,
    write_labels,
    write_state_matrix,
)
from .hiertest import (
    HolmResult,
    RejectionSet,
    adjusted_pvalues,
    budget_check,
    hierarchical_test,
    holm,
)
from .partition import CandidateTable, ClusteringResult, build_candidates, cluster, \
    optimal_partition
from .pipeline import PipelineConfig, PipelineResult, emit_group_difference, run_pipeline
from .qem import (
    ClusterFit,
    ClusterParams,
    DistanceWeights,
    FitConfig,
    cluster_loglik,
    distance_weights,
    f_interaction,
    fit_cluster,
    gamma_rescale,
    log_normalizer,
)
from .simulate import (
    GenerativeScenario,
    GlobalNull,
    RegionAssociation,
    make_scenario,
    sample_labels,
    sample_matrix,
)
from .stability import (
    AriReport,
    ShuffleReport,
    adjusted_rand_index,
    coincidental_clustering_report,
    cross_validate_stability,
    shuffle_regions,
)

__version__ = "0.1.0"
