"""graphdiv: diversity-aware recommendation via item-graph exploration.

A library plus CLI covering the full loop: co-interaction graph storage,
inductive embedding training, cosine retrieval, per-user diversity propensity,
DPP-based diversified reranking, diversity metrics, and a closed-loop
simulator that feeds exposures back into the graph.
"""

__version__ = "0.1.0"

from .embedding import (
    EmbeddingTable,
    LayerWeights,
    TrainConfig,
    TrainResult,
    aggregate_neighbors,
    embed_nodes,
    infer_unseen,
    propagate,
    train_unsupervised,
)
from .graph_store import GraphError, ItemGraph, SessionRecord, SnapshotFormatError
from .metrics import RoundReport, coverage, ilad, rd
from .personalization import (
    PopulationStats,
    UserState,
    diversity_propensity,
    mean_pairwise_similarity,
    update_population,
    window_filter,
)
from .rerank import (
    RerankInput,
    adjusted_scores,
    build_kernel,
    greedy_map,
    log_prob,
    rerank,
)
from .retrieval import CandidateSet, ColdStartError, match_candidates
from .simulator import (
    ExperimentConfig,
    SyntheticUser,
    build_state,
    gen_catalog,
    gen_users,
    run_experiment,
    run_round,
    user_feedback,
    with_base_seed,
)

__all__ = [
    "EmbeddingTable",
    "LayerWeights",
    "TrainConfig",
    "TrainResult",
    "aggregate_neighbors",
    "embed_nodes",
    "infer_unseen",
    "propagate",
    "train_unsupervised",
    "GraphError",
    "ItemGraph",
    "SessionRecord",
    "SnapshotFormatError",
    "RoundReport",
    "coverage",
    "ilad",
    "rd",
    "PopulationStats",
    "UserState",
    "diversity_propensity",
    "mean_pairwise_similarity",
    "update_population",
    "window_filter",
    "RerankInput",
    "adjusted_scores",
    "build_kernel",
    "greedy_map",
    "log_prob",
    "rerank",
    "CandidateSet",
    "ColdStartError",
    "match_candidates",
    "ExperimentConfig",
    "SyntheticUser",
    "build_state",
    "gen_catalog",
    "gen_users",
    "run_experiment",
    "run_round",
    "user_feedback",
    "with_base_seed",
]
