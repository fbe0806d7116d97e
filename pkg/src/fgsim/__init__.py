"""Federated link-prediction simulator over typed supply-chain graphs."""

__version__ = "0.1.0"

from .kg import (
    Direction,
    EdgeSplit,
    KnowledgeGraph,
    NetworkStats,
    NodeType,
    RelationType,
    SplitPart,
    Triple,
    build_graph,
    load_graph,
    neighbors,
    relation_network_stats,
    sample_negatives,
    split_edges,
    write_triples,
)
from .synth import (
    CountryProfile,
    SynthConfig,
    SynthMode,
    default_profiles,
    generate_country_graph,
)
from .nn import AdamState, HeadModule, adam_step, bce_loss, finite_diff_check, head_forward
from .sage import EncoderParams, ModelParams, encode, loss_and_grads, sample_neighborhood, score_links
from .federation import (
    ClientState,
    FederationConfig,
    Variant,
    average_heads,
    cross_evaluate,
    fine_tune_last_layer,
    form_groups,
    local_train,
    make_client,
    run_federation,
)
from .evalstats import (
    RankTable,
    ScoredSet,
    aggregate_runs,
    average_precision,
    evaluate_client,
    friedman,
    nemenyi_posthoc,
    roc_auc,
)

__all__ = [
    "__version__",
    "Direction",
    "EdgeSplit",
    "KnowledgeGraph",
    "NetworkStats",
    "NodeType",
    "RelationType",
    "SplitPart",
    "Triple",
    "build_graph",
    "load_graph",
    "neighbors",
    "relation_network_stats",
    "sample_negatives",
    "split_edges",
    "write_triples",
    "CountryProfile",
    "SynthConfig",
    "SynthMode",
    "default_profiles",
    "generate_country_graph",
    "AdamState",
    "HeadModule",
    "adam_step",
    "bce_loss",
    "finite_diff_check",
    "head_forward",
    "EncoderParams",
    "ModelParams",
    "encode",
    "loss_and_grads",
    "sample_neighborhood",
    "score_links",
    "ClientState",
    "FederationConfig",
    "Variant",
    "average_heads",
    "cross_evaluate",
    "fine_tune_last_layer",
    "form_groups",
    "local_train",
    "make_client",
    "run_federation",
    "RankTable",
    "ScoredSet",
    "aggregate_runs",
    "average_precision",
    "evaluate_client",
    "friedman",
    "nemenyi_posthoc",
    "roc_auc",
]
