"""Dynamic social network alignment: dual embeddings from an LSTM autoencoder
over RWR ego-vector sequences, joined in a common identity subspace by
alternating closed-form projection and multiplicative nonnegative updates."""

from .graph import (
    AnchorSet,
    DynamicGraph,
    EdgeEvent,
    IndicationPair,
    SnapshotGraph,
    aggregate_with_decay,
    build_indication,
    ingest_edge_events,
    laplacian,
)
from .rwr import PAD, EgoTensor, RwrConfig, build_ego_tensor, rwr_scores, select_ego
from .lstm import NetParams, TrainConfig, cell_forward, decode, encode, loss_and_grads, pretrain, train_step
from .subspace import (
    ObjWeights,
    Schedule,
    SubspaceState,
    kkt_residual,
    objective,
    run_alternating,
    update_q,
    update_v,
)
from .evaluate import (
    CandidateList,
    EvalReport,
    map_at_k,
    overlap_rate,
    precision_at_k,
    rank_candidates,
)
from .synth import PlantedInstance, SynthConfig, generate_base, generate_instance, split_views
from .config import RunConfig, load_config
from .estimator import DnaAligner

__version__ = "0.1.0"

__all__ = [
    "AnchorSet", "DynamicGraph", "EdgeEvent", "IndicationPair", "SnapshotGraph",
    "aggregate_with_decay", "build_indication", "ingest_edge_events", "laplacian",
    "PAD", "EgoTensor", "RwrConfig", "build_ego_tensor", "rwr_scores", "select_ego",
    "NetParams", "TrainConfig", "cell_forward", "decode", "encode",
    "loss_and_grads", "pretrain", "train_step",
    "ObjWeights", "Schedule", "SubspaceState", "kkt_residual", "objective",
    "run_alternating", "update_q", "update_v",
    "CandidateList", "EvalReport", "map_at_k", "overlap_rate", "precision_at_k",
    "rank_candidates",
    "PlantedInstance", "SynthConfig", "generate_base", "generate_instance", "split_views",
    "RunConfig", "load_config", "DnaAligner",
]
