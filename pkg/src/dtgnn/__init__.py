"""Desk-scale training engine for dynamic graph neural networks over
discrete-time dynamic graphs.

Building blocks: sparse/dense kernels (core), the snapshot-sequence data
model with smoothing operators (dtdg), a graph-difference snapshot codec
with exact transfer accounting (delta), three dynamic-GNN architectures
(models), manual reverse-mode training with gradient checkpointing
(training), a simulated snapshot-partitioned multi-worker engine with
communication ledgers (dist), a CLI (cli) and a scikit-learn style facade
(estimator).
"""

__version__ = "0.1.0"

from .core import SparseMatrix, matmul, sparse_weighted_sum, spmm, spmm_transpose
from .delta import SnapshotDelta, TransferLedger, apply, diff, naive_cost, stream_block
from .dtdg import (
    DynamicGraph,
    FeatureSequence,
    MMatrix,
    apply_edge_life,
    build_m_matrix,
    degree_features,
    generate_random_dtdg,
    load_edge_list,
    m_transform_features,
    m_transform_graph,
    normalize_laplacian,
    read_edge_list,
    write_edge_list,
)
from .errors import (
    ConfigError,
    CorruptDeltaError,
    DtgnnError,
    EdgeListParseError,
    InputError,
    ProtocolError,
)
from .models import (
    ModelConfig,
    egcn_evolve,
    gcn_forward,
    init_params,
    link_pred_forward,
    lstm_step,
    m_product_rnn,
    model_forward,
    precompute_first_layer,
)
from .training import (
    ActivationLedger,
    AdamState,
    BlockPlan,
    LabelSet,
    TrainingData,
    adam_step,
    backward_checkpoint,
    backward_full,
    cross_entropy_loss,
    evaluate_link_prediction,
    init_adam,
    prepare_training_data,
    sample_link_prediction_sets,
    train_epochs,
)
from .dist import (
    CommLedger,
    SnapshotPartition,
    VertexPartition,
    compare_partitioning_report,
    distributed_epoch,
    partition_vertices_greedy,
    plan_snapshot_partition,
    redistribute_to_snapshot_major,
    redistribute_to_vertex_major,
    train_distributed,
    vertex_comm_volume,
)
from .estimator import DynamicLinkPredictor, EdgeLifeSmoother, MProductSmoother
