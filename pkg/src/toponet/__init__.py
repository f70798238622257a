"""Topographic regularisation of network weights on 2D cortical sheets."""
from .compress import (
    CompressedLayer,
    PruneReport,
    compression_curve,
    downsample_layer,
    l1_prune,
    prune_fraction_for_reduction,
    reconstruct_layer,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DimensionError,
    FitError,
    InsufficientDataError,
    NumericError,
    TopoNetError,
    TrainingError,
)
from .metrics import (
    GroupStats,
    IntegrationFit,
    SmoothnessCurve,
    effective_dimensionality,
    fit_integration_window,
    integration_window,
    pairwise_correlation_vs_distance,
    selectivity_map,
    selectivity_t,
    structural_similarity,
)
from .sheet import Conv, CorticalSheet, Linear, factorize_near_square, project_conv, project_linear, unproject
from .topoloss import TopoConfig, blur, resize_bilinear, topo_loss, total_loss
from .training import (
    Checkpoint,
    EvalTask,
    Model,
    ModelSpec,
    TrainConfig,
    evaluate,
    load_checkpoint,
    report_maps,
    save_checkpoint,
    sweep,
    train,
)

__version__ = "0.1.0"
