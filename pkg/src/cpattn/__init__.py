"""Core-periphery guided sparse self-attention at desk scale."""
from .attention import (
    AttentionParams,
    EmbeddingBatch,
    ModelConfig,
    ToyViT,
    importance_weights,
    init_toy_vit,
    masked_attention,
    multi_head,
    patch_gradients,
    toy_vit_forward,
)
from .errors import (
    ConsistencyError,
    CPGenerationError,
    NumericError,
    ParameterError,
    ShapeError,
)
from .graph import (
    CPGraph,
    IPMeasures,
    SearchPoint,
    detect_core_periphery,
    enumerate_search_space,
    generate_baseline,
    generate_cp_graph,
    generate_verified_cp_graph,
    independent_probabilities,
    is_cp,
)
from .mask import AttentionMask, PatchAssignment, assign_patches, build_mask, connection_ratio
from .redistribution import RedistributionPlan, core_capacity, redistribute
from .sweep import SweepConfig, SweepRecord, emit_heatmaps, run_sweep
from .task import make_synthetic_task

__version__ = "0.1.0"
