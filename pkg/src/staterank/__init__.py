"""Rank pretrained visual representations for robot control, without
policy rollouts, by probing how well environment state can be linearly
decoded from exported feature maps."""

from .blob import BlobFormatError, read_blob, write_blob
from .dataset import (
    DatasetError,
    Frame,
    ProbeDataset,
    read_dataset,
    split,
    write_dataset,
)
from .pooling import PROBE_GRID, global_pool, resize_to_grid, roi_pool
from .probe import (
    PerStateScores,
    ProbeModel,
    TrainConfig,
    ce_loss,
    evaluate,
    load_model,
    mse_loss,
    save_model,
    train_probe,
)
from .ranking import RankInput, RankReport, mmrv, pearson, rank_report, rank_violation
from .scoring import (
    ScoreMatrix,
    aggregate,
    build_score_matrix,
    leave_one_out,
    normalize_scores,
    subset_score,
)
from .states import (
    CATEGORICAL_GROUPS,
    CONTINUOUS_GROUPS,
    STATE_GROUPS,
    EnvState,
    NormStats,
    ObjectState,
    StateSchema,
    TargetVector,
    canonicalize_quaternion,
    encode_targets,
    fit_normalization,
    quantize_shape,
    standardize,
    uniform_bin_edges,
)
from .synth import (
    GenConfig,
    generate_dataset,
    generate_model_family,
    generate_scene,
    render_features,
    synth_schema,
)

__version__ = "0.1.0"
