"""Linear state-prediction heads: losses, SGD training, per-state scoring.

One shared linear head maps each object's pooled vector to its continuous
coordinates plus material/shape logits; a second head maps the global
vector to joint/end-effector coordinates plus lighting logits. Both are
trained jointly with summed per-head losses, masking invisible objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .blob import read_blob, write_blob
from .dataset import DatasetError, ProbeDataset
from .pooling import PROBE_GRID, global_pool, resize_to_grid, roi_pool
from .states import (
    OBJECT_CONT_DIMS,
    NormStats,
    StateSchema,
    encode_targets,
    fit_normalization,
)


@dataclass(frozen=True)
class TrainConfig:
    """SGD probe-training hyperparameters (defaults follow the recipe)."""

    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 5e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError("learning_rate must be finite and >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def one_hot(index: int, num_classes: int) -> np.ndarray:
    if not 0 <= index < num_classes:
        raise ValueError(f"class index {index} out of range [0, {num_classes})")
    v = np.zeros(num_classes)
    v[index] = 1.0
    return v


def ce_loss(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Cross entropy of a softmax classifier; returns (loss, dloss/dlogits)."""
    logits = np.asarray(logits, dtype=np.float64)
    k = logits.shape[0]
    if k < 2:
        raise ValueError("need at least 2 classes")
    if not 0 <= target < k:
        raise ValueError(f"target {target} out of range [0, {k})")
    m = logits.max()
    lse = m + np.log(np.exp(logits - m).sum())
    loss = float(lse - logits[target])
    grad = softmax(logits)
    grad[target] -= 1.0
    return loss, grad


def mse_loss(
    pred: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Mean squared error over masked-in dims; returns (loss, dloss/dpred).

    Gradient is exactly zero on masked-out dims; an all-masked-out call
    yields loss 0.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != pred.shape:
            raise ValueError(f"mask shape {mask.shape} does not match {pred.shape}")
    denom = max(1, int(mask.sum()))
    diff = np.where(mask, pred - target, 0.0)
    loss = float((diff * diff).sum() / denom)
    grad = 2.0 * diff / denom
    return loss, grad


@dataclass
class ProbeModel:
    """Trained linear heads plus the statistics they were fitted with.

    Object head rows: [0:7] continuous coordinates, then material logits,
    then three shape-edge logit blocks. Env head rows: [0:N_j+N_ee]
    continuous, then lighting logits.
    """

    schema: StateSchema
    stats: NormStats
    object_weight: np.ndarray
    object_bias: np.ndarray
    env_weight: np.ndarray
    env_bias: np.ndarray
    train_loss_per_epoch: list[float] = field(default_factory=list, compare=False)

    def __post_init__(self):
        out_obj = OBJECT_CONT_DIMS + sum(self.schema.object_categorical_sizes)
        out_env = self.schema.joint_dim + self.schema.ee_dim + self.schema.num_lighting
        if self.object_weight.shape[0] != out_obj or self.object_bias.shape != (out_obj,):
            raise ValueError("object head shape inconsistent with schema")
        if self.env_weight.shape[0] != out_env or self.env_bias.shape != (out_env,):
            raise ValueError("env head shape inconsistent with schema")
        for arr in (self.object_weight, self.object_bias, self.env_weight, self.env_bias):
            if not np.isfinite(arr).all():
                raise ValueError("model weights must be finite")

    @property
    def channels(self) -> int:
        return self.object_weight.shape[1]


@dataclass(frozen=True)
class PerStateScores:
    """Raw per-state scores: accuracy for categorical states, negative MSE
    for continuous ones. States with no masked-in instances are absent."""

    scores: dict[str, float]
    absent: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"scores": dict(sorted(self.scores.items())), "absent": sorted(self.absent)}

    @classmethod
    def from_dict(cls, d: dict) -> "PerStateScores":
        return cls(
            scores={k: float(v) for k, v in d["scores"].items()},
            absent=tuple(d.get("absent", ())),
        )


def sgd_update(
    params: tuple[np.ndarray, ...],
    grads: tuple[np.ndarray, ...],
    velocities: tuple[np.ndarray, ...],
    lr: float,
    momentum: float,
    weight_decay: float,
) -> None:
    """In-place SGD step with momentum and coupled L2 weight decay:
    g <- grad + wd * p;  v <- momentum * v + g;  p <- p - lr * v.
    """
    for p, g_in, v in zip(params, grads, velocities):
        g = g_in + weight_decay * p
        v *= momentum
        v += g
        p -= lr * v


def _object_logit_slices(schema: StateSchema) -> list[slice]:
    slices = []
    lo = OBJECT_CONT_DIMS
    for size in schema.object_categorical_sizes:
        slices.append(slice(lo, lo + size))
        lo += size
    return slices


@dataclass
class _Pooled:
    """Pooled features and encoded targets for a whole dataset."""

    obj_u: np.ndarray        # (K, C) one row per visible object instance
    obj_frame: np.ndarray    # (K,) owning frame index
    obj_cont: np.ndarray     # (K, 7) standardized targets
    obj_classes: np.ndarray  # (K, 4) material + shape bins
    frame_ranges: list[tuple[int, int]]
    env_v: np.ndarray        # (F, C)
    env_cont: np.ndarray     # (F, N_j + N_ee)
    env_light: np.ndarray    # (F,)


def _pool_dataset(dataset: ProbeDataset, stats: NormStats) -> _Pooled:
    schema = dataset.schema
    n_obj = schema.num_objects
    obj_u, obj_frame, obj_cont, obj_classes = [], [], [], []
    env_v, env_cont, env_light = [], [], []
    frame_ranges = []
    for fi, frame in enumerate(dataset.frames):
        fm7 = resize_to_grid(frame.feature_map, PROBE_GRID)
        target = encode_targets(frame.objects, frame.env, schema, stats)
        start = len(obj_u)
        for i in range(n_obj):
            if not frame.objects[i].visible:
                continue
            obj_u.append(roi_pool(fm7, frame.bboxes[i], frame.image_size))
            obj_frame.append(fi)
            lo = i * OBJECT_CONT_DIMS
            obj_cont.append(target.continuous[lo : lo + OBJECT_CONT_DIMS])
            obj_classes.append(target.object_classes[i])
        frame_ranges.append((start, len(obj_u)))
        env_v.append(global_pool(fm7))
        env_cont.append(target.continuous[n_obj * OBJECT_CONT_DIMS :])
        env_light.append(target.lighting)
    c = dataset.feature_shape[0]
    return _Pooled(
        obj_u=np.array(obj_u).reshape(-1, c),
        obj_frame=np.array(obj_frame, dtype=np.int64),
        obj_cont=np.array(obj_cont).reshape(-1, OBJECT_CONT_DIMS),
        obj_classes=np.array(obj_classes, dtype=np.int64).reshape(-1, 4),
        frame_ranges=frame_ranges,
        env_v=np.stack(env_v),
        env_cont=np.stack(env_cont),
        env_light=np.array(env_light, dtype=np.int64),
    )


def _batch_losses_and_grads(
    schema: StateSchema,
    pooled: _Pooled,
    frame_idx: np.ndarray,
    w_obj: np.ndarray,
    b_obj: np.ndarray,
    w_env: np.ndarray,
    b_env: np.ndarray,
):
    """Mean per-frame loss over a batch plus gradients for both heads."""
    rows = [r for fi in frame_idx for r in range(*pooled.frame_ranges[fi])]
    batch = len(frame_idx)
    total = 0.0

    u = pooled.obj_u[rows]
    if rows:
        pred = u @ w_obj.T + b_obj
        g_obj_out = np.zeros_like(pred)
        cont_t = pooled.obj_cont[rows]
        diff = pred[:, :OBJECT_CONT_DIMS] - cont_t
        total += float((diff * diff).mean(axis=1).sum())
        g_obj_out[:, :OBJECT_CONT_DIMS] = 2.0 * diff / OBJECT_CONT_DIMS
        classes = pooled.obj_classes[rows]
        for slot, sl in enumerate(_object_logit_slices(schema)):
            logits = pred[:, sl]
            p = softmax(logits)
            tgt = classes[:, slot]
            picked = p[np.arange(len(rows)), tgt]
            total += float(-np.log(np.maximum(picked, 1e-300)).sum())
            g = p
            g[np.arange(len(rows)), tgt] -= 1.0
            g_obj_out[:, sl] = g

    v = pooled.env_v[frame_idx]
    env_pred = v @ w_env.T + b_env
    g_env_out = np.zeros_like(env_pred)
    n_env_cont = schema.joint_dim + schema.ee_dim
    diff = env_pred[:, :n_env_cont] - pooled.env_cont[frame_idx]
    total += float((diff * diff).mean(axis=1).sum())
    g_env_out[:, :n_env_cont] = 2.0 * diff / n_env_cont
    logits = env_pred[:, n_env_cont:]
    p = softmax(logits)
    tgt = pooled.env_light[frame_idx]
    picked = p[np.arange(batch), tgt]
    total += float(-np.log(np.maximum(picked, 1e-300)).sum())
    g = p
    g[np.arange(batch), tgt] -= 1.0
    g_env_out[:, n_env_cont:] = g

    if rows:
        g_obj_out /= batch
        gw_obj = g_obj_out.T @ u
        gb_obj = g_obj_out.sum(axis=0)
    else:
        gw_obj = np.zeros_like(w_obj)
        gb_obj = np.zeros_like(b_obj)
    g_env_out /= batch
    gw_env = g_env_out.T @ v
    gb_env = g_env_out.sum(axis=0)
    return total / batch, gw_obj, gb_obj, gw_env, gb_env


def train_probe(train: ProbeDataset, cfg: TrainConfig) -> ProbeModel:
    """Fit normalization stats on `train`, then SGD-train both linear heads.

    Deterministic given cfg.seed: heads start at zero and the shuffle
    order is fixed, so two runs produce bit-identical weights.
    """
    train.validate()
    schema = train.schema
    stats = fit_normalization([(f.objects, f.env) for f in train.frames], schema)
    pooled = _pool_dataset(train, stats)

    c = train.feature_shape[0]
    out_obj = OBJECT_CONT_DIMS + sum(schema.object_categorical_sizes)
    out_env = schema.joint_dim + schema.ee_dim + schema.num_lighting
    w_obj = np.zeros((out_obj, c))
    b_obj = np.zeros(out_obj)
    w_env = np.zeros((out_env, c))
    b_env = np.zeros(out_env)
    vel = [np.zeros_like(p) for p in (w_obj, b_obj, w_env, b_env)]

    rng = np.random.default_rng(cfg.seed)
    n = len(train.frames)
    lr, mom, wd = cfg.learning_rate, cfg.momentum, cfg.weight_decay
    epoch_losses = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        frame_loss_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            batch = perm[lo : lo + cfg.batch_size]
            loss, *grads = _batch_losses_and_grads(
                schema, pooled, batch, w_obj, b_obj, w_env, b_env
            )
            frame_loss_sum += loss * len(batch)
            sgd_update((w_obj, b_obj, w_env, b_env), tuple(grads), tuple(vel), lr, mom, wd)
        epoch_losses.append(frame_loss_sum / n)

    return ProbeModel(
        schema=schema,
        stats=stats,
        object_weight=w_obj,
        object_bias=b_obj,
        env_weight=w_env,
        env_bias=b_env,
        train_loss_per_epoch=epoch_losses,
    )


def evaluate(model: ProbeModel, val: ProbeDataset) -> PerStateScores:
    """Score a trained probe on a validation set, one score per state group.

    Categorical groups report top-1 accuracy over masked-in instances
    (argmax ties resolve to the lowest class index; `s_shape` averages its
    three edge classifiers). Continuous groups report negative MSE over
    standardized targets. Groups with no masked-in instances are absent.
    """
    if not val.frames:
        raise DatasetError("validation set is empty")
    val.validate()
    if val.schema != model.schema:
        raise DatasetError("validation schema does not match the model's schema")
    schema = model.schema
    pooled = _pool_dataset(val, model.stats)

    scores: dict[str, float] = {}
    absent: list[str] = []
    k = pooled.obj_u.shape[0]
    if k > 0:
        pred = pooled.obj_u @ model.object_weight.T + model.object_bias
        diff = pred[:, :OBJECT_CONT_DIMS] - pooled.obj_cont
        scores["p_pose"] = -float((diff[:, :3] ** 2).mean())
        scores["q_pose"] = -float((diff[:, 3:7] ** 2).mean())
        mat_sl, *shape_sls = _object_logit_slices(schema)
        mat_hat = pred[:, mat_sl].argmax(axis=1)
        scores["m_mat"] = float((mat_hat == pooled.obj_classes[:, 0]).mean())
        edge_accs = []
        for axis, sl in enumerate(shape_sls):
            edge_hat = pred[:, sl].argmax(axis=1)
            edge_accs.append(float((edge_hat == pooled.obj_classes[:, axis + 1]).mean()))
        scores["s_shape"] = float(np.mean(edge_accs))
    else:
        absent.extend(["p_pose", "q_pose", "s_shape", "m_mat"])

    env_pred = pooled.env_v @ model.env_weight.T + model.env_bias
    n_j = schema.joint_dim
    n_env_cont = n_j + schema.ee_dim
    diff = env_pred[:, :n_env_cont] - pooled.env_cont
    scores["q_j"] = -float((diff[:, :n_j] ** 2).mean())
    scores["p_ee"] = -float((diff[:, n_j:] ** 2).mean())
    light_hat = env_pred[:, n_env_cont:].argmax(axis=1)
    scores["l"] = float((light_hat == pooled.env_light).mean())

    return PerStateScores(scores=scores, absent=tuple(absent))


def save_model(model: ProbeModel, directory: Path | str) -> None:
    """Persist a probe as checksummed float32 blobs plus a JSON header."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {
        "object_weight": model.object_weight,
        "object_bias": model.object_bias,
        "env_weight": model.env_weight,
        "env_bias": model.env_bias,
        "stats_mean": model.stats.mean,
        "stats_std": model.stats.std,
        "stats_constant": model.stats.constant.astype(np.float32),
    }
    for name, arr in arrays.items():
        write_blob(directory / f"{name}.bin", arr)
    header = {
        "format_version": 1,
        "kind": "staterank-probe",
        "schema": model.schema.to_dict(),
        "arrays": sorted(arrays),
    }
    (directory / "model.json").write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n"
    )


def load_model(directory: Path | str) -> ProbeModel:
    directory = Path(directory)
    header = json.loads((directory / "model.json").read_text())
    if header.get("kind") != "staterank-probe" or header.get("format_version") != 1:
        raise DatasetError(f"{directory}: not a supported probe model directory")
    schema = StateSchema.from_dict(header["schema"])
    arrays = {
        name: read_blob(directory / f"{name}.bin").astype(np.float64)
        for name in header["arrays"]
    }
    stats = NormStats(
        mean=arrays["stats_mean"],
        std=arrays["stats_std"],
        constant=arrays["stats_constant"] != 0.0,
    )
    return ProbeModel(
        schema=schema,
        stats=stats,
        object_weight=arrays["object_weight"],
        object_bias=arrays["object_bias"],
        env_weight=arrays["env_weight"],
        env_bias=arrays["env_bias"],
    )
