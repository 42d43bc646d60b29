"""Synthetic scene/feature generator with controllable linear decodability.

Scenes are sampled from documented ranges; each frame's feature map is
built on the probe grid by writing encoded state targets through a fixed
full-rank linear embedding: every cell inside an object's box carries that
object's embedded target vector, and the embedded scene-level target is
added to all cells. White noise of configurable strength degrades the
features, emulating a family of pseudo-backbones with a known quality
ordering (more noise = worse).

Closed-form inverse at zero noise: with embedding columns A = [A_obj | A_env],
RoI pooling over an object's box returns exactly A_obj t_obj + A_env t_env,
and global pooling returns A_env t_env plus the box-weighted mean of the
object terms; both are linear in the stacked targets, so pinv(A) recovers
them exactly and a linear probe can reach zero error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Frame, ProbeDataset
from .pooling import PROBE_GRID
from .states import (
    OBJECT_CONT_DIMS,
    EnvState,
    NormStats,
    ObjectState,
    StateSchema,
    canonicalize_quaternion,
    encode_targets,
    fit_normalization,
    uniform_bin_edges,
)


def synth_schema(
    num_objects: int = 2,
    num_materials: int = 3,
    num_lighting: int = 3,
    shape_bins: int = 4,
    joint_dim: int = 7,
    ee_dim: int = 6,
    extent_range: tuple[float, float] = (0.05, 0.8),
) -> StateSchema:
    """Schema with uniform shape-bin edges spanning the sampling range."""
    corners = np.array([[extent_range[0]] * 3, [extent_range[1]] * 3])
    return StateSchema(
        num_objects=num_objects,
        num_materials=num_materials,
        num_lighting=num_lighting,
        shape_bins=shape_bins,
        joint_dim=joint_dim,
        ee_dim=ee_dim,
        shape_bin_edges=uniform_bin_edges(corners, shape_bins),
    )


@dataclass(frozen=True)
class GenConfig:
    """Generator settings for one pseudo-backbone family."""

    schema: StateSchema
    num_frames: int
    channels: int
    image_size: tuple[int, int] = (224, 224)
    seed: int = 0
    embed_seed: int = 0
    embedding_gain: float = 8.0
    invisible_prob: float = 0.1
    extent_range: tuple[float, float] = (0.05, 0.8)
    max_box_cells: int = 3
    name: str = "synth"

    def __post_init__(self):
        if self.num_frames < 1:
            raise ValueError("num_frames must be >= 1")
        d = self.env_width + (self.object_width if self.schema.num_objects else 0)
        if self.channels < d:
            raise ValueError(
                f"channels ({self.channels}) must be >= embedded target width ({d})"
            )
        if not 0 <= self.invisible_prob < 1:
            raise ValueError("invisible_prob must be in [0, 1)")
        if not 0 < self.extent_range[0] < self.extent_range[1]:
            raise ValueError("extent_range must be positive and increasing")
        if self.embedding_gain <= 0:
            raise ValueError("embedding_gain must be > 0")
        if not 1 <= self.max_box_cells <= min(PROBE_GRID):
            raise ValueError("max_box_cells must fit inside the probe grid")

    @property
    def object_width(self) -> int:
        s = self.schema
        return OBJECT_CONT_DIMS + s.num_materials + 3 * s.shape_bins

    @property
    def env_width(self) -> int:
        s = self.schema
        return s.joint_dim + s.ee_dim + s.num_lighting

    @property
    def target_width(self) -> int:
        return self.object_width + self.env_width


def embedding_matrices(cfg: GenConfig) -> tuple[np.ndarray, np.ndarray]:
    """Fixed random embedding with orthonormal columns, scaled by the gain."""
    rng = np.random.default_rng(cfg.embed_seed)
    obj_width = cfg.object_width if cfg.schema.num_objects else 0
    g = rng.standard_normal((cfg.channels, obj_width + cfg.env_width))
    q, _ = np.linalg.qr(g)
    a = cfg.embedding_gain * q
    return a[:, :obj_width], a[:, obj_width:]


def _place_boxes(
    rng: np.random.Generator, visible: Sequence[bool], cfg: GenConfig
) -> list[tuple[int, int, int, int] | None]:
    """Non-overlapping cell rectangles (r0, r1, c0, c1) for visible objects."""
    gh, gw = PROBE_GRID
    occupied = np.zeros((gh, gw), dtype=bool)
    rects: list[tuple[int, int, int, int] | None] = []
    for vis in visible:
        if not vis:
            rects.append(None)
            continue
        placed = None
        for _ in range(100):
            h = int(rng.integers(1, cfg.max_box_cells + 1))
            w = int(rng.integers(1, cfg.max_box_cells + 1))
            r = int(rng.integers(0, gh - h + 1))
            c = int(rng.integers(0, gw - w + 1))
            if not occupied[r : r + h, c : c + w].any():
                placed = (r, r + h, c, c + w)
                break
        if placed is None:
            free = np.argwhere(~occupied)
            if len(free) == 0:
                raise ValueError(
                    f"cannot place {len(visible)} non-overlapping boxes on the "
                    f"{gh}x{gw} grid"
                )
            r, c = (int(v) for v in free[0])
            placed = (r, r + 1, c, c + 1)
        occupied[placed[0] : placed[1], placed[2] : placed[3]] = True
        rects.append(placed)
    return rects


def _cells_to_bbox(
    rect: tuple[int, int, int, int], image_size: tuple[int, int]
) -> np.ndarray:
    gh, gw = PROBE_GRID
    r0, r1, c0, c1 = rect
    width, height = image_size
    return np.array(
        [c0 * width / gw, r0 * height / gh, c1 * width / gw, r1 * height / gh],
        dtype=np.float32,
    )


def _bbox_to_cells(bbox: np.ndarray, image_size: tuple[int, int]) -> tuple[int, int, int, int]:
    gh, gw = PROBE_GRID
    width, height = image_size
    x1, y1, x2, y2 = (float(v) for v in bbox)
    return (
        int(round(y1 * gh / height)),
        int(round(y2 * gh / height)),
        int(round(x1 * gw / width)),
        int(round(x2 * gw / width)),
    )


def generate_scene(
    seed, cfg: GenConfig
) -> tuple[list[ObjectState], EnvState, np.ndarray]:
    """Sample one scene: object states, env state and pixel-space boxes.

    Positions are uniform in the unit cube, orientations uniform on the
    quaternion sphere (canonicalized), extents log-uniform over the
    configured range, classes uniform, joints uniform in [-pi, pi), the
    end-effector pose uniform in [0, 1). Boxes occupy non-overlapping
    cell-aligned rectangles; invisible objects get a zero box.
    """
    rng = np.random.default_rng(seed)
    schema = cfg.schema
    log_lo, log_hi = np.log(cfg.extent_range[0]), np.log(cfg.extent_range[1])

    objects = []
    for _ in range(schema.num_objects):
        quat = canonicalize_quaternion(rng.standard_normal(4))
        objects.append(
            ObjectState(
                position=rng.random(3),
                quaternion=quat,
                extent=np.exp(rng.uniform(log_lo, log_hi, size=3)),
                material=int(rng.integers(0, schema.num_materials)),
                visible=bool(rng.random() >= cfg.invisible_prob),
            )
        )
    env = EnvState(
        lighting=int(rng.integers(0, schema.num_lighting)),
        joints=rng.uniform(-np.pi, np.pi, size=schema.joint_dim),
        ee_pose=rng.random(schema.ee_dim),
    )
    rects = _place_boxes(rng, [o.visible for o in objects], cfg)
    bboxes = np.zeros((schema.num_objects, 4), dtype=np.float32)
    for i, rect in enumerate(rects):
        if rect is not None:
            bboxes[i] = _cells_to_bbox(rect, cfg.image_size)
    return objects, env, bboxes


def render_features(
    scene: tuple[list[ObjectState], EnvState, np.ndarray],
    cfg: GenConfig,
    noise_level: float,
    stats: NormStats,
    embedding: tuple[np.ndarray, np.ndarray],
    noise_seed,
) -> Frame:
    """Write embedded targets into the cells of each visible object's box,
    add the embedded scene-level target everywhere, then white noise."""
    if noise_level < 0 or not np.isfinite(noise_level):
        raise ValueError(f"noise_level must be finite and >= 0, got {noise_level}")
    objects, env, bboxes = scene
    schema = cfg.schema
    a_obj, a_env = embedding
    target = encode_targets(objects, env, schema, stats)
    gh, gw = PROBE_GRID
    content = np.zeros((cfg.channels, gh, gw))

    t_env = np.zeros(cfg.env_width)
    n_env_cont = schema.joint_dim + schema.ee_dim
    t_env[:n_env_cont] = target.continuous[schema.num_objects * OBJECT_CONT_DIMS :]
    t_env[n_env_cont + target.lighting] = 1.0
    content += (a_env @ t_env)[:, None, None]

    for i, obj in enumerate(objects):
        if not obj.visible:
            continue
        t_obj = np.zeros(cfg.object_width)
        lo = i * OBJECT_CONT_DIMS
        t_obj[:OBJECT_CONT_DIMS] = target.continuous[lo : lo + OBJECT_CONT_DIMS]
        pos = OBJECT_CONT_DIMS
        t_obj[pos + target.object_classes[i, 0]] = 1.0
        pos += schema.num_materials
        for axis in range(3):
            t_obj[pos + target.object_classes[i, axis + 1]] = 1.0
            pos += schema.shape_bins
        r0, r1, c0, c1 = _bbox_to_cells(bboxes[i], cfg.image_size)
        content[:, r0:r1, c0:c1] += (a_obj @ t_obj)[:, None, None]

    if noise_level > 0:
        noise_rng = np.random.default_rng(noise_seed)
        content = content + noise_level * noise_rng.standard_normal(content.shape)

    return Frame(
        feature_map=content.astype(np.float32),
        bboxes=bboxes,
        image_size=cfg.image_size,
        objects=objects,
        env=env,
    )


def _scene_seed(cfg: GenConfig, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([cfg.seed, 0, index])


def _noise_seed(cfg: GenConfig, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([cfg.seed, 1, index])


def generate_model_family(
    cfg: GenConfig, noise_levels: Sequence[float]
) -> list[ProbeDataset]:
    """One dataset per noise level over identical scenes and labels.

    The per-frame noise draw is shared across levels and scaled, so
    features differ only in noise strength and labels are byte-identical.
    """
    levels = [float(x) for x in noise_levels]
    if not levels:
        raise ValueError("noise_levels must be non-empty")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError(f"noise levels must be strictly ascending, got {levels}")
    if levels[0] < 0:
        raise ValueError("noise levels must be >= 0")

    scenes = [
        generate_scene(_scene_seed(cfg, i), cfg) for i in range(cfg.num_frames)
    ]
    stats = fit_normalization([(objs, env) for objs, env, _ in scenes], cfg.schema)
    embedding = embedding_matrices(cfg)

    datasets = []
    for level in levels:
        frames = [
            render_features(scene, cfg, level, stats, embedding, _noise_seed(cfg, i))
            for i, scene in enumerate(scenes)
        ]
        datasets.append(
            ProbeDataset(
                name=f"{cfg.name}-noise{level:g}",
                schema=cfg.schema,
                frames=frames,
            )
        )
    return datasets


def generate_dataset(cfg: GenConfig, noise_level: float = 0.0) -> ProbeDataset:
    """Single dataset at one noise level (same draws as the family path)."""
    return generate_model_family(cfg, [noise_level])[0]
