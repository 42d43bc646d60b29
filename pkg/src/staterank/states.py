"""Unified environment-state layout and its encoding into probe targets.

A scene is described by one block per object (position, orientation
quaternion, box extents, material class) plus a single scene-level block
(lighting class, robot joint angles, end-effector pose). Continuous
coordinates are standardized with training-set statistics and regressed;
categorical coordinates become class indices scored by classifiers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Canonical state-group labels used in score files, subset selection and reports.
STATE_GROUPS = ("p_pose", "q_pose", "s_shape", "m_mat", "q_j", "p_ee", "l")
CONTINUOUS_GROUPS = ("p_pose", "q_pose", "q_j", "p_ee")
CATEGORICAL_GROUPS = ("s_shape", "m_mat", "l")

# Continuous coordinates per object: xyz position + wxyz quaternion.
OBJECT_CONT_DIMS = 7


def _as_edge_tuples(edges) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in edge) for edge in edges)


@dataclass(frozen=True)
class StateSchema:
    """Declares the layout of the unified state vector.

    `shape_bin_edges` holds one monotone edge array per box edge (x, y, z),
    each with `shape_bins + 1` strictly increasing entries in meters.
    """

    num_objects: int
    num_materials: int
    num_lighting: int
    shape_bins: int
    joint_dim: int
    ee_dim: int
    shape_bin_edges: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "shape_bin_edges", _as_edge_tuples(self.shape_bin_edges))
        if self.num_objects < 0:
            raise ValueError("num_objects must be >= 0")
        if self.num_materials < 2:
            raise ValueError("num_materials must be >= 2")
        if self.num_lighting < 2:
            raise ValueError("num_lighting must be >= 2")
        if self.shape_bins < 2:
            raise ValueError("shape_bins must be >= 2")
        if self.joint_dim < 1:
            raise ValueError("joint_dim must be >= 1")
        if self.ee_dim < 1:
            raise ValueError("ee_dim must be >= 1")
        if len(self.shape_bin_edges) != 3:
            raise ValueError("shape_bin_edges must hold 3 per-edge arrays")
        for axis, edge in enumerate(self.shape_bin_edges):
            if len(edge) != self.shape_bins + 1:
                raise ValueError(
                    f"edge array {axis} must have shape_bins+1={self.shape_bins + 1} entries"
                )
            if not all(a < b for a, b in zip(edge, edge[1:])):
                raise ValueError(f"edge array {axis} must be strictly increasing")

    @property
    def state_dim(self) -> int:
        """Flat dimension of the compact state vector.

        Per object: 3 position + 4 quaternion + 3 extents + M-way one-hot
        material; scene block: 1 lighting + joints + end-effector dims.
        """
        per_object = 3 + 4 + 3 + self.num_materials
        return self.num_objects * per_object + 1 + self.joint_dim + self.ee_dim

    @property
    def continuous_dim(self) -> int:
        """Length of the standardized continuous target block."""
        return self.num_objects * OBJECT_CONT_DIMS + self.joint_dim + self.ee_dim

    @property
    def object_categorical_sizes(self) -> tuple[int, int, int, int]:
        """Class counts per object: material + the three shape-edge bins."""
        s = self.shape_bins
        return (self.num_materials, s, s, s)

    @property
    def target_dim(self) -> int:
        """Flattened probe-target length: continuous dims + one-hot widths."""
        per_object_onehot = self.num_materials + 3 * self.shape_bins
        return self.continuous_dim + self.num_objects * per_object_onehot + self.num_lighting

    def to_dict(self) -> dict:
        return {
            "num_objects": self.num_objects,
            "num_materials": self.num_materials,
            "num_lighting": self.num_lighting,
            "shape_bins": self.shape_bins,
            "joint_dim": self.joint_dim,
            "ee_dim": self.ee_dim,
            "shape_bin_edges": [list(edge) for edge in self.shape_bin_edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateSchema":
        return cls(
            num_objects=int(d["num_objects"]),
            num_materials=int(d["num_materials"]),
            num_lighting=int(d["num_lighting"]),
            shape_bins=int(d["shape_bins"]),
            joint_dim=int(d["joint_dim"]),
            ee_dim=int(d["ee_dim"]),
            shape_bin_edges=d["shape_bin_edges"],
        )


def uniform_bin_edges(extents: np.ndarray, bins: int = 16) -> tuple[tuple[float, ...], ...]:
    """Uniform per-edge bin edges spanning the min/max of training extents.

    `extents` is (K, 3). A degenerate edge range is widened to +-0.5 around
    the constant value so edges stay strictly increasing.
    """
    extents = np.asarray(extents, dtype=np.float64)
    if extents.ndim != 2 or extents.shape[1] != 3 or extents.shape[0] < 1:
        raise ValueError("extents must be a (K, 3) array with K >= 1")
    edges = []
    for axis in range(3):
        lo = float(extents[:, axis].min())
        hi = float(extents[:, axis].max())
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        edges.append(tuple(np.linspace(lo, hi, bins + 1).tolist()))
    return tuple(edges)


def _vec(x, n: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float32)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class ObjectState:
    """Pose, box extents, material class and visibility of one object.

    Quaternion order is (w, x, y, z); stored canonically with w >= 0.
    """

    position: np.ndarray
    quaternion: np.ndarray
    extent: np.ndarray
    material: int
    visible: bool

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position, 3, "position"))
        object.__setattr__(self, "quaternion", _vec(self.quaternion, 4, "quaternion"))
        object.__setattr__(self, "extent", _vec(self.extent, 3, "extent"))
        object.__setattr__(self, "material", int(self.material))
        object.__setattr__(self, "visible", bool(self.visible))

    def validate(self, schema: StateSchema) -> None:
        if not np.isfinite(self.position).all():
            raise ValueError("object position must be finite")
        if not np.isfinite(self.quaternion).all():
            raise ValueError("object quaternion must be finite")
        norm = float(np.linalg.norm(self.quaternion.astype(np.float64)))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {norm} not within 1e-6 of 1")
        if self.quaternion[0] < 0:
            raise ValueError("quaternion not canonical (w < 0)")
        if not (np.isfinite(self.extent).all() and (self.extent > 0).all()):
            raise ValueError("object extents must be finite and positive")
        if not 0 <= self.material < schema.num_materials:
            raise ValueError(f"material index {self.material} out of range")

    @property
    def continuous(self) -> np.ndarray:
        """The 7 regressed coordinates: position then quaternion, float64."""
        return np.concatenate(
            [self.position.astype(np.float64), self.quaternion.astype(np.float64)]
        )


@dataclass(frozen=True)
class EnvState:
    """Scene-level state: lighting class, joint angles, end-effector pose."""

    lighting: int
    joints: np.ndarray
    ee_pose: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lighting", int(self.lighting))
        object.__setattr__(self, "joints", np.asarray(self.joints, dtype=np.float32))
        object.__setattr__(self, "ee_pose", np.asarray(self.ee_pose, dtype=np.float32))
        if self.joints.ndim != 1 or self.ee_pose.ndim != 1:
            raise ValueError("joints and ee_pose must be 1-D")

    def validate(self, schema: StateSchema) -> None:
        if self.joints.shape != (schema.joint_dim,):
            raise ValueError(
                f"joints must have shape ({schema.joint_dim},), got {self.joints.shape}"
            )
        if self.ee_pose.shape != (schema.ee_dim,):
            raise ValueError(
                f"ee_pose must have shape ({schema.ee_dim},), got {self.ee_pose.shape}"
            )
        if not (np.isfinite(self.joints).all() and np.isfinite(self.ee_pose).all()):
            raise ValueError("env state must be finite")
        if not 0 <= self.lighting < schema.num_lighting:
            raise ValueError(f"lighting index {self.lighting} out of range")

    @property
    def continuous(self) -> np.ndarray:
        return np.concatenate(
            [self.joints.astype(np.float64), self.ee_pose.astype(np.float64)]
        )


@dataclass(frozen=True)
class NormStats:
    """Per-dimension standardization statistics fitted on training data.

    Layout: dims [0:7] are the object coordinates (xyz position, wxyz
    quaternion) pooled over all visible objects; dims [7:7+N_j] the joint
    angles; the rest the end-effector pose. Constant training dims carry
    std 1.0 and are flagged in `constant` so standardizing them is a no-op.
    """

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=np.float64))
        object.__setattr__(self, "constant", np.asarray(self.constant, dtype=bool))
        if not (self.mean.shape == self.std.shape == self.constant.shape):
            raise ValueError("mean/std/constant must have identical shapes")
        if not (self.std > 0).all():
            raise ValueError("all stored stddevs must be > 0")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def object_slice(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mean[:OBJECT_CONT_DIMS], self.std[:OBJECT_CONT_DIMS]

    def env_slice(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mean[OBJECT_CONT_DIMS:], self.std[OBJECT_CONT_DIMS:]


def fit_normalization(
    train_states: Sequence[tuple[Sequence[ObjectState], EnvState]],
    schema: StateSchema,
) -> NormStats:
    """Fit per-dimension mean/stddev (population) from training frames.

    Object coordinates pool every visible object across frames; a single
    shared linear head serves all objects, so their targets must share one
    standardization. Dims with no variance (or no visible samples) get
    mean taken as-is (0 when empty), std 1.0, and a constant flag.
    """
    if len(train_states) < 2:
        raise ValueError(f"need at least 2 training frames, got {len(train_states)}")

    obj_rows = []
    env_rows = []
    for objects, env in train_states:
        for obj in objects:
            if obj.visible:
                obj_rows.append(obj.continuous)
        env_rows.append(env.continuous)

    dim = OBJECT_CONT_DIMS + schema.joint_dim + schema.ee_dim
    mean = np.zeros(dim)
    std = np.ones(dim)
    constant = np.zeros(dim, dtype=bool)

    if obj_rows:
        obj_mat = np.stack(obj_rows)
        mean[:OBJECT_CONT_DIMS] = obj_mat.mean(axis=0)
        obj_std = obj_mat.std(axis=0)
        flat = obj_std < 1e-12
        std[:OBJECT_CONT_DIMS] = np.where(flat, 1.0, obj_std)
        constant[:OBJECT_CONT_DIMS] = flat
    else:
        constant[:OBJECT_CONT_DIMS] = True

    env_mat = np.stack(env_rows)
    if env_mat.shape[1] != schema.joint_dim + schema.ee_dim:
        raise ValueError("env state length does not match schema")
    mean[OBJECT_CONT_DIMS:] = env_mat.mean(axis=0)
    env_std = env_mat.std(axis=0)
    flat = env_std < 1e-12
    std[OBJECT_CONT_DIMS:] = np.where(flat, 1.0, env_std)
    constant[OBJECT_CONT_DIMS:] = flat

    return NormStats(mean=mean, std=std, constant=constant)


def standardize(x: float, dim_stats: tuple[float, float]) -> float:
    """z = (x - mu) / sigma for one dimension."""
    mu, sigma = dim_stats
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return (x - mu) / sigma


def canonicalize_quaternion(q: np.ndarray) -> np.ndarray:
    """Normalize to unit length and fix the q / -q sign ambiguity.

    Canonical form has w >= 0; if w == 0 the first nonzero of (x, y, z)
    is made positive. Returns float64; the rotation is unchanged.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have shape (4,), got {q.shape}")
    norm = float(np.linalg.norm(q))
    if norm <= 1e-9:
        raise ValueError(f"quaternion norm {norm} too close to zero")
    u = q / norm
    if u[0] < 0:
        u = -u
    elif u[0] == 0:
        for comp in u[1:]:
            if comp != 0:
                if comp < 0:
                    u = -u
                break
    return u


def quantize_shape(extent: np.ndarray, schema: StateSchema) -> np.ndarray:
    """Map box edge lengths to per-edge bin indices.

    Bin b covers [edges[b], edges[b+1]); out-of-range extents clamp to the
    first or last bin.
    """
    extent = np.asarray(extent, dtype=np.float64)
    if extent.shape != (3,):
        raise ValueError(f"extent must have shape (3,), got {extent.shape}")
    bins = np.empty(3, dtype=np.int64)
    for axis in range(3):
        edges = np.asarray(schema.shape_bin_edges[axis])
        b = int(np.searchsorted(edges, extent[axis], side="right")) - 1
        bins[axis] = min(max(b, 0), schema.shape_bins - 1)
    return bins


@dataclass(frozen=True)
class TargetVector:
    """Probe targets for one frame.

    `continuous` stacks per-object [position, quaternion] blocks followed
    by [joints, ee_pose], standardized. `object_classes` holds per-object
    [material, shape-bin x, y, z] indices. Dims of invisible objects stay
    in place but are masked out.
    """

    continuous: np.ndarray
    continuous_mask: np.ndarray
    object_classes: np.ndarray
    object_mask: np.ndarray
    lighting: int

    def __post_init__(self):
        if self.continuous.shape != self.continuous_mask.shape:
            raise ValueError("continuous and continuous_mask shapes differ")


def encode_targets(
    objects: Sequence[ObjectState],
    env: EnvState,
    schema: StateSchema,
    stats: NormStats,
) -> TargetVector:
    """Standardize continuous dims and emit class indices per the schema."""
    if len(objects) != schema.num_objects:
        raise ValueError(
            f"expected {schema.num_objects} objects, got {len(objects)}"
        )
    env.validate(schema)
    expected_dim = OBJECT_CONT_DIMS + schema.joint_dim + schema.ee_dim
    if stats.dim != expected_dim:
        raise ValueError(
            f"stats dimension {stats.dim} does not match schema ({expected_dim})"
        )

    n = schema.num_objects
    cont = np.zeros(schema.continuous_dim)
    cont_mask = np.zeros(schema.continuous_dim, dtype=bool)
    classes = np.zeros((n, 4), dtype=np.int64)
    obj_mask = np.zeros(n, dtype=bool)

    obj_mean, obj_std = stats.object_slice()
    for i, obj in enumerate(objects):
        obj.validate(schema)
        lo = i * OBJECT_CONT_DIMS
        cont[lo : lo + OBJECT_CONT_DIMS] = (obj.continuous - obj_mean) / obj_std
        cont_mask[lo : lo + OBJECT_CONT_DIMS] = obj.visible
        classes[i, 0] = obj.material
        classes[i, 1:] = quantize_shape(obj.extent, schema)
        obj_mask[i] = obj.visible

    env_mean, env_std = stats.env_slice()
    cont[n * OBJECT_CONT_DIMS :] = (env.continuous - env_mean) / env_std
    cont_mask[n * OBJECT_CONT_DIMS :] = True

    return TargetVector(
        continuous=cont,
        continuous_mask=cont_mask,
        object_classes=classes,
        object_mask=obj_mask,
        lighting=env.lighting,
    )
