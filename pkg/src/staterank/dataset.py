"""On-disk probe dataset format: reading, writing, validation, splitting.

Directory layout:

    manifest.json      dataset name, format version, schema, feature shape,
                       frame id list, split seed
    features/NNNNNN.bin   one (C, H, W) float32 blob per frame
    labels/NNNNNN.bin     one flat float32 blob per frame

Label vector layout (all float32)::

    [0] image width, [1] image height
    per object (16 values):
        position xyz | quaternion wxyz | extent xyz |
        material index | visible flag | bbox x1 y1 x2 y2
    lighting index | joints [N_j] | ee pose [N_ee]

Boxes are stored in source-image pixel coordinates; pooling owns the
rescaling onto the probe grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blob import BlobFormatError, read_blob, write_blob
from .states import EnvState, ObjectState, StateSchema

FORMAT_VERSION = 1
_OBJECT_RECORD = 16


class DatasetError(Exception):
    """Raised on invalid dataset contents or a malformed on-disk layout."""


@dataclass(frozen=True)
class Frame:
    """One sample: a feature map plus its state labels and object boxes."""

    feature_map: np.ndarray
    bboxes: np.ndarray
    image_size: tuple[int, int]
    objects: tuple[ObjectState, ...]
    env: EnvState

    def __post_init__(self):
        object.__setattr__(
            self, "feature_map", np.asarray(self.feature_map, dtype=np.float32)
        )
        bboxes = np.asarray(self.bboxes, dtype=np.float32).reshape(-1, 4)
        object.__setattr__(self, "bboxes", bboxes)
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.feature_map.ndim != 3:
            raise DatasetError(
                f"feature map must be (C, H, W), got shape {self.feature_map.shape}"
            )

    def validate(self, schema: StateSchema) -> None:
        c, h, w = self.feature_map.shape
        if min(c, h, w) <= 0:
            raise DatasetError(f"feature map dims must be positive, got {(c, h, w)}")
        if not np.isfinite(self.feature_map).all():
            raise DatasetError("feature map contains NaN or Inf")
        if len(self.objects) != schema.num_objects:
            raise DatasetError(
                f"frame has {len(self.objects)} objects, schema expects {schema.num_objects}"
            )
        if self.bboxes.shape != (schema.num_objects, 4):
            raise DatasetError(
                f"bboxes must have shape ({schema.num_objects}, 4), got {self.bboxes.shape}"
            )
        width, height = self.image_size
        if width <= 0 or height <= 0:
            raise DatasetError(f"image size must be positive, got {self.image_size}")
        if not np.isfinite(self.bboxes).all():
            raise DatasetError("bboxes contain NaN or Inf")
        for i, obj in enumerate(self.objects):
            try:
                obj.validate(schema)
            except ValueError as e:
                raise DatasetError(f"object {i}: {e}") from None
            if obj.visible:
                x1, y1, x2, y2 = (float(v) for v in self.bboxes[i])
                if not (0 <= x1 < x2 <= width and 0 <= y1 < y2 <= height):
                    raise DatasetError(
                        f"visible object {i} bbox {(x1, y1, x2, y2)} outside "
                        f"image bounds {self.image_size}"
                    )
        try:
            self.env.validate(schema)
        except ValueError as e:
            raise DatasetError(f"env state: {e}") from None


@dataclass
class ProbeDataset:
    """An in-memory dataset of frames for one backbone."""

    name: str
    schema: StateSchema
    frames: list[Frame]
    split_seed: int | None = None

    @property
    def feature_shape(self) -> tuple[int, int, int]:
        if not self.frames:
            raise DatasetError("dataset has no frames")
        return tuple(self.frames[0].feature_map.shape)

    def validate(self) -> None:
        if not self.frames:
            raise DatasetError(f"dataset '{self.name}' has no frames")
        shape = self.frames[0].feature_map.shape
        for idx, frame in enumerate(self.frames):
            if frame.feature_map.shape != shape:
                raise DatasetError(
                    f"frame {idx} feature shape {frame.feature_map.shape} "
                    f"differs from {shape}"
                )
            try:
                frame.validate(self.schema)
            except DatasetError as e:
                raise DatasetError(f"frame {idx}: {e}") from None


def _label_length(schema: StateSchema) -> int:
    return 2 + _OBJECT_RECORD * schema.num_objects + 1 + schema.joint_dim + schema.ee_dim


def pack_labels(frame: Frame, schema: StateSchema) -> np.ndarray:
    out = np.zeros(_label_length(schema), dtype=np.float32)
    out[0], out[1] = frame.image_size
    pos = 2
    for i, obj in enumerate(frame.objects):
        rec = out[pos : pos + _OBJECT_RECORD]
        rec[0:3] = obj.position
        rec[3:7] = obj.quaternion
        rec[7:10] = obj.extent
        rec[10] = obj.material
        rec[11] = 1.0 if obj.visible else 0.0
        rec[12:16] = frame.bboxes[i]
        pos += _OBJECT_RECORD
    out[pos] = frame.env.lighting
    pos += 1
    out[pos : pos + schema.joint_dim] = frame.env.joints
    pos += schema.joint_dim
    out[pos:] = frame.env.ee_pose
    return out


def unpack_labels(
    vec: np.ndarray, schema: StateSchema, feature_map: np.ndarray
) -> Frame:
    expected = _label_length(schema)
    if vec.shape != (expected,):
        raise DatasetError(
            f"label vector has length {vec.shape}, expected ({expected},)"
        )
    image_size = (int(vec[0]), int(vec[1]))
    pos = 2
    objects = []
    bboxes = np.zeros((schema.num_objects, 4), dtype=np.float32)
    for i in range(schema.num_objects):
        rec = vec[pos : pos + _OBJECT_RECORD]
        objects.append(
            ObjectState(
                position=rec[0:3],
                quaternion=rec[3:7],
                extent=rec[7:10],
                material=int(rec[10]),
                visible=bool(rec[11] != 0.0),
            )
        )
        bboxes[i] = rec[12:16]
        pos += _OBJECT_RECORD
    lighting = int(vec[pos])
    pos += 1
    joints = vec[pos : pos + schema.joint_dim]
    pos += schema.joint_dim
    ee_pose = vec[pos:]
    return Frame(
        feature_map=feature_map,
        bboxes=bboxes,
        image_size=image_size,
        objects=objects,
        env=EnvState(lighting=lighting, joints=joints, ee_pose=ee_pose),
    )


def _frame_id(index: int) -> str:
    return f"{index:06d}"


def write_dataset(dataset: ProbeDataset, directory: Path | str) -> None:
    """Validate and persist a dataset; the round trip is bit-exact."""
    dataset.validate()
    directory = Path(directory)
    (directory / "features").mkdir(parents=True, exist_ok=True)
    (directory / "labels").mkdir(parents=True, exist_ok=True)

    frame_ids = [_frame_id(i) for i in range(len(dataset.frames))]
    manifest = {
        "format_version": FORMAT_VERSION,
        "name": dataset.name,
        "dtype": "f32le",
        "feature_shape": list(dataset.feature_shape),
        "num_frames": len(dataset.frames),
        "schema": dataset.schema.to_dict(),
        "split_seed": dataset.split_seed,
        "frames": frame_ids,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    for fid, frame in zip(frame_ids, dataset.frames):
        write_blob(directory / "features" / f"{fid}.bin", frame.feature_map)
        write_blob(directory / "labels" / f"{fid}.bin", pack_labels(frame, dataset.schema))


def read_dataset(directory: Path | str) -> ProbeDataset:
    """Load and validate a dataset directory written by `write_dataset`."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetError(f"{manifest_path}: manifest missing")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetError(f"{manifest_path}: invalid JSON ({e})") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DatasetError(
            f"{manifest_path}: unsupported format version {version!r} "
            f"(supported: {FORMAT_VERSION})"
        )
    if manifest.get("dtype") != "f32le":
        raise DatasetError(f"{manifest_path}: unsupported dtype {manifest.get('dtype')!r}")
    schema = StateSchema.from_dict(manifest["schema"])
    feature_shape = tuple(manifest["feature_shape"])
    frame_ids = manifest["frames"]
    if len(frame_ids) != manifest["num_frames"]:
        raise DatasetError(
            f"{manifest_path}: frame list length {len(frame_ids)} does not "
            f"match num_frames {manifest['num_frames']}"
        )

    frames = []
    for fid in frame_ids:
        feat_path = directory / "features" / f"{fid}.bin"
        label_path = directory / "labels" / f"{fid}.bin"
        try:
            features = read_blob(feat_path)
        except BlobFormatError as e:
            raise DatasetError(str(e)) from None
        if features.shape != feature_shape:
            raise DatasetError(
                f"{feat_path}: shape {features.shape} does not match manifest "
                f"{feature_shape}"
            )
        try:
            labels = read_blob(label_path)
        except BlobFormatError as e:
            raise DatasetError(str(e)) from None
        frames.append(unpack_labels(labels, schema, features))

    dataset = ProbeDataset(
        name=manifest["name"],
        schema=schema,
        frames=frames,
        split_seed=manifest.get("split_seed"),
    )
    dataset.validate()
    return dataset


def split(
    dataset: ProbeDataset, val_fraction: float, seed: int
) -> tuple[ProbeDataset, ProbeDataset]:
    """Deterministic disjoint train/val split.

    Validation gets round(val_fraction * N) frames (half-up), clamped so
    both sides stay non-empty.
    """
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = len(dataset.frames)
    if n < 2:
        raise DatasetError(f"dataset '{dataset.name}' too small to split ({n} frames)")
    n_val = int(np.floor(val_fraction * n + 0.5))
    n_val = min(max(n_val, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    val_idx = sorted(int(i) for i in perm[:n_val])
    train_idx = sorted(int(i) for i in perm[n_val:])
    train = ProbeDataset(
        name=f"{dataset.name}-train",
        schema=dataset.schema,
        frames=[dataset.frames[i] for i in train_idx],
        split_seed=seed,
    )
    val = ProbeDataset(
        name=f"{dataset.name}-val",
        schema=dataset.schema,
        frames=[dataset.frames[i] for i in val_idx],
        split_seed=seed,
    )
    return train, val
