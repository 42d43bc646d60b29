"""Simulator state-label ingestion.

The exporter side produces one `labels.json` per image folder::

    {
      "schema": {"num_objects": ..., "num_materials": ..., "num_lighting": ...,
                 "shape_bins": ..., "joint_dim": ..., "ee_dim": ...,
                 "shape_bin_edges": [[...], [...], [...]]},
      "frames": [
        {"image": "000000.png",
         "image_size": [width, height],
         "objects": [{"position": [x, y, z],
                      "quaternion": [w, x, y, z],
                      "extent": [ex, ey, ez],
                      "material": 0,
                      "visible": true,
                      "bbox": [x1, y1, x2, y2]}, ...],
         "env": {"lighting": 0, "joints": [...], "ee_pose": [...]}}
      ]
    }

Quaternions are normalized and sign-canonicalized (w >= 0, ties broken on
the first nonzero of x, y, z) at ingest, matching the dataset contract.
The per-frame label vector mirrors the documented record layout:
[image w/h | per object: position, quaternion, extent, material, visible,
bbox | lighting | joints | ee pose], all float32.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class LabelError(Exception):
    """Raised when the label file is malformed or inconsistent."""


@dataclass(frozen=True)
class FrameLabels:
    image: str
    image_size: tuple[int, int]
    vector: np.ndarray  # packed float32 label record


def canonical_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise LabelError(f"quaternion must have 4 entries, got {q.shape}")
    norm = float(np.linalg.norm(q))
    if norm <= 1e-9:
        raise LabelError("quaternion norm too close to zero")
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


def _pack_frame(frame: dict, schema: dict, path: Path, index: int) -> FrameLabels:
    where = f"{path} frame {index}"
    try:
        image = frame["image"]
        width, height = (int(v) for v in frame["image_size"])
        objects = frame["objects"]
        env = frame["env"]
    except (KeyError, TypeError, ValueError) as e:
        raise LabelError(f"{where}: missing or malformed field ({e})") from None
    n_obj = int(schema["num_objects"])
    n_j = int(schema["joint_dim"])
    n_ee = int(schema["ee_dim"])
    if len(objects) != n_obj:
        raise LabelError(f"{where}: {len(objects)} objects, schema expects {n_obj}")

    vec = np.zeros(2 + 16 * n_obj + 1 + n_j + n_ee, dtype=np.float32)
    vec[0], vec[1] = width, height
    pos = 2
    for i, obj in enumerate(objects):
        try:
            rec = vec[pos : pos + 16]
            rec[0:3] = np.asarray(obj["position"], dtype=np.float64)
            rec[3:7] = canonical_quaternion(obj["quaternion"])
            rec[7:10] = np.asarray(obj["extent"], dtype=np.float64)
            rec[10] = int(obj["material"])
            rec[11] = 1.0 if obj["visible"] else 0.0
            rec[12:16] = np.asarray(obj["bbox"], dtype=np.float64)
        except (KeyError, TypeError, ValueError, LabelError) as e:
            raise LabelError(f"{where}, object {i}: {e}") from None
        pos += 16
    try:
        vec[pos] = int(env["lighting"])
        pos += 1
        joints = np.asarray(env["joints"], dtype=np.float64)
        ee = np.asarray(env["ee_pose"], dtype=np.float64)
        if joints.shape != (n_j,) or ee.shape != (n_ee,):
            raise LabelError(
                f"joints/ee_pose shapes {joints.shape}/{ee.shape} do not match "
                f"schema ({n_j},)/({n_ee},)"
            )
        vec[pos : pos + n_j] = joints
        vec[pos + n_j :] = ee
    except (KeyError, TypeError, ValueError) as e:
        raise LabelError(f"{where}: env block malformed ({e})") from None
    return FrameLabels(image=str(image), image_size=(width, height), vector=vec)


def read_labels(path: Path | str) -> tuple[dict, list[FrameLabels]]:
    path = Path(path)
    if not path.is_file():
        raise LabelError(f"{path}: label file not found")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise LabelError(f"{path}: invalid JSON ({e})") from None
    try:
        schema = payload["schema"]
        frames = payload["frames"]
    except (KeyError, TypeError):
        raise LabelError(f"{path}: expected top-level 'schema' and 'frames'") from None
    if not frames:
        raise LabelError(f"{path}: no frames listed")
    return schema, [_pack_frame(f, schema, path, i) for i, f in enumerate(frames)]
