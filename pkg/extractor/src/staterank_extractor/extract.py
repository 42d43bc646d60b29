"""Offline extraction pipeline: images + labels -> probe dataset directory."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbones import BackboneSpec, extract_feature_map, load_backbone
from .blobs import write_blob
from .labels import read_labels

DATASET_FORMAT_VERSION = 1


class ExtractionError(Exception):
    """Raised when the image/label inputs are inconsistent."""


def preprocess_image(path: Path, spec: BackboneSpec) -> torch.Tensor:
    try:
        with Image.open(path) as img:
            img = img.convert("RGB").resize(
                (spec.input_size, spec.input_size), Image.BILINEAR
            )
            array = np.asarray(img, dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise ExtractionError(f"image {path}: file not found") from None
    mean = np.asarray(spec.norm_mean, dtype=np.float32)
    std = np.asarray(spec.norm_std, dtype=np.float32)
    array = (array - mean) / std
    return torch.from_numpy(array.transpose(2, 0, 1))


def extract(
    images_dir: Path | str,
    labels_path: Path | str,
    spec: BackboneSpec,
    out_dir: Path | str,
    batch_size: int = 16,
) -> Path:
    """Write one probe-dataset directory for this backbone.

    Deterministic: eval mode, no grad, single-threaded compute, so
    repeated extraction of the same inputs is bit-identical.
    """
    images_dir = Path(images_dir)
    out_dir = Path(out_dir)
    schema, frames = read_labels(labels_path)
    for frame in frames:
        if not (images_dir / frame.image).is_file():
            raise ExtractionError(f"image {images_dir / frame.image}: file not found")

    model = load_backbone(spec)
    old_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        maps: list[np.ndarray] = []
        for lo in range(0, len(frames), batch_size):
            chunk = frames[lo : lo + batch_size]
            batch = torch.stack(
                [preprocess_image(images_dir / f.image, spec) for f in chunk]
            )
            fmaps = extract_feature_map(spec, model, batch)
            maps.extend(fmaps.to(torch.float32).cpu().numpy())
    finally:
        torch.set_num_threads(old_threads)

    shape = maps[0].shape
    for i, fm in enumerate(maps):
        if fm.shape != shape:
            raise ExtractionError(
                f"frame {i}: feature shape {fm.shape} differs from {shape}"
            )
        if not np.isfinite(fm).all():
            raise ExtractionError(f"frame {i}: feature map contains NaN or Inf")

    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)
    frame_ids = [f"{i:06d}" for i in range(len(frames))]
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "name": spec.name,
        "dtype": "f32le",
        "feature_shape": [int(d) for d in shape],
        "num_frames": len(frames),
        "schema": schema,
        "split_seed": None,
        "frames": frame_ids,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    for fid, fm, frame in zip(frame_ids, maps, frames):
        write_blob(out_dir / "features" / f"{fid}.bin", fm)
        write_blob(out_dir / "labels" / f"{fid}.bin", frame.vector)
    return out_dir
