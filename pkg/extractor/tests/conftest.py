from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

SCHEMA = {
    "num_objects": 2,
    "num_materials": 3,
    "num_lighting": 3,
    "shape_bins": 4,
    "joint_dim": 7,
    "ee_dim": 6,
    "shape_bin_edges": [[0.0, 0.25, 0.5, 0.75, 1.0]] * 3,
}


def make_frame_record(rng: np.random.Generator, image: str, size=(64, 64)) -> dict:
    width, height = size
    objects = []
    for _ in range(SCHEMA["num_objects"]):
        x1 = float(rng.uniform(0, width - 8))
        y1 = float(rng.uniform(0, height - 8))
        objects.append(
            {
                "position": [float(v) for v in rng.random(3)],
                "quaternion": [float(v) for v in rng.standard_normal(4)],
                "extent": [float(v) for v in rng.uniform(0.05, 0.95, 3)],
                "material": int(rng.integers(0, SCHEMA["num_materials"])),
                "visible": True,
                "bbox": [x1, y1, float(rng.uniform(x1 + 4, width)), float(rng.uniform(y1 + 4, height))],
            }
        )
    return {
        "image": image,
        "image_size": list(size),
        "objects": objects,
        "env": {
            "lighting": int(rng.integers(0, SCHEMA["num_lighting"])),
            "joints": [float(v) for v in rng.standard_normal(SCHEMA["joint_dim"])],
            "ee_pose": [float(v) for v in rng.standard_normal(SCHEMA["ee_dim"])],
        },
    }


def write_image(path: Path, rng: np.random.Generator | None = None, size=(64, 64)) -> None:
    if rng is None:
        pixels = np.full((size[1], size[0], 3), 128, dtype=np.uint8)
    else:
        pixels = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    Image.fromarray(pixels, "RGB").save(path)


@pytest.fixture
def sample_export(tmp_path: Path) -> tuple[Path, Path]:
    """Image folder + labels.json for 4 random frames."""
    rng = np.random.default_rng(0)
    images = tmp_path / "images"
    images.mkdir()
    frames = []
    for i in range(4):
        name = f"{i:06d}.png"
        write_image(images / name, rng)
        frames.append(make_frame_record(rng, name))
    labels = tmp_path / "labels.json"
    labels.write_text(json.dumps({"schema": SCHEMA, "frames": frames}))
    return images, labels
