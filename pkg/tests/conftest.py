from __future__ import annotations

import numpy as np
import pytest

from staterank.dataset import Frame, ProbeDataset
from staterank.states import EnvState, ObjectState, StateSchema, canonicalize_quaternion

EDGES = ((0.0, 0.25, 0.5, 0.75, 1.0),) * 3


def small_schema(num_objects: int = 2) -> StateSchema:
    return StateSchema(
        num_objects=num_objects,
        num_materials=3,
        num_lighting=3,
        shape_bins=4,
        joint_dim=2,
        ee_dim=3,
        shape_bin_edges=EDGES,
    )


def random_object(rng: np.random.Generator, schema: StateSchema, visible=None) -> ObjectState:
    return ObjectState(
        position=rng.random(3),
        quaternion=canonicalize_quaternion(rng.standard_normal(4)),
        extent=rng.uniform(0.05, 0.95, size=3),
        material=int(rng.integers(0, schema.num_materials)),
        visible=bool(rng.random() > 0.2) if visible is None else visible,
    )


def random_env(rng: np.random.Generator, schema: StateSchema) -> EnvState:
    return EnvState(
        lighting=int(rng.integers(0, schema.num_lighting)),
        joints=rng.standard_normal(schema.joint_dim),
        ee_pose=rng.standard_normal(schema.ee_dim),
    )


def random_frame(
    rng: np.random.Generator,
    schema: StateSchema,
    shape=(5, 7, 7),
    image_size=(64, 48),
) -> Frame:
    width, height = image_size
    bboxes = np.zeros((schema.num_objects, 4), dtype=np.float32)
    objects = []
    for i in range(schema.num_objects):
        obj = random_object(rng, schema)
        objects.append(obj)
        if obj.visible:
            x1 = rng.uniform(0, width - 2)
            y1 = rng.uniform(0, height - 2)
            bboxes[i] = [x1, y1, rng.uniform(x1 + 1, width), rng.uniform(y1 + 1, height)]
    return Frame(
        feature_map=rng.standard_normal(shape).astype(np.float32),
        bboxes=bboxes,
        image_size=image_size,
        objects=objects,
        env=random_env(rng, schema),
    )


def random_dataset(
    seed: int = 0,
    num_frames: int = 4,
    schema: StateSchema | None = None,
    shape=(5, 7, 7),
    name: str = "testset",
) -> ProbeDataset:
    rng = np.random.default_rng(seed)
    schema = schema or small_schema()
    frames = [random_frame(rng, schema, shape=shape) for _ in range(num_frames)]
    return ProbeDataset(name=name, schema=schema, frames=frames)


@pytest.fixture
def schema() -> StateSchema:
    return small_schema()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
