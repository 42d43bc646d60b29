"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and runtimes.
"""

from __future__ import annotations

import time
from contextlib import contextmanager

import numpy as np
import pytest

from staterank.blob import HEADER_SIZE
from staterank.dataset import DatasetError, read_dataset, split, write_dataset
from staterank.pooling import global_pool, resize_to_grid, roi_pool
from staterank.probe import TrainConfig, ce_loss, evaluate, mse_loss, save_model, train_probe
from staterank.ranking import RankInput, mmrv, pearson
from staterank.scoring import ScoreMatrix, aggregate, build_score_matrix, normalize_scores
from staterank.synth import GenConfig, generate_dataset, generate_model_family, synth_schema

from conftest import random_dataset
from test_dataset import frames_equal
from test_ranking import mmrv_oracle


@contextmanager
def criterion(name: str):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL ({time.monotonic() - start:.1f}s)")
        raise
    print(f"ACCEPTANCE {name}: PASS ({time.monotonic() - start:.1f}s)")


def random_rank_instance(rng) -> RankInput:
    n = int(rng.integers(2, 13))
    success = rng.random(n)
    proxy = rng.standard_normal(n)
    if rng.random() < 0.25 and n >= 3:
        success[1] = success[0]
    if rng.random() < 0.25 and n >= 3:
        proxy[2] = proxy[0]
    return RankInput(
        models=tuple(f"m{i}" for i in range(n)), success=success, proxy=proxy
    )


def test_mmrv_oracle_equivalence():
    with criterion("MMRV oracle equivalence (1000 instances, bitwise)"):
        rng = np.random.default_rng(101)
        start = time.monotonic()
        for _ in range(1000):
            inp = random_rank_instance(rng)
            ours = mmrv(inp)
            oracle = mmrv_oracle(list(inp.success), list(inp.proxy))
            assert ours == oracle  # bitwise on doubles
        assert time.monotonic() - start < 5.0


def test_mmrv_monotone_invariance():
    with criterion("MMRV invariance under strictly increasing transforms"):
        rng = np.random.default_rng(102)
        for _ in range(200):
            inp = random_rank_instance(rng)
            base = mmrv(inp)
            for _ in range(5):
                a = float(rng.uniform(0.1, 10.0))
                b = float(rng.standard_normal())
                kind = rng.integers(0, 4)
                s = inp.proxy
                if kind == 0:
                    s2 = a * s + b
                elif kind == 1:
                    s2 = np.exp(a * s)
                elif kind == 2:
                    s2 = a * s**3 + s + b
                else:
                    s2 = np.arctan(s) * a + b
                transformed = RankInput(models=inp.models, success=inp.success, proxy=s2)
                assert abs(mmrv(transformed) - base) <= 1e-12


def test_pearson_affine_invariance_and_bounds():
    with criterion("Pearson bounds and positive-affine identity"):
        rng = np.random.default_rng(103)
        checked = 0
        while checked < 1000:
            inp = random_rank_instance(rng)
            try:
                r = pearson(inp)
            except ValueError:
                continue
            assert abs(r) <= 1.0 + 1e-12
            checked += 1
        for _ in range(200):
            n = int(rng.integers(2, 13))
            base = rng.random(n)
            if base.max() == base.min():
                continue
            a = float(rng.uniform(0.05, 20.0))
            b = float(rng.standard_normal() * 10)
            inp = RankInput(
                models=tuple(f"m{i}" for i in range(n)),
                success=base,
                proxy=a * base + b,
            )
            assert pearson(inp) == pytest.approx(1.0, abs=1e-9)


def test_gradient_checks():
    with criterion("Loss gradients vs central differences"):
        rng = np.random.default_rng(104)
        eps = 1e-4

        def rel(a, b):
            return abs(a - b) / max(abs(a), abs(b), 1e-8)

        for _ in range(100):
            k = int(rng.integers(2, 10))
            logits = rng.standard_normal(k) * 2.0
            target = int(rng.integers(0, k))
            _, grad = ce_loss(logits, target)
            for i in range(k):
                bump = np.zeros(k)
                bump[i] = eps
                numeric = (ce_loss(logits + bump, target)[0] - ce_loss(logits - bump, target)[0]) / (2 * eps)
                assert rel(grad[i], numeric) < 1e-4
        for _ in range(100):
            n = int(rng.integers(1, 12))
            pred = rng.standard_normal(n) * 3
            target = rng.standard_normal(n)
            mask = rng.random(n) > 0.25
            _, grad = mse_loss(pred, target, mask)
            for i in range(n):
                bump = np.zeros(n)
                bump[i] = eps
                numeric = (
                    mse_loss(pred + bump, target, mask)[0]
                    - mse_loss(pred - bump, target, mask)[0]
                ) / (2 * eps)
                assert rel(grad[i], numeric) < 1e-4


def test_pooling_identities():
    with criterion("Pooling identities on 100 random maps"):
        rng = np.random.default_rng(105)
        for _ in range(100):
            fm = rng.standard_normal((int(rng.integers(1, 6)), 7, 7))
            image = (int(rng.integers(16, 512)), int(rng.integers(16, 512)))
            # full-image box equals global pooling, exactly
            full = [0.0, 0.0, float(image[0]), float(image[1])]
            assert np.array_equal(roi_pool(fm, full, image), global_pool(fm))
            # linearity within 1e-6
            other = rng.standard_normal(fm.shape)
            alpha, beta = rng.standard_normal(2)
            x1 = rng.uniform(0, image[0] - 2)
            y1 = rng.uniform(0, image[1] - 2)
            bbox = [x1, y1, rng.uniform(x1 + 1, image[0]), rng.uniform(y1 + 1, image[1])]
            lhs = roi_pool(alpha * fm + beta * other, bbox, image)
            rhs = alpha * roi_pool(fm, bbox, image) + beta * roi_pool(other, bbox, image)
            assert np.abs(lhs - rhs).max() < 1e-6
            # constant-map preservation through resizing, exact
            c = float(rng.standard_normal() * 10)
            src = np.full((2, int(rng.integers(1, 30)), int(rng.integers(1, 30))), c)
            assert (resize_to_grid(src, (7, 7)) == c).all()
            # constant maps through pooling (supporting check)
            const = np.full(fm.shape, c)
            assert np.abs(roi_pool(const, bbox, image) - c).max() < 1e-12
            assert np.abs(global_pool(const) - c).max() < 1e-12


def acceptance_schema():
    # N_o=2, M=3, L=3, S=4 shape bins, N_j=7, N_ee=6
    return synth_schema(
        num_objects=2, num_materials=3, num_lighting=3, shape_bins=4,
        joint_dim=7, ee_dim=6,
    )


def test_synthetic_recovery_zero_noise():
    with criterion("Synthetic zero-noise recovery (800 train / 200 val)"):
        start = time.monotonic()
        cfg = GenConfig(
            schema=acceptance_schema(),
            num_frames=1000,
            channels=64,
            seed=0,
            embed_seed=0,
        )
        ds = generate_dataset(cfg, 0.0)
        train, val = split(ds, 0.2, seed=7)
        assert len(train.frames) == 800 and len(val.frames) == 200
        model = train_probe(train, TrainConfig(seed=0))
        scores = evaluate(model, val).scores
        for name in ("m_mat", "s_shape", "l"):
            assert scores[name] >= 0.99, (name, scores[name])
        for name in ("p_pose", "q_pose", "q_j", "p_ee"):
            assert -scores[name] <= 1e-3, (name, scores[name])
        assert time.monotonic() - start < 120.0


def test_end_to_end_ranking_fidelity():
    with criterion("End-to-end ranking fidelity across the noise family"):
        start = time.monotonic()
        levels = [0.0, 0.1, 0.3, 1.0, 3.0]
        cfg = GenConfig(
            schema=acceptance_schema(),
            num_frames=2000,
            channels=64,
            seed=0,
            embed_seed=0,
            embedding_gain=0.7,
        )
        family = generate_model_family(cfg, levels)
        per_model = {}
        for ds in family:
            tr, va = split(ds, 0.2, seed=7)
            per_model[ds.name] = evaluate(train_probe(tr, TrainConfig(seed=0)), va)
        matrix = normalize_scores(build_score_matrix(per_model))
        proxy = aggregate(matrix)
        s_m = np.array([proxy[ds.name] for ds in family])
        assert all(a > b for a, b in zip(s_m, s_m[1:])), s_m

        # ground-truth quality proxy: -log(noise + eps), min-max mapped to [0, 1]
        quality = -np.log(np.array(levels) + 1.0)
        quality01 = (quality - quality.min()) / (quality.max() - quality.min())
        inp = RankInput(
            models=tuple(ds.name for ds in family), success=quality01, proxy=s_m
        )
        assert mmrv(inp) == 0.0
        assert pearson(inp) > 0.9, pearson(inp)
        assert time.monotonic() - start < 600.0


def test_normalization_properties():
    with criterion("Proxy-score normalization properties"):
        rng = np.random.default_rng(106)
        for _ in range(100):
            n_models = int(rng.integers(2, 7))
            n_states = int(rng.integers(1, 6))
            # dyadic rationals keep the affine arithmetic exact in floats
            raw = rng.integers(-2048, 2048, size=(n_models, n_states)).astype(np.float64) / 16.0
            models = tuple(f"m{i}" for i in range(n_models))
            states = tuple(f"s{j}" for j in range(n_states))
            base_matrix = normalize_scores(ScoreMatrix(models=models, states=states, raw=raw))
            try:
                base = aggregate(base_matrix)
            except ValueError:
                continue  # every state degenerate
            scales = 2.0 ** rng.integers(-3, 4, size=n_states)
            shifts = rng.integers(-64, 65, size=n_states).astype(np.float64)
            rescaled = aggregate(
                normalize_scores(
                    ScoreMatrix(models=models, states=states, raw=raw * scales + shifts)
                )
            )
            assert rescaled == base  # exact
            # appending a degenerate (constant) state must not alter S_m
            padded = np.hstack([raw, np.full((n_models, 1), 0.5)])
            with_constant = aggregate(
                normalize_scores(
                    ScoreMatrix(models=models, states=states + ("flat",), raw=padded)
                )
            )
            assert with_constant == base


def test_format_round_trip():
    with criterion("Binary format round-trip + corruption detection (50 datasets)"):
        import tempfile
        from pathlib import Path

        rng = np.random.default_rng(107)
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            for k in range(50):
                shape = (int(rng.integers(1, 7)), int(rng.integers(1, 12)), int(rng.integers(1, 12)))
                ds = random_dataset(
                    seed=int(rng.integers(0, 2**31)),
                    num_frames=int(rng.integers(1, 5)),
                    shape=shape,
                    name=f"rt{k}",
                )
                where = tmp / f"rt{k}"
                write_dataset(ds, where)
                back = read_dataset(where)
                assert len(back.frames) == len(ds.frames)
                for fa, fb in zip(ds.frames, back.frames):
                    assert frames_equal(fa, fb)
            # flip one payload byte in one blob: checksum must catch it
            victim = tmp / "rt0" / "features" / "000000.bin"
            raw = bytearray(victim.read_bytes())
            raw[HEADER_SIZE + 1] ^= 0x10
            victim.write_bytes(bytes(raw))
            with pytest.raises(DatasetError, match="checksum"):
                read_dataset(tmp / "rt0")


def test_determinism_byte_identical():
    with criterion("Seeded determinism: byte-identical weights and scores"):
        import json
        import tempfile
        from pathlib import Path

        cfg = GenConfig(
            schema=acceptance_schema(), num_frames=120, channels=64, seed=5, embed_seed=5
        )
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            outputs = []
            for run in ("run1", "run2"):
                ds = generate_dataset(cfg, 0.3)
                train, val = split(ds, 0.2, seed=7)
                model = train_probe(train, TrainConfig(seed=0))
                scores = evaluate(model, val)
                save_model(model, tmp / run / "model")
                (tmp / run / "scores.json").write_text(
                    json.dumps(scores.to_dict(), indent=2, sort_keys=True) + "\n"
                )
                outputs.append(tmp / run)
            a, b = outputs
            files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
            files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
            assert files_a == files_b
            for rel in files_a:
                assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
