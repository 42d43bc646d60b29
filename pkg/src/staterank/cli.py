"""Command-line pipeline: synthesize datasets, train probes, rank backbones.

Subcommands:
    synth   write synthetic probe datasets at one or more noise levels
    train   train + evaluate one probe per dataset directory
    rank    aggregate score files against a success-rate table

`STATERANK_THREADS` caps parallelism across models/datasets.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .dataset import DatasetError, read_dataset, split, write_dataset
from .probe import PerStateScores, TrainConfig, evaluate, save_model, train_probe
from .ranking import RankInput, rank_report, write_report
from .scoring import (
    ScoreMatrix,
    aggregate,
    build_score_matrix,
    leave_one_out,
    normalize_scores,
    subset_score,
    write_matrix_csv,
)
from .synth import GenConfig, generate_model_family, synth_schema


class CliError(Exception):
    """User-facing error; the message names the failing artifact."""


def _max_workers(n_tasks: int) -> int:
    env = os.environ.get("STATERANK_THREADS", "").strip()
    cap = int(env) if env else (os.cpu_count() or 1)
    if cap < 1:
        raise CliError(f"STATERANK_THREADS must be >= 1, got {env!r}")
    return max(1, min(cap, n_tasks))


def cmd_synth(args: argparse.Namespace) -> None:
    try:
        levels = [float(x) for x in args.noise.split(",") if x.strip() != ""]
    except ValueError:
        raise CliError(f"--noise {args.noise!r}: not a comma-separated float list")
    schema = synth_schema(
        num_objects=args.objects,
        num_materials=args.materials,
        num_lighting=args.lighting,
        shape_bins=args.shape_bins,
        joint_dim=args.joints,
        ee_dim=args.ee_dim,
    )
    try:
        cfg = GenConfig(
            schema=schema,
            num_frames=args.frames,
            channels=args.channels,
            seed=args.seed,
            embed_seed=args.seed,
            name=args.name,
        )
        datasets = generate_model_family(cfg, levels)
    except ValueError as e:
        raise CliError(str(e))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for ds in datasets:
        write_dataset(ds, out / ds.name)
        print(f"wrote {out / ds.name} ({len(ds.frames)} frames)")


def _train_one(dataset_dir: Path, out_dir: Path, args: argparse.Namespace) -> str:
    if not (dataset_dir / "manifest.json").is_file():
        raise CliError(f"dataset path {dataset_dir}: no manifest.json found")
    ds = read_dataset(dataset_dir)
    train_set, val_set = split(ds, args.val_fraction, args.seed)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
    )
    model = train_probe(train_set, cfg)
    scores = evaluate(model, val_set)
    model_dir = out_dir / ds.name
    save_model(model, model_dir / "model")
    payload = {
        "model_id": ds.name,
        "seed": args.seed,
        "per_state": scores.to_dict(),
    }
    (model_dir / "scores.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )
    return ds.name


def _manifest_name(dataset_dir: Path) -> str:
    manifest = dataset_dir / "manifest.json"
    if not manifest.is_file():
        raise CliError(f"dataset path {dataset_dir}: no manifest.json found")
    try:
        return str(json.loads(manifest.read_text())["name"])
    except (json.JSONDecodeError, KeyError) as e:
        raise CliError(f"dataset path {dataset_dir}: malformed manifest ({e})")


def cmd_train(args: argparse.Namespace) -> None:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dirs = [Path(d) for d in args.dataset]
    names = [_manifest_name(d) for d in dirs]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise CliError(
            f"datasets share manifest name(s) {sorted(dupes)}; outputs would collide"
        )
    workers = _max_workers(len(dirs))
    if workers == 1:
        for d in dirs:
            _train_one(d, out_dir, args)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda d: _train_one(d, out_dir, args), dirs))
    for name in names:
        print(f"trained {name}: {out_dir / name / 'scores.json'}")


def read_success_table(path: Path) -> dict[str, float]:
    """Parse `model_id,success_rate` rows; extra numeric columns average."""
    if not path.is_file():
        raise CliError(f"success table {path}: file not found")
    rates: dict[str, float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            row = [cell.strip() for cell in row]
            if not row or not any(row):
                continue
            if lineno == 1 and row[0].lower() in ("model_id", "model"):
                continue
            if len(row) < 2:
                raise CliError(
                    f"success table {path}, line {lineno}: expected "
                    f"'model_id,success_rate[,...]', got {','.join(row)!r}"
                )
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise CliError(
                    f"success table {path}, line {lineno}: non-numeric success rate"
                )
            rates[row[0]] = float(np.mean(values))
    if not rates:
        raise CliError(f"success table {path}: no data rows")
    return rates


def _load_scores(paths: list[Path]) -> dict[str, PerStateScores]:
    out: dict[str, PerStateScores] = {}
    for p in paths:
        if p.is_dir():
            files = sorted(p.glob("*/scores.json"))
            if not files:
                raise CliError(f"scores path {p}: no */scores.json files inside")
            out.update(_load_scores(files))
            continue
        if not p.is_file():
            raise CliError(f"scores file {p}: not found")
        try:
            payload = json.loads(p.read_text())
            model_id = payload["model_id"]
            scores = PerStateScores.from_dict(payload["per_state"])
        except (json.JSONDecodeError, KeyError) as e:
            raise CliError(f"scores file {p}: malformed ({e})")
        if model_id in out:
            raise CliError(f"scores file {p}: duplicate model id {model_id!r}")
        out[model_id] = scores
    return out


def _emit_report(
    matrix: ScoreMatrix,
    proxy: dict[str, float],
    success: dict[str, float],
    out_dir: Path,
    label: str,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    models = list(matrix.models)
    inp = RankInput(
        models=tuple(models),
        success=np.array([success[m] for m in models]),
        proxy=np.array([proxy[m] for m in models]),
    )
    report = rank_report(inp)
    write_report(report, out_dir / "report.json", out_dir / "report.txt")
    with open(out_dir / "proxy_scores.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_id", "proxy_score", "success_rate"])
        for m in models:
            writer.writerow([m, repr(proxy[m]), repr(success[m])])
    print(f"[{label}] MMRV {report.mmrv:.4f}  Pearson r {report.pearson_r:.4f}")
    print(f"[{label}] wrote {out_dir / 'report.json'}")


def cmd_rank(args: argparse.Namespace) -> None:
    score_map = _load_scores([Path(p) for p in args.scores])
    if len(score_map) < 2:
        raise CliError(f"need scores for at least 2 models, got {len(score_map)}")
    success = read_success_table(Path(args.success_table))
    missing = sorted(set(score_map) - set(success))
    if missing:
        raise CliError(
            f"success table {args.success_table}: no success rate for model(s) "
            f"{', '.join(missing)}"
        )

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix = normalize_scores(build_score_matrix(score_map))
    write_matrix_csv(matrix, out_dir / "score_matrix_raw.csv", "raw")
    write_matrix_csv(matrix, out_dir / "score_matrix_normalized.csv", "normalized")
    _emit_report(matrix, aggregate(matrix), success, out_dir, "full")

    if args.subset:
        names = [s.strip() for s in args.subset.split(",") if s.strip()]
        try:
            sub_scores = subset_score(matrix, names)
        except ValueError as e:
            raise CliError(f"--subset: {e}")
        _emit_report(
            matrix, sub_scores, success, out_dir / ("subset-" + "-".join(names)),
            f"subset {','.join(names)}",
        )

    if args.leave_one_out:
        rows = []
        for omitted, scores in leave_one_out(matrix).items():
            models = list(matrix.models)
            inp = RankInput(
                models=tuple(models),
                success=np.array([success[m] for m in models]),
                proxy=np.array([scores[m] for m in models]),
            )
            report = rank_report(inp)
            rows.append((omitted, report.mmrv, report.pearson_r))
        with open(out_dir / "leave_one_out.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["omitted_state", "mmrv", "pearson_r"])
            for omitted, m, r in rows:
                writer.writerow([omitted, repr(m), repr(r)])
        print(f"[leave-one-out] wrote {out_dir / 'leave_one_out.csv'}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="staterank",
        description="Rank visual backbones by linear state-prediction probes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate synthetic probe datasets")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--frames", type=int, default=200)
    p_synth.add_argument("--channels", type=int, default=64)
    p_synth.add_argument("--noise", default="0", help="comma-separated noise levels")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--name", default="synth")
    p_synth.add_argument("--objects", type=int, default=2)
    p_synth.add_argument("--materials", type=int, default=3)
    p_synth.add_argument("--lighting", type=int, default=3)
    p_synth.add_argument("--shape-bins", type=int, default=4)
    p_synth.add_argument("--joints", type=int, default=7)
    p_synth.add_argument("--ee-dim", type=int, default=6)
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train one probe per dataset")
    p_train.add_argument(
        "--dataset", action="append", required=True, help="dataset directory (repeatable)"
    )
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p_train.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p_train.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    p_train.add_argument("--val-fraction", type=float, default=0.2)
    p_train.set_defaults(func=cmd_train)

    p_rank = sub.add_parser("rank", help="rank models against success rates")
    p_rank.add_argument(
        "--scores",
        action="append",
        required=True,
        help="scores.json file or a train output directory (repeatable)",
    )
    p_rank.add_argument("--success-table", required=True)
    p_rank.add_argument("--out", required=True)
    p_rank.add_argument("--subset", help="comma-separated state names")
    p_rank.add_argument("--leave-one-out", action="store_true")
    p_rank.set_defaults(func=cmd_rank)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (CliError, DatasetError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
