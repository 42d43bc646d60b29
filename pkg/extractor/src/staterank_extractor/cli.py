"""Command-line wrapper around the extraction pipeline."""

from __future__ import annotations

import argparse
import sys

from .backbones import BackboneError, BackboneSpec
from .extract import ExtractionError, extract
from .labels import LabelError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="staterank-extract",
        description="Export one backbone's feature maps as a probe dataset.",
    )
    parser.add_argument("--images", required=True, help="image folder")
    parser.add_argument("--labels", required=True, help="labels.json from the simulator export")
    parser.add_argument("--out", required=True, help="output dataset directory")
    parser.add_argument("--name", required=True, help="model id for the manifest")
    parser.add_argument("--family", required=True, choices=["cnn", "vit", "hooked"])
    parser.add_argument("--arch", help="torchvision constructor, e.g. resnet18 or vit_b_16")
    parser.add_argument("--checkpoint", help="state-dict path (with --arch) or pickled module")
    parser.add_argument("--feature-module", help="submodule to read the map from")
    parser.add_argument("--input-size", type=int, default=224)
    parser.add_argument("--batch-size", type=int, default=16)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = BackboneSpec(
            name=args.name,
            family=args.family,
            arch=args.arch,
            checkpoint=args.checkpoint,
            feature_module=args.feature_module,
            input_size=args.input_size,
        )
        out = extract(args.images, args.labels, spec, args.out, args.batch_size)
    except (BackboneError, ExtractionError, LabelError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
