"""``hoso-extract``: turn an image-folder dataset into a feature bank."""

from __future__ import annotations

import argparse
import os
import sys

from .extract import extract
from .spec import BACKBONES, ExtractError, ExtractSpec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hoso-extract", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="embed one dataset into a bank directory")
    p.add_argument("--dataset", required=True, help="dataset name (recorded in the manifest)")
    p.add_argument("--backbone", default="RN50", choices=sorted(BACKBONES))
    p.add_argument("--out", required=True, help="output bank directory")
    p.add_argument("--augmented", action="store_true",
                   help="also emit weak/strong view features for the train split")
    p.add_argument("--split-dir",
                   help="dataset root with train/ and test/ folders "
                        "(default: <data-root>/<dataset>)")
    p.add_argument("--data-root", default="data")
    p.add_argument("--template", default="a photo of a {}.")
    p.add_argument("--checkpoint", help="local weights file (see README layout)")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--device", default="cpu")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = ExtractSpec(
        dataset=args.dataset,
        split_dir=args.split_dir or os.path.join(args.data_root, args.dataset),
        backbone=args.backbone,
        template=args.template,
        batch_size=args.batch_size,
        device=args.device,
        emit_augmented=args.augmented,
        out=args.out,
        checkpoint=args.checkpoint,
        seed=args.seed,
    )
    try:
        extract(spec)
    except ExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
