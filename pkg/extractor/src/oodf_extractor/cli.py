"""Command-line feature extraction.

Writes the OODF file plus a JSON manifest (``<out>.manifest.json``)
listing processed and skipped images.
"""

import argparse
import json
import logging
import sys

from .extract import ExtractionSpec, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodf-extract",
        description="Export multi-layer GAP image features to an OODF file",
    )
    parser.add_argument("--images", required=True, help="image directory")
    parser.add_argument("--out", required=True, help="output .oodf path")
    parser.add_argument(
        "--no-normalize-final",
        action="store_true",
        help="keep the final layer unnormalized",
    )
    parser.add_argument(
        "--weights",
        choices=("pretrained", "random"),
        default="pretrained",
        help="backbone weights; 'random' is a fixed-seed offline variant",
    )
    parser.add_argument("--batch-size", type=int, default=32)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    spec = ExtractionSpec(
        images_dir=args.images,
        normalize_final=not args.no_normalize_final,
        weights=args.weights,
        batch_size=args.batch_size,
    )
    try:
        manifest = extract(spec, args.out)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    manifest_path = f"{args.out}.manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(
        f"wrote {args.out} ({manifest['n_images']} images, "
        f"{len(manifest['skipped'])} skipped) and {manifest_path}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
