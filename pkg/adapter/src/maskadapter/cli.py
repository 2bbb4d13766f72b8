"""Command line export driver.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable manifest,
annotations, images, or model).
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .export import AdapterConfig, export_detections

USAGE_ERROR, DATA_ERROR = 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


class Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise CliError(message, USAGE_ERROR)


def build_parser() -> Parser:
    parser = Parser(prog="maskadapter", description=__doc__)
    parser.add_argument("--manifest", required=True, help="mask manifest JSON")
    parser.add_argument("--annotations", required=True, help="COCO-style annotations JSON")
    parser.add_argument("--model", required=True, help="built-in name or module:attribute factory")
    parser.add_argument("--out", required=True, help="detections fixture output path")
    parser.add_argument("--image-dir", default=None, help="image files; omit to use a test pattern")
    parser.add_argument("--resize-edge", type=int, default=None, help="long-edge resize before detection")
    parser.add_argument("--workers", type=int, default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        report = export_detections(
            AdapterConfig(
                manifest_path=args.manifest,
                annotations_path=args.annotations,
                model_entry=args.model,
                out_path=args.out,
                image_dir=args.image_dir,
                resize_edge=args.resize_edge,
                workers=args.workers,
            )
        )
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    print(
        f"images={report.images_written} views={report.views_per_image} "
        f"skipped={len(report.skipped)} hash={report.manifest_sha256}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
