"""Command line front end.

Subcommands: gen-masks, synth, infer, certify, eval, attack-sim. Every knob
is a kebab-case flag; a config file (INI sections of key=value, keys matching
flag names) supplies defaults that explicit flags override. Exit codes:
0 success, 1 usage or config error, 2 data or schema error, 3 certified
property violated.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from typing import Optional, Sequence

from .certification import (
    CertConfig,
    PatchSpec,
    attack_soundness_suite,
    certify_dataset,
)
from .datagen import make_synthetic_images
from .detector import (
    SyntheticDetector,
    SyntheticDetectorConfig,
    load_annotations,
    load_fixture,
    precompute_store,
    write_annotations,
    write_fixture,
)
from .masking import (
    MaskSetConfig,
    generate_mask_set,
    generate_two_patch_mask_set,
    load_manifest,
    manifest_hash,
    to_manifest,
    write_manifest,
)
from .metrics import MatchConfig, average_precision, certr_at_recall, pr_sweep
from .pipeline import ThresholdConfig, robust_infer
from .pruning import PruneConfig

THREADS_ENV = "MASKCERT_THREADS"

USAGE_ERROR, DATA_ERROR, PROPERTY_VIOLATION = 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


class Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse defaults to exit code 2
        raise CliError(message, USAGE_ERROR)


def _add_mask_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--num-lines", type=int, default=30, help="cut lines per axis")


def _add_threshold_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--base-threshold", type=float, default=0.0)
    p.add_argument("--masked-floor", type=float, default=0.0)
    p.add_argument("--coupling", type=float, default=0.0)


def _add_prune_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--prune-mode", choices=["ioa", "iou"], default="ioa")
    p.add_argument("--ioa-threshold", type=float, default=0.6)
    p.add_argument("--iou-threshold", type=float, default=0.8)
    p.add_argument("--overlap-ioa-threshold", type=float, default=0.6)
    p.add_argument("--cluster-eps", type=float, default=0.1)
    p.add_argument("--nonoverlap-margin", type=float, default=0.05)
    p.add_argument("--class-agnostic", action=argparse.BooleanOptionalAction, default=False)


def _add_cert_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bound", choices=["ioa", "iou"], default="ioa")
    p.add_argument("--certify-threshold", type=float, default=0.0)
    p.add_argument("--iou-certify-threshold", type=float, default=0.5)
    p.add_argument("--certify-class", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--engine", choices=["vectorized", "scalar"], default="vectorized")


def _add_patch_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--patch-area", type=float, default=0.01, help="patch area fraction")
    p.add_argument("--patch-aspect", type=float, default=1.0)
    p.add_argument("--patch-width", type=int, default=None)
    p.add_argument("--patch-height", type=int, default=None)
    p.add_argument("--patch-stride", type=int, default=1)
    p.add_argument("--patch-count", type=int, choices=[1, 2], default=1)


def _add_io_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--annotations", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--fixture", required=True)


def build_parser() -> Parser:
    root = Parser(prog="maskcert", description=__doc__)
    root.add_argument("--config", default=None, help="INI config file with flag defaults")
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-masks", parents=[], help="write a mask manifest")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    _add_mask_opts(p)
    p.add_argument("--two-patch", action="store_true", help="two-patch composite mask set")
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset and detections")
    p.add_argument("--images", type=int, default=20)
    p.add_argument("--objects", type=int, default=2)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels", type=int, default=3)
    p.add_argument("--min-visible-fraction", type=float, default=0.3)
    _add_mask_opts(p)
    p.add_argument("--two-patch", action="store_true")
    p.add_argument("--annotations", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--fixture", required=True)

    p = sub.add_parser("infer", help="robust inference over a detections fixture")
    _add_io_opts(p)
    _add_threshold_opts(p)
    _add_prune_opts(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("certify", help="certify per-object robustness")
    _add_io_opts(p)
    _add_threshold_opts(p)
    _add_prune_opts(p)
    _add_cert_opts(p)
    _add_patch_opts(p)
    p.add_argument("--report", default=None, help="write the full JSON report here")
    p.add_argument("--csv", default=None, help="write per-model rates as CSV")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("eval", help="clean AP sweep and certified recall")
    _add_io_opts(p)
    _add_threshold_opts(p)
    _add_prune_opts(p)
    _add_cert_opts(p)
    _add_patch_opts(p)
    p.add_argument("--match-iou", type=float, default=0.5)
    p.add_argument("--recall-target", type=float, default=None)
    p.add_argument("--sweep-out", default=None, help="write PR sweep points as CSV")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("attack-sim", help="adaptive attacks against issued certificates")
    _add_io_opts(p)
    _add_threshold_opts(p)
    _add_prune_opts(p)
    _add_cert_opts(p)
    _add_patch_opts(p)
    p.add_argument("--trials-per-case", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    return root


def _coerce(raw: str):
    lowered = raw.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw.strip()


def apply_config_file(parser: Parser, argv: Sequence[str]) -> None:
    """Load INI defaults so explicit flags still win."""
    probe = Parser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    ini = configparser.ConfigParser()
    read = ini.read(known.config)
    if not read:
        raise CliError(f"config file not found: {known.config}", USAGE_ERROR)
    overrides = {}
    for section in ini.sections():
        for key, raw in ini.items(section):
            overrides[key.replace("-", "_")] = _coerce(raw)
    for action in parser._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
        valid = {a.dest for a in action._actions}
        action.set_defaults(**{k: v for k, v in overrides.items() if k in valid})
    unknown = overrides.keys() - {
        a.dest
        for sp in parser._subparsers._group_actions[0].choices.values()  # type: ignore[union-attr]
        for a in sp._actions
    }
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}", USAGE_ERROR)


def _thresholds(args: argparse.Namespace) -> ThresholdConfig:
    return ThresholdConfig(
        base_threshold=args.base_threshold,
        masked_floor=args.masked_floor,
        coupling=args.coupling,
    )


def _prune_cfg(args: argparse.Namespace) -> PruneConfig:
    return PruneConfig(
        mode=args.prune_mode,
        ioa_threshold=args.ioa_threshold,
        iou_threshold=args.iou_threshold,
        overlap_ioa_threshold=args.overlap_ioa_threshold,
        cluster_eps=args.cluster_eps,
        class_agnostic=args.class_agnostic,
        nonoverlap_margin=args.nonoverlap_margin,
    )


def _cert_cfg(args: argparse.Namespace) -> CertConfig:
    return CertConfig(
        bound=args.bound,
        certify_threshold=args.certify_threshold,
        iou_certify_threshold=args.iou_certify_threshold,
        certify_class=args.certify_class,
        engine=args.engine,
    )


def _patch_spec(args: argparse.Namespace) -> PatchSpec:
    explicit = args.patch_width is not None or args.patch_height is not None
    return PatchSpec(
        area_fraction=None if explicit else args.patch_area,
        aspect=args.patch_aspect,
        width=args.patch_width,
        height=args.patch_height,
        stride=args.patch_stride,
        count=args.patch_count,
    )


def _threads(args: argparse.Namespace) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliError(f"{THREADS_ENV} must be an integer: {env!r}", USAGE_ERROR)
    return os.cpu_count() or 1


def _load_dataset(args: argparse.Namespace):
    images = load_annotations(args.annotations)
    mask_set, digest = load_manifest(args.manifest)
    store = load_fixture(args.fixture, images, mask_set, expected_hash=digest)
    return images, mask_set, store


def cmd_gen_masks(args: argparse.Namespace) -> int:
    config = MaskSetConfig(num_lines=args.num_lines, width=args.width, height=args.height)
    mask_set = generate_two_patch_mask_set(config) if args.two_patch else generate_mask_set(config)
    digest = write_manifest(mask_set, args.out)
    print(f"masks={len(mask_set)} hash={digest}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    images = make_synthetic_images(
        num_images=args.images,
        objects_per_image=args.objects,
        width=args.width,
        height=args.height,
        seed=args.seed,
        num_labels=args.labels,
    )
    config = MaskSetConfig(num_lines=args.num_lines, width=args.width, height=args.height)
    mask_set = generate_two_patch_mask_set(config) if args.two_patch else generate_mask_set(config)
    digest = write_manifest(mask_set, args.manifest)
    write_annotations(images, args.annotations)
    detector = SyntheticDetector(SyntheticDetectorConfig(args.min_visible_fraction))
    store = precompute_store(detector, images, mask_set)
    write_fixture(store, digest, args.fixture)
    objects = sum(len(im.ground_truth) for im in images)
    print(f"images={len(images)} objects={objects} masks={len(mask_set)} hash={digest}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    images, mask_set, store = _load_dataset(args)
    thresholds, prune_cfg = _thresholds(args), _prune_cfg(args)
    out = {}
    total = 0
    for image in images:
        boxes = robust_infer(image, store, mask_set, thresholds, prune_cfg)
        out[image.image_id] = [
            [b.x_min, b.y_min, b.x_max, b.y_max, b.label, b.confidence] for b in boxes
        ]
        total += len(boxes)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(out, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    print(f"images={len(images)} boxes={total}")
    return 0


def cmd_certify(args: argparse.Namespace) -> int:
    images, mask_set, store = _load_dataset(args)
    report = certify_dataset(
        images,
        store,
        mask_set,
        _patch_spec(args),
        _cert_cfg(args),
        _thresholds(args),
        _prune_cfg(args),
        threads=_threads(args),
    )
    if args.report:
        report.write_json(args.report)
    if args.csv:
        report.write_csv(args.csv)
    for model, row in report.rates().items():
        print(f"{model} certified={row['certified']}/{row['total']} certr={row['certr']:.4f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    images, mask_set, store = _load_dataset(args)
    prune_cfg = _prune_cfg(args)
    match_cfg = MatchConfig(iou_threshold=args.match_iou)
    points = pr_sweep(
        images, store, mask_set, prune_cfg,
        masked_floor=args.masked_floor, coupling=args.coupling, match_cfg=match_cfg,
    )
    ap = average_precision(points)
    print(f"ap={ap:.6f}")
    if args.sweep_out:
        with open(args.sweep_out, "w", encoding="utf-8") as fh:
            fh.write("threshold,tp,fp,fn,precision,recall\n")
            for p in points:
                fh.write(f"{p.threshold:.2f},{p.tp},{p.fp},{p.fn},{p.precision:.6f},{p.recall:.6f}\n")
    if args.recall_target is not None:
        def certify(gamma_b: float) -> dict:
            thresholds = ThresholdConfig(
                base_threshold=gamma_b, masked_floor=args.masked_floor, coupling=args.coupling
            )
            report = certify_dataset(
                images, store, mask_set, _patch_spec(args), _cert_cfg(args),
                thresholds, prune_cfg, threads=_threads(args),
            )
            return report.rates()

        try:
            gamma_b, rates = certr_at_recall(points, args.recall_target, certify)
        except ValueError as exc:
            raise CliError(str(exc), DATA_ERROR)
        parts = " ".join(f"{m}={r['certr']:.4f}" for m, r in rates.items())
        print(f"recall_target={args.recall_target} base_threshold={gamma_b:.2f} {parts}")
    return 0


def cmd_attack_sim(args: argparse.Namespace) -> int:
    images, mask_set, store = _load_dataset(args)
    result = attack_soundness_suite(
        images,
        store,
        mask_set,
        _patch_spec(args),
        _cert_cfg(args),
        _thresholds(args),
        _prune_cfg(args),
        trials_per_case=args.trials_per_case,
        seed=args.seed,
    )
    print(
        f"cases={result.cases} placements={result.placements_covered} "
        f"trials={result.trials} violations={result.violations}"
    )
    if result.violations:
        print(f"first violation: {result.first_violation}", file=sys.stderr)
        return PROPERTY_VIOLATION
    return 0


COMMANDS = {
    "gen-masks": cmd_gen_masks,
    "synth": cmd_synth,
    "infer": cmd_infer,
    "certify": cmd_certify,
    "eval": cmd_eval,
    "attack-sim": cmd_attack_sim,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
