"""Clean-performance metrics: greedy matching, PR sweeps, average precision."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .detector import DetectionStore, ImageMeta
from .geometry import Box, iou
from .masking import MaskSet
from .pipeline import ThresholdConfig, robust_infer
from .pruning import PruneConfig


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.5
    require_label: bool = True


def match_detections(
    preds: Sequence[Box], gts: Sequence[Box], cfg: MatchConfig
) -> tuple[int, int, int]:
    """Greedy one-to-one matching; returns (tp, fp, fn).

    Predictions are visited by descending confidence (coordinate order breaks
    ties); each claims the unmatched ground truth with the highest IoU, and
    counts as a true positive only if that IoU strictly exceeds the threshold.
    """
    order = sorted(preds, key=lambda b: (-b.confidence, b.x_min, b.y_min, b.x_max, b.y_max, b.label))
    matched: set[int] = set()
    tp = 0
    for p in order:
        best: Optional[tuple[float, int]] = None
        for idx, g in enumerate(gts):
            if idx in matched:
                continue
            if cfg.require_label and p.label != g.label:
                continue
            overlap = iou(p, g, class_agnostic=True)
            if overlap > cfg.iou_threshold and (best is None or overlap > best[0]):
                best = (overlap, idx)
        if best is not None:
            matched.add(best[1])
            tp += 1
    return tp, len(preds) - tp, len(gts) - tp


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 1.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 1.0


def pr_sweep(
    images: Sequence[ImageMeta],
    store: DetectionStore,
    mask_set: MaskSet,
    prune_cfg: PruneConfig,
    masked_floor: float = 0.0,
    coupling: float = 0.0,
    match_cfg: MatchConfig = MatchConfig(),
    steps: int = 101,
) -> list[PRPoint]:
    """Precision/recall of the full robust pipeline over a base-threshold grid.

    The grid walks 0.00, 0.01, ..., 1.00 (for the default 101 steps); the
    masked threshold tracks each grid point through the coupling rule.
    """
    points = []
    for i in range(steps):
        gamma_b = i / (steps - 1)
        thresholds = ThresholdConfig(
            base_threshold=gamma_b, masked_floor=masked_floor, coupling=coupling
        )
        tp = fp = fn = 0
        for image in images:
            preds = robust_infer(image, store, mask_set, thresholds, prune_cfg)
            t, f, n = match_detections(preds, image.ground_truth, match_cfg)
            tp, fp, fn = tp + t, fp + f, fn + n
        points.append(PRPoint(threshold=gamma_b, tp=tp, fp=fp, fn=fn))
    return points


def average_precision(points: Sequence[PRPoint]) -> float:
    """Area under the interpolated precision envelope across all points.

    At each observed recall the envelope takes the best precision achieved at
    that recall or beyond, and the curve integrates left to right from zero.
    """
    if not points:
        return 0.0
    pairs = sorted((p.recall, p.precision) for p in points)
    ap = 0.0
    prev_recall = 0.0
    for i, (recall, _) in enumerate(pairs):
        if recall == prev_recall:
            continue
        envelope = max(pr for _, pr in pairs[i:])
        ap += (recall - prev_recall) * envelope
        prev_recall = recall
    return ap


def point_at_recall(points: Sequence[PRPoint], target_recall: float) -> PRPoint:
    """The largest-threshold sweep point whose recall still meets the target."""
    eligible = [p for p in points if p.recall >= target_recall]
    if not eligible:
        best = max(p.recall for p in points) if points else 0.0
        raise ValueError(f"no threshold reaches recall {target_recall} (best {best:.3f})")
    return max(eligible, key=lambda p: p.threshold)


def certr_at_recall(
    points: Sequence[PRPoint],
    target_recall: float,
    certify: Callable[[float], dict],
) -> tuple[float, dict]:
    """Certified recall at the working point chosen for a clean-recall target.

    `certify` maps a base threshold to per-model rate dicts (as produced by
    CertificationReport.rates).
    """
    chosen = point_at_recall(points, target_recall)
    return chosen.threshold, certify(chosen.threshold)


def certr_by_object_size(
    report_objects: Sequence, edges: Sequence[float] = (0.0, 0.01, 0.09, 1.0)
) -> dict[str, list[dict]]:
    """Certified rates bucketed by object area as a fraction of the image.

    Buckets are [lo, hi) except the last, which closes at its upper edge.
    """
    if sorted(edges) != list(edges) or len(edges) < 2:
        raise ValueError("edges must be ascending with at least two values")
    out: dict[str, list[dict]] = {}
    for obj in report_objects:
        for model, outcome in obj.outcomes.items():
            buckets = out.setdefault(
                model,
                [
                    {"lo": lo, "hi": hi, "certified": 0, "total": 0}
                    for lo, hi in zip(edges, edges[1:])
                ],
            )
            for i, bucket in enumerate(buckets):
                last = i == len(buckets) - 1
                inside = bucket["lo"] <= obj.area_fraction < bucket["hi"] or (
                    last and obj.area_fraction == bucket["hi"]
                )
                if inside:
                    bucket["total"] += 1
                    bucket["certified"] += int(outcome.certified)
                    break
    for buckets in out.values():
        for bucket in buckets:
            bucket["certr"] = bucket["certified"] / bucket["total"] if bucket["total"] else 0.0
    return out
