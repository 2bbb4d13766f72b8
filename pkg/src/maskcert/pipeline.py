"""End-to-end robust inference: masked detections plus secure pruning."""

from __future__ import annotations

from dataclasses import dataclass

from .detector import DetectionStore, ImageMeta
from .geometry import Box, dedup_boxes
from .masking import MaskSet
from .pruning import (
    PruneConfig,
    ioa_box_prune,
    iou_box_prune,
    split_by_mask_proximity,
)


@dataclass(frozen=True)
class ThresholdConfig:
    """Confidence floors: base detections use base_threshold, masked ones use
    a coupled threshold that tracks it (see masked_threshold)."""

    base_threshold: float = 0.0
    masked_floor: float = 0.0
    coupling: float = 0.0

    def __post_init__(self) -> None:
        for name in ("base_threshold", "masked_floor", "coupling"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]: {v}")

    @property
    def masked_threshold(self) -> float:
        """max(floor, base + (1 - base) * coupling): never below the floor,
        rises toward 1 together with the base threshold."""
        return max(
            self.masked_floor,
            self.base_threshold + (1.0 - self.base_threshold) * self.coupling,
        )


def robust_infer(
    image: ImageMeta,
    store: DetectionStore,
    mask_set: MaskSet,
    thresholds: ThresholdConfig,
    prune_cfg: PruneConfig,
) -> list[Box]:
    """Base detections plus pruned masked detections for one image.

    Masked boxes from all masks are pooled before pruning in ioa mode; in iou
    mode each mask's boxes are split against their own mask first, and the two
    groups are pooled separately. Exact duplicates are merged before and after
    pruning, which also makes the output independent of mask iteration order.
    If pruning removes every masked box the output is exactly the base set.
    """
    base = store.boxes_above(image.image_id, None, thresholds.base_threshold)
    masked_floor = thresholds.masked_threshold
    if prune_cfg.mode == "ioa":
        pooled = dedup_boxes(
            b
            for mask in mask_set.masks
            for b in store.boxes_above(image.image_id, mask.id, masked_floor)
        )
        pruned = ioa_box_prune(pooled, base, prune_cfg)
    else:
        non_overlap: list[Box] = []
        overlap: list[Box] = []
        for mask in mask_set.masks:
            boxes = store.boxes_above(image.image_id, mask.id, masked_floor)
            no, ov = split_by_mask_proximity(boxes, mask, image.width, image.height, prune_cfg)
            non_overlap.extend(no)
            overlap.extend(ov)
        pruned = iou_box_prune(
            dedup_boxes(non_overlap), dedup_boxes(overlap), base, prune_cfg
        )
    return dedup_boxes(pruned)
