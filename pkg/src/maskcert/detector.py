"""Detection sources and their on-disk formats.

Two backends produce detections: a deterministic synthetic detector driven by
ground-truth geometry, and a replay backend that serves boxes recorded in a
fixture file (the hand-off format for plugging in real detectors). Either way
inference never calls a model directly; it reads a DetectionStore that holds,
for every image, the detections of the unmasked image ("base") and of every
masked variant, all recorded at confidence floor 0. Confidence thresholds are
applied at query time.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, Sequence

from .geometry import Box
from .masking import Mask, MaskSet, manifest_hash, to_manifest


@dataclass(frozen=True)
class ImageMeta:
    """Image identity, extent, and ground-truth objects (confidence 1)."""

    image_id: str
    width: int
    height: int
    ground_truth: tuple[Box, ...] = ()

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image extent must be positive")
        for b in self.ground_truth:
            if b.x_min < 0 or b.y_min < 0 or b.x_max > self.width or b.y_max > self.height:
                raise ValueError(f"ground truth {b} outside {self.width}x{self.height}")


BASE_KEY = "base"

StoreKey = "str | int"


class Detector(Protocol):
    def detect(self, image: ImageMeta, mask: Optional[Mask], floor: float) -> list[Box]:
        """Boxes with confidence strictly above floor for one masked view."""


@dataclass(frozen=True)
class SyntheticDetectorConfig:
    """Emission rule for the geometry-driven detector.

    An object is reported iff the mask leaves at least min_visible_fraction
    of its area visible; the reported box is exactly the visible remainder
    and the confidence equals the visible fraction.
    """

    min_visible_fraction: float = 0.3

    def __post_init__(self) -> None:
        if not 0.0 < self.min_visible_fraction <= 1.0:
            raise ValueError("min_visible_fraction must lie in (0, 1]")


class SyntheticDetector:
    def __init__(self, config: SyntheticDetectorConfig | None = None) -> None:
        self.config = config or SyntheticDetectorConfig()

    def detect(self, image: ImageMeta, mask: Optional[Mask], floor: float) -> list[Box]:
        from .masking import visible_region

        out: list[Box] = []
        for o in image.ground_truth:
            if mask is None:
                region, fraction = o.coords(), 1.0
            else:
                region = visible_region(mask, o)
                if region is None:
                    continue
                x_lo, y_lo, x_hi, y_hi = region
                fraction = (x_hi - x_lo) * (y_hi - y_lo) / ((o.x_max - o.x_min) * (o.y_max - o.y_min))
            if fraction >= self.config.min_visible_fraction and fraction > floor:
                x_lo, y_lo, x_hi, y_hi = region
                out.append(Box(x_lo, y_lo, x_hi, y_hi, o.label, fraction))
        return out


class DetectionStore:
    """Per-image detections for the base view and every mask id, at floor 0."""

    def __init__(
        self,
        mask_ids: Sequence[int],
        detections: dict[str, dict["str | int", tuple[Box, ...]]],
    ) -> None:
        self.mask_ids = tuple(mask_ids)
        self._detections = detections
        expected = {BASE_KEY, *self.mask_ids}
        for image_id, views in detections.items():
            missing = expected - views.keys()
            if missing:
                raise ValueError(f"store for {image_id} missing views: {sorted(map(str, missing))}")

    def image_ids(self) -> list[str]:
        return sorted(self._detections)

    def boxes(self, image_id: str, mask_id: Optional[int] = None) -> tuple[Box, ...]:
        key = BASE_KEY if mask_id is None else mask_id
        return self._detections[image_id][key]

    def boxes_above(self, image_id: str, mask_id: Optional[int], floor: float) -> list[Box]:
        return [b for b in self.boxes(image_id, mask_id) if b.confidence > floor]

    def with_view(self, image_id: str, overrides: dict["str | int", tuple[Box, ...]]) -> "DetectionStore":
        """Copy of this store with some views of one image replaced."""
        detections = dict(self._detections)
        views = dict(detections[image_id])
        views.update(overrides)
        detections[image_id] = views
        return DetectionStore(self.mask_ids, detections)


def precompute_store(
    detector: Detector, images: Iterable[ImageMeta], mask_set: MaskSet
) -> DetectionStore:
    """Run the detector once per image per view and record everything at floor 0."""
    detections: dict[str, dict["str | int", tuple[Box, ...]]] = {}
    for image in images:
        views: dict["str | int", tuple[Box, ...]] = {
            BASE_KEY: tuple(detector.detect(image, None, 0.0))
        }
        for mask in mask_set.masks:
            views[mask.id] = tuple(detector.detect(image, mask, 0.0))
        detections[image.image_id] = views
    return DetectionStore([m.id for m in mask_set.masks], detections)


# --- detections fixture wire format ------------------------------------------


def _box_row(b: Box) -> list:
    return [b.x_min, b.y_min, b.x_max, b.y_max, b.label, b.confidence]


def clamp_box_row(row: Sequence, width: int, height: int, context: str) -> Optional[Box]:
    """Parse one fixture row, clamping coordinates into the image.

    Rows that collapse to zero extent after clamping are dropped. Both
    conditions warn: out-of-bounds fixtures usually mean a resize mismatch.
    """
    x_min, y_min, x_max, y_max = (float(v) for v in row[:4])
    label, confidence = int(row[4]), float(row[5])
    cx_min, cy_min = max(0.0, x_min), max(0.0, y_min)
    cx_max, cy_max = min(float(width), x_max), min(float(height), y_max)
    if (cx_min, cy_min, cx_max, cy_max) != (x_min, y_min, x_max, y_max):
        warnings.warn(f"{context}: box {row[:4]} clamped to image {width}x{height}")
    if cx_min >= cx_max or cy_min >= cy_max:
        warnings.warn(f"{context}: box {row[:4]} degenerate after clamping, dropped")
        return None
    return Box(cx_min, cy_min, cx_max, cy_max, label, confidence)


def write_fixture(store: DetectionStore, mask_manifest_hash: str, path: str) -> None:
    images = {}
    for image_id in store.image_ids():
        views = {BASE_KEY: [_box_row(b) for b in store.boxes(image_id)]}
        for mask_id in store.mask_ids:
            views[str(mask_id)] = [_box_row(b) for b in store.boxes(image_id, mask_id)]
        images[image_id] = views
    payload = {"mask_manifest_hash": mask_manifest_hash, "images": images}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_fixture(
    path: str,
    images: Sequence[ImageMeta],
    mask_set: MaskSet,
    expected_hash: Optional[str] = None,
) -> DetectionStore:
    """Read a detections fixture back into a store, validating its shape.

    The fixture must cover every image and every mask id of the given mask
    set, and its recorded manifest hash must match (pass expected_hash to
    override the hash computed from mask_set).
    """
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    want_hash = expected_hash or manifest_hash(to_manifest(mask_set))
    got_hash = payload.get("mask_manifest_hash")
    if got_hash != want_hash:
        raise ValueError(f"fixture mask manifest hash {got_hash!r} != expected {want_hash!r}")
    by_id = {im.image_id: im for im in images}
    detections: dict[str, dict["str | int", tuple[Box, ...]]] = {}
    fixture_images = payload["images"]
    for image_id, meta in by_id.items():
        if image_id not in fixture_images:
            raise ValueError(f"fixture missing image {image_id!r}")
        views_in = fixture_images[image_id]
        views: dict["str | int", tuple[Box, ...]] = {}
        for mask_id in (None, *(m.id for m in mask_set.masks)):
            key = BASE_KEY if mask_id is None else str(mask_id)
            if key not in views_in:
                raise ValueError(f"fixture image {image_id!r} missing view {key!r}")
            boxes = []
            for row in views_in[key]:
                box = clamp_box_row(row, meta.width, meta.height, f"{image_id}/{key}")
                if box is not None:
                    boxes.append(box)
            views[BASE_KEY if mask_id is None else mask_id] = tuple(boxes)
        detections[image_id] = views
    return DetectionStore([m.id for m in mask_set.masks], detections)


class FixtureDetector:
    """Replays recorded detections; the masked view is looked up by mask id."""

    def __init__(self, store: DetectionStore) -> None:
        self.store = store

    def detect(self, image: ImageMeta, mask: Optional[Mask], floor: float) -> list[Box]:
        return self.store.boxes_above(image.image_id, None if mask is None else mask.id, floor)


# --- annotations wire format --------------------------------------------------


def load_annotations(path: str) -> list[ImageMeta]:
    """COCO-style annotations: images + annotations with [x, y, w, h] bboxes."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    boxes_by_image: dict[str, list[Box]] = {}
    for ann in payload.get("annotations", []):
        image_id = str(ann["image_id"])
        x, y, w, h = (float(v) for v in ann["bbox"])
        boxes_by_image.setdefault(image_id, []).append(
            Box(x, y, x + w, y + h, int(ann["category_id"]), 1.0)
        )
    images = []
    for entry in payload["images"]:
        image_id = str(entry["id"])
        images.append(
            ImageMeta(
                image_id=image_id,
                width=int(entry["width"]),
                height=int(entry["height"]),
                ground_truth=tuple(boxes_by_image.get(image_id, ())),
            )
        )
    images.sort(key=lambda im: im.image_id)
    return images


def write_annotations(images: Sequence[ImageMeta], path: str, categories: Optional[dict[int, str]] = None) -> None:
    labels = sorted({b.label for im in images for b in im.ground_truth})
    categories = categories or {label: f"category_{label}" for label in labels}
    payload = {
        "images": [
            {"id": im.image_id, "width": im.width, "height": im.height, "file_name": f"{im.image_id}.png"}
            for im in images
        ],
        "annotations": [
            {
                "id": idx,
                "image_id": im.image_id,
                "bbox": [b.x_min, b.y_min, b.x_max - b.x_min, b.y_max - b.y_min],
                "category_id": b.label,
            }
            for idx, (im, b) in enumerate(
                (im, b) for im in images for b in im.ground_truth
            )
        ],
        "categories": [{"id": k, "name": v} for k, v in sorted(categories.items())],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
