"""Axis-aligned box algebra in continuous image coordinates.

All geometry is exact float arithmetic on closed rectangles; nothing here
rasterizes. Boxes carry a class label and a confidence, and every pairwise
measure treats boxes of different labels as disjoint unless explicitly asked
not to (class-agnostic mode used by some pruning variants).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence


class Axis(str, enum.Enum):
    X = "x"
    Y = "y"


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle with positive extent on both axes."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"rectangle must have positive extent: {self!r}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def interval(self, axis: Axis) -> tuple[float, float]:
        if axis is Axis.X:
            return (self.x_min, self.x_max)
        return (self.y_min, self.y_max)


@dataclass(frozen=True)
class Box(Rect):
    """Rectangle plus class label and detection confidence."""

    label: int
    confidence: float

    def __post_init__(self) -> None:
        super().__post_init__()
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1]: {self.confidence}")

    def coords(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def area(r: Rect) -> float:
    return (r.x_max - r.x_min) * (r.y_max - r.y_min)


def rect_intersection_area(a: Rect, b: Rect) -> float:
    """Overlap area ignoring labels entirely."""
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def intersection_area(b0: Box, b1: Box, *, class_agnostic: bool = False) -> float:
    """Overlap area; zero when labels differ (unless class_agnostic)."""
    if not class_agnostic and b0.label != b1.label:
        return 0.0
    return rect_intersection_area(b0, b1)


def difference_area(b0: Box, b1: Box, *, class_agnostic: bool = False) -> float:
    """Area of b0 outside b1. Cross-label pairs give area(b0)."""
    return area(b0) - intersection_area(b0, b1, class_agnostic=class_agnostic)


def ioa(b0: Box, b1: Box, *, class_agnostic: bool = False) -> float:
    """Intersection over the area of the first box."""
    return intersection_area(b0, b1, class_agnostic=class_agnostic) / area(b0)


def iou(b0: Box, b1: Box, *, class_agnostic: bool = False) -> float:
    inter = intersection_area(b0, b1, class_agnostic=class_agnostic)
    return inter / (area(b0) + area(b1) - inter)


def bounding_union(boxes: Sequence[Box]) -> Box:
    """Minimal box enclosing all inputs; confidence is the max over members.

    All members must share one label; unioning across labels is a logic error
    and raises rather than guessing a class.
    """
    if not boxes:
        raise ValueError("bounding_union of no boxes")
    labels = {b.label for b in boxes}
    if len(labels) != 1:
        raise ValueError(f"bounding_union across labels {sorted(labels)}")
    return Box(
        x_min=min(b.x_min for b in boxes),
        y_min=min(b.y_min for b in boxes),
        x_max=max(b.x_max for b in boxes),
        y_max=max(b.y_max for b in boxes),
        label=boxes[0].label,
        confidence=max(b.confidence for b in boxes),
    )


def enclosing_rect(boxes: Sequence[Box]) -> tuple[float, float, float, float]:
    """Coordinates of the minimal rectangle enclosing all inputs."""
    if not boxes:
        raise ValueError("enclosing_rect of no boxes")
    return (
        min(b.x_min for b in boxes),
        min(b.y_min for b in boxes),
        max(b.x_max for b in boxes),
        max(b.y_max for b in boxes),
    )


def axis_gap(r0: Rect, r1: Rect, axis: Axis) -> float:
    """Smallest distance between the two closed intervals along one axis.

    Zero when the projections overlap or touch.
    """
    a0, a1 = r0.interval(axis)
    b0, b1 = r1.interval(axis)
    if a1 < b0:
        return b0 - a1
    if b1 < a0:
        return a0 - b1
    return 0.0


def dedup_boxes(boxes: Iterable[Box]) -> list[Box]:
    """Merge exact coordinate+label duplicates, keeping the max confidence.

    Output is sorted canonically (coords, label, confidence) so that callers
    iterating masks in any order produce identical results.
    """
    best: dict[tuple[float, float, float, float, int], Box] = {}
    for b in boxes:
        key = (b.x_min, b.y_min, b.x_max, b.y_max, b.label)
        kept = best.get(key)
        if kept is None or b.confidence > kept.confidence:
            best[key] = b
    return sorted(
        best.values(),
        key=lambda b: (b.x_min, b.y_min, b.x_max, b.y_max, b.label, b.confidence),
    )
