"""Mask manifest wire format: parsing, hashing, and pixel application.

The manifest is a JSON document { "k", "width", "height", "masks": [ {"id",
"parts": [{"axis": "x"|"y", "side": "low"|"high", "cut": int}]} ] }. Its
identity is the sha256 of the canonical JSON serialization (sorted keys, no
whitespace); fixtures record that hash so detections can never be paired
with the wrong mask family. This module implements the contract from the
document alone so the adapter stays independent of the producer.

Pixel semantics: part (x, low, c) blanks every pixel with column index < c,
(x, high, c) blanks column index >= c; y parts do the same to row indices.
A mask blanks the union of its parts' half-planes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

AXES = ("x", "y")
SIDES = ("low", "high")


@dataclass(frozen=True)
class PartEntry:
    axis: str
    side: str
    cut: int

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}: {self.axis!r}")
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}: {self.side!r}")
        if self.cut <= 0:
            raise ValueError(f"cut must be positive: {self.cut}")


@dataclass(frozen=True)
class MaskEntry:
    mask_id: int
    parts: tuple[PartEntry, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.parts) <= 2:
            raise ValueError("a mask combines one or two half-planes")


@dataclass(frozen=True)
class Manifest:
    k: int
    width: int
    height: int
    masks: tuple[MaskEntry, ...]
    sha256: str


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def payload_hash(payload: dict) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def parse_manifest(payload: dict) -> Manifest:
    k = int(payload["k"])
    width, height = int(payload["width"]), int(payload["height"])
    if k < 1:
        raise ValueError("k must be at least 1")
    if width < 2 or height < 2:
        raise ValueError("image extent too small")
    extent = {"x": width, "y": height}
    masks = []
    for i, entry in enumerate(payload["masks"]):
        if int(entry["id"]) != i:
            raise ValueError(f"mask ids must be sequential, got {entry['id']} at {i}")
        parts = tuple(
            PartEntry(str(p["axis"]), str(p["side"]), int(p["cut"])) for p in entry["parts"]
        )
        for p in parts:
            if p.cut >= extent[p.axis]:
                raise ValueError(f"cut {p.cut} outside image extent {extent[p.axis]}")
        masks.append(MaskEntry(i, parts))
    return Manifest(k, width, height, tuple(masks), payload_hash(payload))


def read_manifest(path: str) -> Manifest:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_manifest(json.load(fh))


def blanked_bitmap(entry: MaskEntry, width: int, height: int) -> np.ndarray:
    """(height, width) bool array, True where the mask zeroes the pixel."""
    blank = np.zeros((height, width), dtype=bool)
    for part in entry.parts:
        if part.axis == "x":
            cols = np.arange(width)
            hit = cols < part.cut if part.side == "low" else cols >= part.cut
            blank |= hit[None, :]
        else:
            rows = np.arange(height)
            hit = rows < part.cut if part.side == "low" else rows >= part.cut
            blank |= hit[:, None]
    return blank


def apply_mask(image: np.ndarray, entry: MaskEntry) -> np.ndarray:
    """Copy of the image with masked pixels set to zero.

    Accepts (H, W) or (H, W, C) arrays; the channel axis, if present, is
    zeroed wholesale wherever the bitmap hits.
    """
    if image.ndim not in (2, 3):
        raise ValueError(f"expected a (H, W[, C]) array, got shape {image.shape}")
    blank = blanked_bitmap(entry, image.shape[1], image.shape[0])
    out = image.copy()
    out[blank] = 0
    return out
