"""Half-plane mask sets, coverage tests, and the mask manifest wire format.

Masks are symbolic descriptors, never bitmaps. A one-part mask blanks the
half-plane on one side of an axis-aligned cut line; a two-part mask blanks
the union of two such half-planes. All regions here are half-open: a
rectangle (x_min, y_min, x_max, y_max) denotes pixels [x_min, x_max) x
[y_min, y_max), the masked region of (axis, low, c) is the coordinate range
[0, c), and of (axis, high, c) it is [c, extent), so the cut line itself
belongs to the high side. Coverage of a patch rectangle follows directly:

    (x, low, c)  covers r  iff  r.x_max <= c
    (x, high, c) covers r  iff  r.x_min >= c

For integer-aligned rectangles this agrees pixel-for-pixel with blanking
pixel columns [0, c) / [c, extent). For fractional coordinates the continuous
test is the conservative direction: covered implies every pixel is blanked.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional

from .geometry import Axis, Rect, area


class Side(str, enum.Enum):
    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class MaskPart:
    """One blanked half-plane: everything on `side` of `cut` along `axis`."""

    axis: Axis
    side: Side
    cut: int

    def __post_init__(self) -> None:
        if self.cut <= 0:
            raise ValueError(f"cut line must be positive: {self.cut}")


@dataclass(frozen=True)
class Mask:
    id: int
    parts: tuple[MaskPart, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.parts) <= 2:
            raise ValueError("a mask combines one or two half-planes")


@dataclass(frozen=True)
class MaskSetConfig:
    """Number of candidate cut lines per axis and the image extent."""

    num_lines: int
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.num_lines < 1:
            raise ValueError("num_lines must be at least 1")
        if self.width < 2 or self.height < 2:
            raise ValueError("image extent too small to cut")


@dataclass(frozen=True)
class MaskSet:
    config: MaskSetConfig
    masks: tuple[Mask, ...]

    def __len__(self) -> int:
        return len(self.masks)


def cut_positions(extent: int, num_lines: int) -> list[int]:
    """Evenly spaced integer cut lines: ceil(extent/(n+1)) * t for t = 1..n.

    Every line must fall strictly inside [1, extent); configs where the
    rounding pushes the last line onto or past the border are rejected.
    """
    step = math.ceil(extent / (num_lines + 1))
    cuts = [step * t for t in range(1, num_lines + 1)]
    if cuts[-1] >= extent:
        raise ValueError(
            f"num_lines={num_lines} puts a cut at {cuts[-1]} outside extent {extent}"
        )
    return cuts


def generate_mask_set(config: MaskSetConfig) -> MaskSet:
    """All 4*num_lines one-part masks in canonical order.

    Order: x-low by ascending cut, y-low, x-high, y-high. Ids are positions.
    """
    x_cuts = cut_positions(config.width, config.num_lines)
    y_cuts = cut_positions(config.height, config.num_lines)
    parts = (
        [MaskPart(Axis.X, Side.LOW, c) for c in x_cuts]
        + [MaskPart(Axis.Y, Side.LOW, c) for c in y_cuts]
        + [MaskPart(Axis.X, Side.HIGH, c) for c in x_cuts]
        + [MaskPart(Axis.Y, Side.HIGH, c) for c in y_cuts]
    )
    masks = tuple(Mask(i, (p,)) for i, p in enumerate(parts))
    return MaskSet(config, masks)


def generate_two_patch_mask_set(config: MaskSetConfig) -> MaskSet:
    """All unordered products of two one-part masks, deduplicated.

    Pairing a mask with itself blanks the same region as the mask alone, so
    the diagonal collapses to one-part masks and symmetric pairs appear once:
    n*(n+1)/2 masks for n = 4*num_lines one-part masks.
    """
    singles = generate_mask_set(config).masks
    masks: list[Mask] = []
    for i in range(len(singles)):
        for j in range(i, len(singles)):
            if i == j:
                parts = singles[i].parts
            else:
                parts = (singles[i].parts[0], singles[j].parts[0])
            masks.append(Mask(len(masks), parts))
    return MaskSet(config, tuple(masks))


def _visible_interval(
    parts: tuple[MaskPart, ...], axis: Axis, lo: float, hi: float
) -> tuple[float, float]:
    """Clip the half-open interval [lo, hi) to what the mask leaves visible.

    A low-side part keeps coord >= cut; a high-side part keeps coord < cut.
    """
    for p in parts:
        if p.axis is not axis:
            continue
        if p.side is Side.LOW:
            lo = max(lo, float(p.cut))
        else:
            hi = min(hi, float(p.cut))
    return lo, hi


def covers(mask: Mask, r: Rect) -> bool:
    """True iff the mask blanks all of the half-open rectangle r.

    Precondition: r lies within the image bounds. Covered means no visible
    region survives inside r; boundaries are exact, no epsilon.
    """
    x_lo, x_hi = _visible_interval(mask.parts, Axis.X, r.x_min, r.x_max)
    y_lo, y_hi = _visible_interval(mask.parts, Axis.Y, r.y_min, r.y_max)
    return x_lo >= x_hi or y_lo >= y_hi


def visible_region(mask: Mask, o: Rect) -> Optional[tuple[float, float, float, float]]:
    """Coordinates of o minus the blanked half-planes, or None if nothing left.

    The complement of at most two half-planes is convex, so the remainder is
    always a single rectangle. Zero-extent remainders count as nothing.
    """
    x_lo, x_hi = _visible_interval(mask.parts, Axis.X, o.x_min, o.x_max)
    y_lo, y_hi = _visible_interval(mask.parts, Axis.Y, o.y_min, o.y_max)
    if x_lo >= x_hi or y_lo >= y_hi:
        return None
    return (x_lo, y_lo, x_hi, y_hi)


def visible_fraction(mask: Mask, o: Rect) -> float:
    """Fraction of o's area the mask leaves visible, in [0, 1]."""
    region = visible_region(mask, o)
    if region is None:
        return 0.0
    x_lo, y_lo, x_hi, y_hi = region
    return (x_hi - x_lo) * (y_hi - y_lo) / area(o)


# --- manifest wire format ---------------------------------------------------


def to_manifest(mask_set: MaskSet) -> dict:
    return {
        "k": mask_set.config.num_lines,
        "width": mask_set.config.width,
        "height": mask_set.config.height,
        "masks": [
            {
                "id": m.id,
                "parts": [
                    {"axis": p.axis.value, "side": p.side.value, "cut": p.cut}
                    for p in m.parts
                ],
            }
            for m in mask_set.masks
        ],
    }


def from_manifest(manifest: dict) -> MaskSet:
    config = MaskSetConfig(
        num_lines=int(manifest["k"]),
        width=int(manifest["width"]),
        height=int(manifest["height"]),
    )
    extent = {Axis.X: config.width, Axis.Y: config.height}
    masks = []
    for i, entry in enumerate(manifest["masks"]):
        if int(entry["id"]) != i:
            raise ValueError(f"mask ids must be sequential, got {entry['id']} at {i}")
        parts = tuple(
            MaskPart(Axis(p["axis"]), Side(p["side"]), int(p["cut"]))
            for p in entry["parts"]
        )
        for p in parts:
            if p.cut >= extent[p.axis]:
                raise ValueError(f"cut {p.cut} outside image extent {extent[p.axis]}")
        masks.append(Mask(i, parts))
    return MaskSet(config, tuple(masks))


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def manifest_hash(manifest: dict) -> str:
    """Hash of the canonical JSON form; shared contract with fixture files."""
    return hashlib.sha256(canonical_json(manifest).encode("utf-8")).hexdigest()


def write_manifest(mask_set: MaskSet, path: str) -> str:
    """Write the manifest (canonical JSON, trailing newline); returns its hash."""
    manifest = to_manifest(mask_set)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(manifest))
        fh.write("\n")
    return manifest_hash(manifest)


def load_manifest(path: str) -> tuple[MaskSet, str]:
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    return from_manifest(manifest), manifest_hash(manifest)
