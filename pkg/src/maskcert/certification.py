"""Per-object robustness certification against patch hiding attacks.

An object is certified for a patch placement when some mask that blanks the
whole patch yields a detection whose worst-case overlap bound stays above the
certification threshold; then no attack confined to that patch can hide the
object from the pruned output. Placements are enumerated on a stride grid
(borders forced in) and grouped into location models by their distance to the
object: far, close, and over, plus the conjunction over every placement.

Also here: a seeded adaptive attack simulator that tries to falsify issued
certificates by replacing every detection the attacker could influence, and a
batched soundness suite that runs it across all certified placements.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .detector import BASE_KEY, DetectionStore, ImageMeta
from .geometry import (
    Axis,
    Box,
    Rect,
    area,
    axis_gap,
    dedup_boxes,
    difference_area,
    intersection_area,
    ioa,
    iou,
    rect_intersection_area,
)
from .masking import Mask, MaskSet, Side, covers, manifest_hash, to_manifest
from .pipeline import ThresholdConfig, robust_infer
from .pruning import PruneConfig, split_by_mask_proximity


class LocationModel(str, enum.Enum):
    FAR = "far"
    CLOSE = "close"
    OVER = "over"


_LOCATION_CODES = {LocationModel.FAR: 0, LocationModel.CLOSE: 1, LocationModel.OVER: 2}
_CODE_NAMES = ("far", "close", "over")
ALL_MODEL = "all"


@dataclass(frozen=True)
class PatchSpec:
    """Adversarial patch shape and the placement grid.

    Either explicit pixel dimensions or an image-area fraction with an aspect
    ratio (width/height); derived sides truncate to whole pixels. count=2
    certifies against two simultaneous patches of this shape.
    """

    area_fraction: Optional[float] = 0.01
    aspect: float = 1.0
    width: Optional[int] = None
    height: Optional[int] = None
    stride: int = 1
    count: int = 1

    def __post_init__(self) -> None:
        if (self.width is None) != (self.height is None):
            raise ValueError("give both explicit patch dimensions or neither")
        if self.width is None and self.area_fraction is None:
            raise ValueError("patch needs area_fraction or explicit dimensions")
        if self.width is None and not 0.0 < float(self.area_fraction) <= 1.0:
            raise ValueError("area_fraction must lie in (0, 1]")
        if self.aspect <= 0.0:
            raise ValueError("aspect must be positive")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")
        if self.count not in (1, 2):
            raise ValueError("count must be 1 or 2")

    def resolve(self, width: int, height: int) -> tuple[int, int]:
        """Patch pixel dimensions for a given image extent."""
        if self.width is not None:
            pw, ph = self.width, self.height
        else:
            ph = int(math.sqrt(float(self.area_fraction) * width * height / self.aspect))
            ph = max(1, ph)
            pw = max(1, int(ph * self.aspect))
        if pw > width or ph > height:
            raise ValueError(f"patch {pw}x{ph} larger than image {width}x{height}")
        return pw, ph


@dataclass(frozen=True)
class CertConfig:
    """Certification bound and thresholds.

    bound "ioa" guarantees a recall box via the IoA filtering lemma and
    applies certify_threshold; bound "iou" uses the worst-case-IoU linear
    program, considers only non-overlapping masked boxes, and applies
    iou_certify_threshold to far placements only.
    """

    bound: str = "ioa"
    certify_threshold: float = 0.0
    iou_certify_threshold: float = 0.5
    certify_class: bool = True
    engine: str = "vectorized"

    def __post_init__(self) -> None:
        if self.bound not in ("ioa", "iou"):
            raise ValueError(f"unknown bound {self.bound!r}")
        if self.engine not in ("vectorized", "scalar"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if not 0.0 <= self.certify_threshold < 1.0:
            raise ValueError("certify_threshold must lie in [0, 1)")
        if not 0.0 <= self.iou_certify_threshold < 1.0:
            raise ValueError("iou_certify_threshold must lie in [0, 1)")

    @property
    def active_threshold(self) -> float:
        return self.certify_threshold if self.bound == "ioa" else self.iou_certify_threshold


def l_ioa(b_gt: Box, b_m: Box, threshold: float, *, class_agnostic: bool = False) -> float:
    """Worst-case IoA(b_gt, b) over base boxes b with IoA(b_m, b) > threshold.

    Any base box overlapping more than `threshold` of the masked box b_m must
    itself overlap the ground truth by at least this much:
    (|b_m| * threshold - |b_m \\ b_gt|) / |b_gt|. Negative values mean no
    guarantee (e.g. cross-label pairs, where |b_m \\ b_gt| = |b_m|).
    """
    spill = difference_area(b_m, b_gt, class_agnostic=class_agnostic)
    return (area(b_m) * threshold - spill) / area(b_gt)


def l_iou(b_gt: Box, b_m: Box, threshold: float, *, class_agnostic: bool = False) -> float:
    """Worst-case IoU(b_gt, b) over base boxes b with IoU(b_m, b) > threshold.

    Minimizing over how the base box could be placed reduces to a linear
    program whose optimum is max(0, (t*B + (t-1)*C) / (A+B+C)) with
    A = |b_gt \\ b_m|, B = |b_gt ^ b_m|, C = |b_m \\ b_gt|.
    """
    b = intersection_area(b_gt, b_m, class_agnostic=class_agnostic)
    a = area(b_gt) - b
    c = area(b_m) - b
    return max(0.0, (threshold * b + (threshold - 1.0) * c) / (a + b + c))


def origin_grid(extent: int, patch_extent: int, stride: int) -> list[int]:
    """Stride-spaced origins with the flush-to-border placement forced in."""
    last = extent - patch_extent
    origins = list(range(0, last + 1, stride))
    if origins[-1] != last:
        origins.append(last)
    return origins


def enumerate_patches(spec: PatchSpec, image: ImageMeta) -> list[Rect]:
    """All placements of the patch inside the image, row-major."""
    pw, ph = spec.resolve(image.width, image.height)
    xs = origin_grid(image.width, pw, spec.stride)
    ys = origin_grid(image.height, ph, spec.stride)
    return [Rect(x, y, x + pw, y + ph) for y in ys for x in xs]


def classify_location(r: Rect, o: Box, image: ImageMeta) -> LocationModel:
    """Far: both axis gaps exceed 10% of the image extent. Over: the patch
    shares pixels with the object box. Close: everything in between."""
    if rect_intersection_area(r, o) > 0.0:
        return LocationModel.OVER
    gx = axis_gap(r, o, Axis.X)
    gy = axis_gap(r, o, Axis.Y)
    if gx > 0.1 * image.width and gy > 0.1 * image.height:
        return LocationModel.FAR
    return LocationModel.CLOSE


# --- per-mask qualification ---------------------------------------------------


def mask_witnesses(
    o: Box,
    image: ImageMeta,
    store: DetectionStore,
    mask_set: MaskSet,
    cert_cfg: CertConfig,
    thresholds: ThresholdConfig,
    prune_cfg: PruneConfig,
) -> list[Optional[Box]]:
    """For each mask, the first detection whose bound clears the threshold.

    None marks masks that certify nothing for this object. In iou mode only
    boxes far from the mask (the non-overlapping split) are eligible.
    """
    floor = thresholds.masked_threshold
    agnostic = not cert_cfg.certify_class
    out: list[Optional[Box]] = []
    for mask in mask_set.masks:
        boxes = store.boxes_above(image.image_id, mask.id, floor)
        if cert_cfg.bound == "iou":
            boxes, _ = split_by_mask_proximity(boxes, mask, image.width, image.height, prune_cfg)
        witness = None
        for b in sorted(boxes, key=lambda b: (b.x_min, b.y_min, b.x_max, b.y_max, b.label)):
            if cert_cfg.certify_class and b.label != o.label:
                continue
            if cert_cfg.bound == "ioa":
                bound = l_ioa(o, b, prune_cfg.ioa_threshold, class_agnostic=agnostic)
            else:
                bound = l_iou(o, b, prune_cfg.iou_threshold, class_agnostic=agnostic)
            if bound > cert_cfg.active_threshold:
                witness = b
                break
        out.append(witness)
    return out


# --- placement/coverage grids (vectorized engine) ------------------------------


def _feasible_axis(parts: Sequence, axis: Axis, lo0: np.ndarray, hi0: np.ndarray) -> np.ndarray:
    """Vectorized twin of masking._visible_interval feasibility over origins."""
    lo = lo0.astype(float).copy()
    hi = hi0.astype(float).copy()
    for p in parts:
        if p.axis is not axis:
            continue
        if p.side is Side.LOW:
            np.maximum(lo, float(p.cut), out=lo)
        else:
            np.minimum(hi, float(p.cut), out=hi)
    return lo < hi


def coverage_matrix(
    mask_set: MaskSet, xs: Sequence[int], ys: Sequence[int], pw: int, ph: int
) -> np.ndarray:
    """Boolean (n_masks, n_placements) matrix of covers(mask, placement)."""
    xs_arr = np.asarray(xs, dtype=float)
    ys_arr = np.asarray(ys, dtype=float)
    rows = []
    for mask in mask_set.masks:
        feas_x = _feasible_axis(mask.parts, Axis.X, xs_arr, xs_arr + pw)
        feas_y = _feasible_axis(mask.parts, Axis.Y, ys_arr, ys_arr + ph)
        rows.append(~(feas_y[:, None] & feas_x[None, :]).ravel())
    return np.stack(rows)


def _axis_gaps(origins: np.ndarray, patch_extent: int, lo: float, hi: float) -> np.ndarray:
    ends = origins + patch_extent
    return np.where(ends < lo, lo - ends, np.where(hi < origins, origins - hi, 0.0))


def _axis_overlaps(origins: np.ndarray, patch_extent: int, lo: float, hi: float) -> np.ndarray:
    return np.minimum(origins + patch_extent, hi) - np.maximum(origins, lo)


def location_codes(
    o: Box, image: ImageMeta, xs: Sequence[int], ys: Sequence[int], pw: int, ph: int
) -> np.ndarray:
    """Per-placement location model codes (0 far, 1 close, 2 over), row-major."""
    xs_arr = np.asarray(xs, dtype=float)
    ys_arr = np.asarray(ys, dtype=float)
    gx = _axis_gaps(xs_arr, pw, o.x_min, o.x_max)
    gy = _axis_gaps(ys_arr, ph, o.y_min, o.y_max)
    ox = _axis_overlaps(xs_arr, pw, o.x_min, o.x_max)
    oy = _axis_overlaps(ys_arr, ph, o.y_min, o.y_max)
    gx2, gy2 = np.meshgrid(gx, gy)
    ox2, oy2 = np.meshgrid(ox, oy)
    over = (ox2 > 0.0) & (oy2 > 0.0)
    far = (gx2 > 0.1 * image.width) & (gy2 > 0.1 * image.height)
    return np.where(over, 2, np.where(far, 0, 1)).ravel()


# --- certification ------------------------------------------------------------


@dataclass
class ModelOutcome:
    certified: bool
    placements: int
    witness_mask: Optional[int] = None
    witness_box: Optional[Box] = None
    failing_placement: Optional[tuple] = None

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "placements": self.placements,
            "witness_mask": self.witness_mask,
            "witness_box": list(self.witness_box.coords()) + [self.witness_box.label, self.witness_box.confidence]
            if self.witness_box
            else None,
            "failing_placement": self.failing_placement,
        }


@dataclass
class ObjectCertification:
    image_id: str
    object_index: int
    label: int
    area_fraction: float
    outcomes: dict[str, ModelOutcome]


@dataclass
class CertificationReport:
    config: dict
    mask_manifest_hash: str
    objects: list[ObjectCertification] = field(default_factory=list)

    def models(self) -> list[str]:
        seen: list[str] = []
        for obj in self.objects:
            for name in obj.outcomes:
                if name not in seen:
                    seen.append(name)
        return seen

    def rates(self) -> dict[str, dict]:
        """Certified fraction per model; denominators count every object."""
        out = {}
        for model in self.models():
            total = len(self.objects)
            certified = sum(1 for o in self.objects if o.outcomes[model].certified)
            out[model] = {
                "certified": certified,
                "total": total,
                "certr": certified / total if total else 0.0,
            }
        return out

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "mask_manifest_hash": self.mask_manifest_hash,
            "objects": [
                {
                    "image_id": o.image_id,
                    "object_index": o.object_index,
                    "label": o.label,
                    "area_fraction": o.area_fraction,
                    "models": {name: m.to_dict() for name, m in o.outcomes.items()},
                }
                for o in self.objects
            ],
            "rates": self.rates(),
        }

    def write_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "certified", "total", "certr"])
            for model, row in self.rates().items():
                writer.writerow([model, row["certified"], row["total"], row["certr"]])


def _placement_rect(xs: Sequence[int], ys: Sequence[int], pw: int, ph: int, idx: int) -> tuple:
    x = xs[idx % len(xs)]
    y = ys[idx // len(xs)]
    return (float(x), float(y), float(x + pw), float(y + ph))


def _witness_for(
    cov: np.ndarray, witnesses: Sequence[Optional[Box]], placement_idx: int
) -> tuple[Optional[int], Optional[Box]]:
    for mask_idx in np.nonzero(cov[:, placement_idx])[0]:
        if witnesses[mask_idx] is not None:
            return int(mask_idx), witnesses[mask_idx]
    return None, None


def _single_patch_outcomes(
    o: Box,
    image: ImageMeta,
    cov: np.ndarray,
    witnesses: Sequence[Optional[Box]],
    xs: Sequence[int],
    ys: Sequence[int],
    pw: int,
    ph: int,
    models: Sequence[str],
) -> dict[str, ModelOutcome]:
    qual = np.array([w is not None for w in witnesses], dtype=bool)
    flags = cov[qual].any(axis=0) if qual.any() else np.zeros(cov.shape[1], dtype=bool)
    codes = location_codes(o, image, xs, ys, pw, ph)
    outcomes: dict[str, ModelOutcome] = {}
    for name in models:
        if name == ALL_MODEL:
            sel = np.ones(len(codes), dtype=bool)
        else:
            sel = codes == _CODE_NAMES.index(name)
        count = int(sel.sum())
        certified = bool(flags[sel].all())
        outcome = ModelOutcome(certified=certified, placements=count)
        if count:
            if certified:
                first = int(np.nonzero(sel)[0][0])
                outcome.witness_mask, outcome.witness_box = _witness_for(cov, witnesses, first)
            else:
                fail = int(np.nonzero(sel & ~flags)[0][0])
                outcome.failing_placement = _placement_rect(xs, ys, pw, ph, fail)
        outcomes[name] = outcome
    return outcomes


def _two_patch_outcomes(
    o: Box,
    image: ImageMeta,
    cov: np.ndarray,
    witnesses: Sequence[Optional[Box]],
    xs: Sequence[int],
    ys: Sequence[int],
    pw: int,
    ph: int,
    models: Sequence[str],
) -> dict[str, ModelOutcome]:
    n_placements = cov.shape[1]
    if n_placements > 2048:
        raise ValueError(
            f"{n_placements} placements make too many pairs; increase the patch stride"
        )
    qual = np.array([w is not None for w in witnesses], dtype=bool)
    qc = cov[qual].astype(np.int32)
    # pair (i, j) is defended iff some mask covers both placements at once
    pair_ok = (qc.T @ qc) > 0 if qual.any() else np.zeros((n_placements, n_placements), bool)
    codes = location_codes(o, image, xs, ys, pw, ph)
    pair_codes = np.maximum.outer(codes, codes)
    iu, ju = np.triu_indices(n_placements)
    outcomes: dict[str, ModelOutcome] = {}
    for name in models:
        if name == ALL_MODEL:
            sel = np.ones(len(iu), dtype=bool)
        else:
            sel = pair_codes[iu, ju] == _CODE_NAMES.index(name)
        count = int(sel.sum())
        certified = bool(pair_ok[iu, ju][sel].all())
        outcome = ModelOutcome(certified=certified, placements=count)
        if count:
            if certified:
                first = int(np.nonzero(sel)[0][0])
                i, j = int(iu[first]), int(ju[first])
                both = cov[:, i] & cov[:, j]
                for mask_idx in np.nonzero(both)[0]:
                    if witnesses[mask_idx] is not None:
                        outcome.witness_mask = int(mask_idx)
                        outcome.witness_box = witnesses[mask_idx]
                        break
            else:
                fail = int(np.nonzero(sel & ~pair_ok[iu, ju])[0][0])
                i, j = int(iu[fail]), int(ju[fail])
                outcome.failing_placement = (
                    _placement_rect(xs, ys, pw, ph, i),
                    _placement_rect(xs, ys, pw, ph, j),
                )
        outcomes[name] = outcome
    return outcomes


def _scalar_outcomes(
    o: Box,
    image: ImageMeta,
    mask_set: MaskSet,
    witnesses: Sequence[Optional[Box]],
    placements: Sequence[Rect],
    models: Sequence[str],
) -> dict[str, ModelOutcome]:
    """Reference loop over placements; must agree with the vectorized engine."""
    qual_masks = [m for m in mask_set.masks if witnesses[m.id] is not None]
    records = []
    for r in placements:
        flag, witness = False, (None, None)
        for m in qual_masks:
            if covers(m, r):
                flag, witness = True, (m.id, witnesses[m.id])
                break
        records.append((classify_location(r, o, image).value, flag, witness, r))
    outcomes: dict[str, ModelOutcome] = {}
    for name in models:
        rows = records if name == ALL_MODEL else [r for r in records if r[0] == name]
        certified = all(flag for _, flag, _, _ in rows)
        outcome = ModelOutcome(certified=certified, placements=len(rows))
        if rows:
            if certified:
                outcome.witness_mask, outcome.witness_box = rows[0][2]
            else:
                r = next(rect for _, flag, _, rect in rows if not flag)
                outcome.failing_placement = (r.x_min, r.y_min, r.x_max, r.y_max)
        outcomes[name] = outcome
    return outcomes


def report_models(cert_cfg: CertConfig) -> list[str]:
    # the iou bound is only meaningful far from the object, where NMS keeps
    # the masked box intact
    if cert_cfg.bound == "iou":
        return [LocationModel.FAR.value]
    return [m.value for m in LocationModel] + [ALL_MODEL]


def certify_image(
    image: ImageMeta,
    store: DetectionStore,
    mask_set: MaskSet,
    patch_spec: PatchSpec,
    cert_cfg: CertConfig,
    thresholds: ThresholdConfig,
    prune_cfg: PruneConfig,
) -> list[ObjectCertification]:
    pw, ph = patch_spec.resolve(image.width, image.height)
    xs = origin_grid(image.width, pw, patch_spec.stride)
    ys = origin_grid(image.height, ph, patch_spec.stride)
    models = report_models(cert_cfg)
    image_area = float(image.width * image.height)
    use_vector = cert_cfg.engine == "vectorized" or patch_spec.count == 2
    cov = coverage_matrix(mask_set, xs, ys, pw, ph) if use_vector else None
    placements = None if use_vector else enumerate_patches(patch_spec, image)
    results = []
    for idx, o in enumerate(image.ground_truth):
        witnesses = mask_witnesses(o, image, store, mask_set, cert_cfg, thresholds, prune_cfg)
        if patch_spec.count == 2:
            outcomes = _two_patch_outcomes(o, image, cov, witnesses, xs, ys, pw, ph, models)
        elif use_vector:
            outcomes = _single_patch_outcomes(o, image, cov, witnesses, xs, ys, pw, ph, models)
        else:
            outcomes = _scalar_outcomes(o, image, mask_set, witnesses, placements, models)
        results.append(
            ObjectCertification(
                image_id=image.image_id,
                object_index=idx,
                label=o.label,
                area_fraction=area(o) / image_area,
                outcomes=outcomes,
            )
        )
    return results


def certify_dataset(
    images: Sequence[ImageMeta],
    store: DetectionStore,
    mask_set: MaskSet,
    patch_spec: PatchSpec,
    cert_cfg: CertConfig,
    thresholds: ThresholdConfig,
    prune_cfg: PruneConfig,
    threads: int = 1,
) -> CertificationReport:
    config = {
        "patch": asdict(patch_spec),
        "certification": asdict(cert_cfg),
        "thresholds": asdict(thresholds),
        "pruning": asdict(prune_cfg),
        "mask_set": asdict(mask_set.config),
    }
    report = CertificationReport(
        config=config, mask_manifest_hash=manifest_hash(to_manifest(mask_set))
    )
    ordered = sorted(images, key=lambda im: im.image_id)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = pool.map(
                lambda im: certify_image(im, store, mask_set, patch_spec, cert_cfg, thresholds, prune_cfg),
                ordered,
            )
            for chunk in chunks:
                report.objects.extend(chunk)
    else:
        for im in ordered:
            report.objects.extend(
                certify_image(im, store, mask_set, patch_spec, cert_cfg, thresholds, prune_cfg)
            )
    return report


# --- adaptive attack simulation -------------------------------------------------


@dataclass
class AttackOutcome:
    trials: int
    violations: int
    first_violation: Optional[dict] = None


def _qualifies(o: Box, b: Box, cert_cfg: CertConfig) -> bool:
    t = cert_cfg.active_threshold
    agnostic = not cert_cfg.certify_class
    if cert_cfg.bound == "ioa":
        return ioa(o, b, class_agnostic=agnostic) > t
    return iou(o, b, class_agnostic=agnostic) > t


def _random_box(rng: random.Random, image: ImageMeta, labels: Sequence[int], floor: float) -> Box:
    w = rng.uniform(2.0, max(3.0, image.width * 0.6))
    h = rng.uniform(2.0, max(3.0, image.height * 0.6))
    x = rng.uniform(0.0, image.width - w)
    y = rng.uniform(0.0, image.height - h)
    conf = floor + (1.0 - floor) * rng.uniform(1e-6, 1.0)
    return Box(x, y, x + w, y + h, rng.choice(labels), min(conf, 1.0))


def _inflate(b: Box, rng: random.Random, image: ImageMeta, conf: float) -> Box:
    return Box(
        max(0.0, b.x_min - rng.uniform(0.0, 3.0)),
        max(0.0, b.y_min - rng.uniform(0.0, 3.0)),
        min(float(image.width), b.x_max + rng.uniform(0.0, 3.0)),
        min(float(image.height), b.y_max + rng.uniform(0.0, 3.0)),
        b.label,
        conf,
    )


def simulate_adaptive_attack(
    o: Box,
    image: ImageMeta,
    store: DetectionStore,
    mask_set: MaskSet,
    r: Rect,
    thresholds: ThresholdConfig,
    prune_cfg: PruneConfig,
    cert_cfg: CertConfig,
    trials: int,
    seed: int,
) -> AttackOutcome:
    """Try to hide o with an attack confined to placement r.

    Every view the patch can influence (the base image and every mask that
    does not blank the whole patch) is replaced by attacker-chosen content;
    views whose mask covers the patch are untouched. Three strategies rotate:
    random boxes, base boxes engineered to trigger filtering of the honest
    masked detections, and an empty base output. A trial is a violation if
    the pruned output has no box overlapping o above the certification
    threshold.
    """
    rng = random.Random(seed)
    covering = [m.id for m in mask_set.masks if covers(m, r)]
    exposed = [m.id for m in mask_set.masks if m.id not in set(covering)]
    masked_floor = thresholds.masked_threshold
    honest = dedup_boxes(
        b for mid in covering for b in store.boxes_above(image.image_id, mid, masked_floor)
    )
    labels = sorted({b.label for b in image.ground_truth} | {o.label})
    violations = 0
    first = None
    for trial in range(trials):
        strategy = ("random", "filter", "empty")[trial % 3]
        overrides: dict = {}
        if strategy == "empty":
            base: tuple[Box, ...] = ()
        elif strategy == "filter":
            crafted = [
                _inflate(b, rng, image, thresholds.base_threshold + (1.0 - thresholds.base_threshold) * rng.uniform(1e-6, 1.0))
                for b in honest[:4]
            ]
            crafted.append(_random_box(rng, image, labels, thresholds.base_threshold))
            base = tuple(crafted)
        else:
            base = tuple(
                _random_box(rng, image, labels, thresholds.base_threshold)
                for _ in range(rng.randint(0, 3))
            )
        overrides[BASE_KEY] = base
        for mid in exposed:
            if strategy == "empty" and rng.random() < 0.5:
                overrides[mid] = ()
            else:
                overrides[mid] = tuple(
                    _random_box(rng, image, labels, masked_floor)
                    for _ in range(rng.randint(0, 2))
                )
        attacked = store.with_view(image.image_id, overrides)
        output = robust_infer(image, attacked, mask_set, thresholds, prune_cfg)
        if not any(_qualifies(o, b, cert_cfg) for b in output):
            violations += 1
            if first is None:
                first = {"trial": trial, "strategy": strategy, "placement": (r.x_min, r.y_min, r.x_max, r.y_max)}
    return AttackOutcome(trials=trials, violations=violations, first_violation=first)


# --- batched soundness suite ----------------------------------------------------


@dataclass
class SuiteResult:
    cases: int
    placements_covered: int
    trials: int
    violations: int
    fallback_trials: int
    exact_trials: int = 0
    first_violation: Optional[dict] = None


def _box_array(boxes: Sequence[Box]) -> tuple[np.ndarray, np.ndarray]:
    coords = np.array([[b.x_min, b.y_min, b.x_max, b.y_max] for b in boxes], dtype=float).reshape(-1, 4)
    labels = np.array([b.label for b in boxes], dtype=int)
    return coords, labels


def _ioa_matrix(num: np.ndarray, den_of: np.ndarray) -> np.ndarray:
    """IoA of each den_of-row box against each num-row box: (n_den, n_num)."""
    if den_of.size == 0 or num.size == 0:
        return np.zeros((den_of.shape[0], num.shape[0]))
    ix = np.minimum(den_of[:, None, 2], num[None, :, 2]) - np.maximum(den_of[:, None, 0], num[None, :, 0])
    iy = np.minimum(den_of[:, None, 3], num[None, :, 3]) - np.maximum(den_of[:, None, 1], num[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    areas = (den_of[:, 2] - den_of[:, 0]) * (den_of[:, 3] - den_of[:, 1])
    return inter / areas[:, None]


def _random_rows(rng: np.random.Generator, n: int, image: ImageMeta, labels: Sequence[int], floor: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    w = rng.uniform(2.0, max(3.0, image.width * 0.6), size=n)
    h = rng.uniform(2.0, max(3.0, image.height * 0.6), size=n)
    x = rng.uniform(0.0, 1.0, size=n) * (image.width - w)
    y = rng.uniform(0.0, 1.0, size=n) * (image.height - h)
    coords = np.stack([x, y, x + w, y + h], axis=1)
    lab = rng.choice(np.asarray(labels, dtype=int), size=n)
    conf = floor + (1.0 - floor) * rng.uniform(1e-6, 1.0, size=n)
    return coords, lab, conf


def _attack_case_batched(
    o: Box,
    image: ImageMeta,
    store: DetectionStore,
    mask_set: MaskSet,
    covering: Sequence[int],
    thresholds: ThresholdConfig,
    prune_cfg: PruneConfig,
    cert_cfg: CertConfig,
    trials: int,
    seed: int,
) -> tuple[int, int, Optional[dict]]:
    """1000-trials-at-once version of simulate_adaptive_attack for one case.

    Exposed masked views are emptied rather than stuffed with junk: extra
    masked boxes can only add members to clusters, and a representative
    encloses every member, so junk never removes a qualifying output box;
    emptying those views is the attacker's strongest play there. Base
    content rotates through the three strategies. A sound fast path decides
    trials: a qualifying base box survives pruning verbatim, and a
    qualifying masked box that no base box filters ends up inside a cluster
    representative that encloses it, so its overlap with the object can only
    grow. Trials the fast path cannot clear are replayed through the full
    pipeline.
    """
    if cert_cfg.bound != "ioa":
        raise NotImplementedError("batched attack suite supports the ioa bound only")
    if cert_cfg.certify_class and prune_cfg.class_agnostic:
        raise NotImplementedError("class-agnostic pruning with class certification")
    rng = np.random.default_rng(seed)
    gamma_b = thresholds.base_threshold
    gamma_m = thresholds.masked_threshold
    tau = prune_cfg.ioa_threshold
    t_cert = cert_cfg.active_threshold
    covering = sorted(covering)
    exposed = [m.id for m in mask_set.masks if m.id not in set(covering)]
    honest = dedup_boxes(
        b for mid in covering for b in store.boxes_above(image.image_id, mid, gamma_m)
    )
    h_coords, h_labels = _box_array(honest)
    labels = sorted({b.label for b in image.ground_truth} | {o.label})
    gt = np.array([[o.x_min, o.y_min, o.x_max, o.y_max]])

    def qualifies(coords: np.ndarray, labs: np.ndarray) -> np.ndarray:
        if coords.size == 0:
            return np.zeros(0, dtype=bool)
        q = _ioa_matrix(coords, gt)[0] > t_cert
        if cert_cfg.certify_class:
            q &= labs == o.label
        return q

    q_h = qualifies(h_coords, h_labels)
    hq_coords, hq_labels = h_coords[q_h], h_labels[q_h]
    strat = np.arange(trials) % 3  # 0 random, 1 filter, 2 empty

    # base boxes, flattened across trials
    base_parts: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
    random_trials = np.nonzero(strat == 0)[0]
    counts = rng.integers(0, 4, size=len(random_trials))
    coords, labs, conf = _random_rows(rng, int(counts.sum()), image, labels, gamma_b)
    base_parts.append((np.repeat(random_trials, counts), coords, labs, conf))
    filter_trials = np.nonzero(strat == 1)[0]
    n_craft = min(len(hq_coords), 4)
    if len(filter_trials) and n_craft:
        # boxes slightly enclosing the qualifying honest detections: IoA 1,
        # guaranteed to trigger filtering against them
        reps = np.tile(hq_coords[:n_craft], (len(filter_trials), 1))
        grow = rng.uniform(0.0, 3.0, size=(len(reps), 4))
        crafted = reps + np.stack([-grow[:, 0], -grow[:, 1], grow[:, 2], grow[:, 3]], axis=1)
        craft_labels = np.tile(hq_labels[:n_craft], len(filter_trials))
        craft_conf = gamma_b + (1.0 - gamma_b) * rng.uniform(1e-6, 1.0, size=len(reps))
        base_parts.append((np.repeat(filter_trials, n_craft), crafted, craft_labels, craft_conf))
    if len(filter_trials):
        coords, labs, conf = _random_rows(rng, len(filter_trials), image, labels, gamma_b)
        base_parts.append((filter_trials, coords, labs, conf))
    tb = np.concatenate([p[0] for p in base_parts]) if base_parts else np.zeros(0, int)
    b_coords = np.concatenate([p[1] for p in base_parts]) if base_parts else np.zeros((0, 4))
    b_labels = np.concatenate([p[2] for p in base_parts]) if base_parts else np.zeros(0, int)
    b_conf = np.concatenate([p[3] for p in base_parts]) if base_parts else np.zeros(0)
    present = b_conf > gamma_b
    tb, b_coords, b_labels, b_conf = tb[present], b_coords[present], b_labels[present], b_conf[present]

    # fast path: qualifying base boxes pass outright
    base_q = np.zeros(trials, dtype=bool)
    np.logical_or.at(base_q, tb, qualifies(b_coords, b_labels))

    # fast path: qualifying honest boxes that no base box of the trial filters
    passed = base_q.copy()
    if len(hq_coords):
        filt = _ioa_matrix(b_coords, hq_coords) > tau  # (n_hq, n_base)
        if not prune_cfg.class_agnostic:
            filt &= hq_labels[:, None] == b_labels[None, :]
        acc = np.zeros((trials, len(hq_coords)), dtype=bool)
        np.logical_or.at(acc, tb, filt.T)
        passed |= (~acc).any(axis=1)

    violations = 0
    fallbacks = 0
    first = None
    for trial in np.nonzero(~passed)[0]:
        fallbacks += 1
        base_boxes = tuple(
            Box(*b_coords[i], int(b_labels[i]), float(b_conf[i])) for i in np.nonzero(tb == trial)[0]
        )
        overrides: dict = {BASE_KEY: base_boxes}
        for mid in exposed:
            overrides[mid] = ()
        attacked = store.with_view(image.image_id, overrides)
        output = robust_infer(image, attacked, mask_set, thresholds, prune_cfg)
        if not any(_qualifies(o, b, cert_cfg) for b in output):
            violations += 1
            if first is None:
                first = {"trial": int(trial), "strategy": ("random", "filter", "empty")[int(strat[trial])]}
    return violations, fallbacks, first


def attack_soundness_suite(
    images: Sequence[ImageMeta],
    store: DetectionStore,
    mask_set: MaskSet,
    patch_spec: PatchSpec,
    cert_cfg: CertConfig,
    thresholds: ThresholdConfig,
    prune_cfg: PruneConfig,
    trials_per_case: int,
    seed: int,
    exact_trials_per_object: int = 3,
) -> SuiteResult:
    """Adaptive attacks against every certified (object, placement).

    Placements sharing one covering mask set present the attacker with an
    identical surface, so their trial ensembles coincide; each such class is
    executed once with a seed derived from the class identity, covering every
    certified placement in it. On top of the batched runs, each object gets
    a few exact trials that replay the full pipeline end to end, guarding
    the batched engine's shortcuts against drift.
    """
    if patch_spec.count != 1:
        raise NotImplementedError("attack suite covers single-patch threat models")
    cases = 0
    placements_covered = 0
    trials = 0
    violations = 0
    fallback_trials = 0
    exact_trials = 0
    first = None
    for image in sorted(images, key=lambda im: im.image_id):
        pw, ph = patch_spec.resolve(image.width, image.height)
        xs = origin_grid(image.width, pw, patch_spec.stride)
        ys = origin_grid(image.height, ph, patch_spec.stride)
        cov = coverage_matrix(mask_set, xs, ys, pw, ph)
        for obj_idx, o in enumerate(image.ground_truth):
            witnesses = mask_witnesses(o, image, store, mask_set, cert_cfg, thresholds, prune_cfg)
            qual = np.array([w is not None for w in witnesses], dtype=bool)
            flags = cov[qual].any(axis=0) if qual.any() else np.zeros(cov.shape[1], dtype=bool)
            certified_idx = np.nonzero(flags)[0]
            if not len(certified_idx):
                continue
            packed = np.packbits(cov[:, certified_idx], axis=0)
            _, uniq_pos, counts = np.unique(
                packed, axis=1, return_index=True, return_counts=True
            )
            for pos, count in zip(uniq_pos, counts):
                p_idx = int(certified_idx[pos])
                covering = [int(i) for i in np.nonzero(cov[:, p_idx])[0]]
                key = f"{seed}|{image.image_id}|{obj_idx}|" + ",".join(map(str, covering))
                case_seed = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")
                v, fb, fv = _attack_case_batched(
                    o, image, store, mask_set, covering, thresholds, prune_cfg, cert_cfg,
                    trials_per_case, case_seed,
                )
                cases += 1
                placements_covered += int(count)
                trials += trials_per_case
                violations += v
                fallback_trials += fb
                if v and first is None:
                    first = dict(fv or {}, image_id=image.image_id, object_index=obj_idx)
            if exact_trials_per_object > 0:
                p_idx = int(certified_idx[0])
                r = Rect(
                    float(xs[p_idx % len(xs)]),
                    float(ys[p_idx // len(xs)]),
                    float(xs[p_idx % len(xs)] + pw),
                    float(ys[p_idx // len(xs)] + ph),
                )
                skey = f"{seed}|spot|{image.image_id}|{obj_idx}"
                spot_seed = int.from_bytes(hashlib.sha256(skey.encode()).digest()[:8], "big")
                outcome = simulate_adaptive_attack(
                    o, image, store, mask_set, r, thresholds, prune_cfg, cert_cfg,
                    exact_trials_per_object, spot_seed,
                )
                exact_trials += outcome.trials
                violations += outcome.violations
                if outcome.violations and first is None:
                    first = dict(
                        outcome.first_violation or {},
                        image_id=image.image_id,
                        object_index=obj_idx,
                    )
    return SuiteResult(
        cases=cases,
        placements_covered=placements_covered,
        trials=trials,
        violations=violations,
        fallback_trials=fallback_trials,
        exact_trials=exact_trials,
        first_violation=first,
    )
