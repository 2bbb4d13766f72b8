"""Brute-force oracles the fast implementations are tested against.

Everything in this file trades speed for obviousness: rasterized pixel
grids, exhaustive per-placement loops, dense grid search. Expected values
in the test modules were computed with these and then frozen; the oracles
stay in the suite so the numbers remain auditable.
"""

from __future__ import annotations

import numpy as np

from maskcert.detector import BASE_KEY
from maskcert.geometry import Axis, Box, Rect
from maskcert.masking import Mask, Side
from maskcert.pruning import is_nonoverlapping


# --- rasterized rectangle algebra ----------------------------------------------

PITCH = 0.25


def _cell_counts(r: Rect, extent: float) -> np.ndarray:
    """Boolean grid of PITCH-sized cells whose center lies in r (half-open).

    For rectangles whose coordinates are multiples of PITCH, center
    membership coincides with whole-cell containment, so counting cells is
    exact area measurement.
    """
    n = int(round(extent / PITCH))
    centers = (np.arange(n) + 0.5) * PITCH
    in_x = (centers >= r.x_min) & (centers < r.x_max)
    in_y = (centers >= r.y_min) & (centers < r.y_max)
    return np.outer(in_y, in_x)


def raster_area(r: Rect, extent: float) -> float:
    return float(_cell_counts(r, extent).sum()) * PITCH * PITCH


def raster_intersection_area(b0: Box, b1: Box, extent: float) -> float:
    if b0.label != b1.label:
        return 0.0
    cells = _cell_counts(b0, extent) & _cell_counts(b1, extent)
    return float(cells.sum()) * PITCH * PITCH


def raster_ioa(b0: Box, b1: Box, extent: float) -> float:
    return raster_intersection_area(b0, b1, extent) / raster_area(b0, extent)


def raster_iou(b0: Box, b1: Box, extent: float) -> float:
    inter = raster_intersection_area(b0, b1, extent)
    union = raster_area(b0, extent) + raster_area(b1, extent) - inter
    return inter / union


# --- per-pixel mask semantics ---------------------------------------------------


def blank_bitmap(mask: Mask, width: int, height: int) -> np.ndarray:
    """(height, width) bool bitmap, True where the mask blanks the pixel.

    Pixel (i, j) is blanked by (x, low, c) iff i < c and by (x, high, c)
    iff i >= c; analogously for y. This is the wire-format definition the
    analytic half-open geometry must reproduce.
    """
    blank = np.zeros((height, width), dtype=bool)
    for part in mask.parts:
        if part.axis is Axis.X:
            idx = np.arange(width)
            hit = idx < part.cut if part.side is Side.LOW else idx >= part.cut
            blank |= hit[None, :]
        else:
            idx = np.arange(height)
            hit = idx < part.cut if part.side is Side.LOW else idx >= part.cut
            blank |= hit[:, None]
    return blank


def pixel_covers(mask: Mask, r: Rect, width: int, height: int) -> bool:
    """Every pixel of the integer-aligned rect r is blanked."""
    blank = blank_bitmap(mask, width, height)
    x0, x1 = int(r.x_min), int(r.x_max)
    y0, y1 = int(r.y_min), int(r.y_max)
    return bool(blank[y0:y1, x0:x1].all())


def pixel_visible_fraction(mask: Mask, o: Rect, width: int, height: int) -> float:
    visible = ~blank_bitmap(mask, width, height)
    x0, x1 = int(o.x_min), int(o.x_max)
    y0, y1 = int(o.y_min), int(o.y_max)
    patch = visible[y0:y1, x0:x1]
    return float(patch.sum()) / patch.size


# --- lower-bound oracles --------------------------------------------------------


def sample_filtering_box(rng, b_m: Box, tau: float, hug: bool) -> Box:
    """A box b_b with IoA(b_m, b_b) strictly above tau.

    Construction: carve a sub-rectangle of b_m holding slightly more than a
    tau fraction of its area, then extend it outward by arbitrary amounts.
    Extension can only add to the intersection, so the constraint is kept.
    With hug=True the carved fraction sits just above tau (the worst case
    the bound must survive).
    """
    frac = tau + 1e-7 if hug else rng.uniform(tau + 1e-7, 1.0)
    fx = rng.uniform(frac, 1.0)
    fy = frac / fx
    w = (b_m.x_max - b_m.x_min) * fx
    h = (b_m.y_max - b_m.y_min) * fy
    x0 = rng.uniform(b_m.x_min, b_m.x_max - w)
    y0 = rng.uniform(b_m.y_min, b_m.y_max - h)
    grow = [rng.uniform(0.0, 30.0) * (rng.random() < 0.5) for _ in range(4)]
    return Box(
        x0 - grow[0],
        y0 - grow[1],
        x0 + w + grow[2],
        y0 + h + grow[3],
        label=b_m.label,
        confidence=1.0,
    )


def lp_grid_min(A: float, B: float, C: float, tau: float, steps: int = 200):
    """Grid minimum of IoU(gt, b_b) over the feasible (alpha, beta) region.

    alpha = |b_b ∩ gt ∩ m| in [0, B]; beta = |b_b outside gt ∪ m|, bounded
    by the largest value the constraint (C + alpha) / (B + C + beta) >= tau
    can tolerate. Returns (grid minimum, one-cell objective slack).
    """
    beta_cap = max(0.0, (B + C) * (1.0 - tau) / tau)
    alphas = np.linspace(0.0, B, steps)
    betas = np.linspace(0.0, beta_cap, steps)
    al, be = np.meshgrid(alphas, betas, indexing="ij")
    feasible = (C + al) >= tau * (B + C + be) - 1e-12
    objective = al / (A + B + C + be)
    grid_min = float(objective[feasible].min())
    d_alpha = B / (steps - 1)
    d_beta = beta_cap / (steps - 1) if steps > 1 else 0.0
    slack = d_alpha / (A + B + C) + d_beta * B / (A + B + C) ** 2
    return grid_min, slack


# --- exhaustive reference certifier ---------------------------------------------


def reference_qualifying_masks(o, image, store, mask_set, cert_cfg, thresholds, prune_cfg):
    """Per-mask flag: some stored detection clears the certification bound."""
    from maskcert.certification import l_ioa, l_iou

    flags = []
    for mask in mask_set.masks:
        ok = False
        for b in store.boxes(image.image_id, mask.id):
            if b.confidence <= thresholds.masked_threshold:
                continue
            if cert_cfg.certify_class and b.label != o.label:
                continue
            agnostic = not cert_cfg.certify_class
            if cert_cfg.bound == "iou":
                margin = prune_cfg.nonoverlap_margin
                if not is_nonoverlapping(b, mask, image.width, image.height, margin):
                    continue
                bound = l_iou(o, b, prune_cfg.iou_threshold, class_agnostic=agnostic)
            else:
                bound = l_ioa(o, b, prune_cfg.ioa_threshold, class_agnostic=agnostic)
            if bound > cert_cfg.active_threshold:
                ok = True
                break
        flags.append(ok)
    return flags


def reference_certify_object(
    o, image, store, mask_set, placements, cert_cfg, thresholds, prune_cfg
):
    """Per-placement certification flags via per-pixel coverage bitmaps."""
    qualifying = reference_qualifying_masks(
        o, image, store, mask_set, cert_cfg, thresholds, prune_cfg
    )
    bitmaps = [blank_bitmap(m, image.width, image.height) for m in mask_set.masks]
    flags = []
    for r in placements:
        x0, x1 = int(r.x_min), int(r.x_max)
        y0, y1 = int(r.y_min), int(r.y_max)
        ok = any(
            qual and bool(bm[y0:y1, x0:x1].all())
            for qual, bm in zip(qualifying, bitmaps)
        )
        flags.append(ok)
    return flags


def reference_origins(extent: int, patch: int, stride: int) -> list[int]:
    out = list(range(0, extent - patch + 1, stride))
    if out[-1] != extent - patch:
        out.append(extent - patch)
    return out


def reference_location(r: Rect, o: Rect, width: int, height: int) -> str:
    ix = min(r.x_max, o.x_max) - max(r.x_min, o.x_min)
    iy = min(r.y_max, o.y_max) - max(r.y_min, o.y_min)
    if ix > 0 and iy > 0:
        return "over"
    gx = max(o.x_min - r.x_max, r.x_min - o.x_max, 0.0)
    gy = max(o.y_min - r.y_max, r.y_min - o.y_max, 0.0)
    if gx > 0.1 * width and gy > 0.1 * height:
        return "far"
    return "close"


def reference_model_flags(flags, locations) -> dict:
    """Per-location-model certification verdicts from per-placement data.

    A model is certified when every placement classified into it is
    defended; a model with no placements is vacuously certified.
    """
    out = {}
    for model in ("far", "close", "over"):
        members = [f for f, loc in zip(flags, locations) if loc == model]
        out[model] = all(members)
    out["all"] = all(flags)
    return out


# --- metrics reference ----------------------------------------------------------


def reference_average_precision(points) -> float:
    """Stepwise envelope integration written independently of the module."""
    pairs = sorted((p.recall, p.precision) for p in points)
    recalls = [r for r, _ in pairs]
    best_at_or_above = []
    best = 0.0
    for _, prec in reversed(pairs):
        best = max(best, prec)
        best_at_or_above.append(best)
    best_at_or_above.reverse()
    total = 0.0
    prev_r = 0.0
    for (r, _), env in zip(pairs, best_at_or_above):
        if r > prev_r:
            total += (r - prev_r) * env
            prev_r = r
    return total


__all__ = [name for name in dir() if not name.startswith("_")]
