"""Secure box pruning: filtering against base detections plus clustering.

The default variant keeps a masked box only when no base box already overlaps
most of it (IoA above a threshold), then merges the survivors into cluster
representatives. The IoU variant first splits masked boxes by proximity to
the blanked region and treats the two groups differently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .geometry import Axis, Box, bounding_union, enclosing_rect, ioa, iou
from .masking import Mask, Side


@dataclass(frozen=True)
class PruneConfig:
    """Thresholds and mode switches for secure box pruning.

    mode "ioa": filter masked boxes against base by IoA > ioa_threshold, then
    DBSCAN-style clustering. mode "iou": split per mask into non-overlapping
    (filter by IoU > iou_threshold, then NMS) and overlapping (filter by IoA >
    overlap_ioa_threshold, then clustering) groups.
    """

    mode: str = "ioa"
    ioa_threshold: float = 0.6
    iou_threshold: float = 0.8
    overlap_ioa_threshold: float = 0.6
    cluster_eps: float = 0.1
    cluster_min_samples: int = 1
    class_agnostic: bool = False
    nonoverlap_margin: float = 0.05

    def __post_init__(self) -> None:
        if self.mode not in ("ioa", "iou"):
            raise ValueError(f"unknown prune mode {self.mode!r}")
        for name in ("ioa_threshold", "iou_threshold", "overlap_ioa_threshold"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]: {v}")
        if self.cluster_min_samples != 1:
            # with one required sample every box is a core point and no box is
            # an outlier; other settings would silently drop detections
            raise ValueError("cluster_min_samples other than 1 is not supported")
        if not 0.0 <= self.nonoverlap_margin < 1.0:
            raise ValueError("nonoverlap_margin must lie in [0, 1)")


def _canonical(boxes: Sequence[Box]) -> list[Box]:
    return sorted(boxes, key=lambda b: (b.x_min, b.y_min, b.x_max, b.y_max, b.label, b.confidence))


def _filter(
    masked: Sequence[Box],
    base: Sequence[Box],
    similarity: Callable[[Box, Box], float],
    threshold: float,
) -> list[Box]:
    return [m for m in masked if not any(similarity(m, b) > threshold for b in base)]


def filter_masked_boxes(masked: Sequence[Box], base: Sequence[Box], cfg: PruneConfig) -> list[Box]:
    """Drop masked boxes that some base box explains: IoA(masked, base) > threshold."""
    sim = lambda m, b: ioa(m, b, class_agnostic=cfg.class_agnostic)
    return _filter(masked, base, sim, cfg.ioa_threshold)


def cluster_distance(b0: Box, b1: Box, *, class_agnostic: bool = False) -> float:
    """1 - max(IoA(b0, b1), IoA(b1, b0)); cross-label distance is 1."""
    return 1.0 - max(
        ioa(b0, b1, class_agnostic=class_agnostic),
        ioa(b1, b0, class_agnostic=class_agnostic),
    )


def cluster_boxes(boxes: Sequence[Box], cfg: PruneConfig) -> list[list[Box]]:
    """Group boxes whose pairwise distance chains stay within cluster_eps.

    With every point a core point, density clustering reduces to connected
    components of the "distance <= eps" graph, which is independent of input
    order. Clusters and their members come back in canonical box order.
    """
    items = _canonical(boxes)
    n = len(items)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            di, dj = find(i), find(j)
            if di == dj:
                continue
            if cluster_distance(items[i], items[j], class_agnostic=cfg.class_agnostic) <= cfg.cluster_eps:
                parent[dj] = di
    clusters: dict[int, list[Box]] = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(items[i])
    return [clusters[root] for root in sorted(clusters)]


def cluster_representative(cluster: Sequence[Box], cfg: PruneConfig) -> Box:
    """Minimal enclosing box of the cluster with the max member confidence.

    Class-respecting clusters are single-label so the union keeps the label;
    class-agnostic clusters may mix labels, in which case the representative
    takes the label of the most confident member (ties: canonical order).
    """
    if not cfg.class_agnostic:
        return bounding_union(list(cluster))
    members = _canonical(cluster)
    top = max(members, key=lambda b: b.confidence)
    x_min, y_min, x_max, y_max = enclosing_rect(members)
    return Box(x_min, y_min, x_max, y_max, top.label, top.confidence)


def ioa_box_prune(masked: Sequence[Box], base: Sequence[Box], cfg: PruneConfig) -> list[Box]:
    """Base boxes verbatim plus one representative per surviving cluster."""
    survivors = filter_masked_boxes(masked, base, cfg)
    reps = [cluster_representative(c, cfg) for c in cluster_boxes(survivors, cfg)]
    return list(base) + reps


def box_mask_gap(box: Box, mask: Mask, width: int, height: int) -> float:
    """Smallest of the per-part gaps, each measured along the part's cut axis.

    For one part, the gap is the distance from the box's interval on the cut
    axis to the blanked interval (0 when they touch or overlap). The part
    spans the whole orthogonal axis, so only the cut axis constrains.
    """
    gaps = []
    for p in mask.parts:
        lo, hi = box.interval(p.axis)
        if p.side is Side.LOW:
            gaps.append(max(0.0, lo - p.cut))
        else:
            gaps.append(max(0.0, p.cut - hi))
    return min(gaps)


def is_nonoverlapping(box: Box, mask: Mask, width: int, height: int, margin: float) -> bool:
    """True iff every part of the mask is farther than margin * axis extent."""
    extent = {Axis.X: width, Axis.Y: height}
    for p in mask.parts:
        lo, hi = box.interval(p.axis)
        gap = max(0.0, lo - p.cut) if p.side is Side.LOW else max(0.0, p.cut - hi)
        if gap <= margin * extent[p.axis]:
            return False
    return True


def split_by_mask_proximity(
    boxes: Sequence[Box], mask: Mask, width: int, height: int, cfg: PruneConfig
) -> tuple[list[Box], list[Box]]:
    """Partition one mask's boxes into (non-overlapping, overlapping) groups."""
    non_overlapping, overlapping = [], []
    for b in boxes:
        if is_nonoverlapping(b, mask, width, height, cfg.nonoverlap_margin):
            non_overlapping.append(b)
        else:
            overlapping.append(b)
    return non_overlapping, overlapping


def iou_nms(boxes: Sequence[Box], threshold: float, *, class_agnostic: bool = False) -> list[Box]:
    """Greedy NMS keeping the highest-confidence seed of each IoU > threshold group.

    Ties in confidence break by canonical coordinate order, so the result does
    not depend on input order.
    """
    pending = sorted(
        _canonical(boxes), key=lambda b: -b.confidence
    )  # stable: conf desc, then canonical
    kept: list[Box] = []
    while pending:
        seed = pending.pop(0)
        kept.append(seed)
        pending = [b for b in pending if iou(b, seed, class_agnostic=class_agnostic) <= threshold]
    return kept


def iou_box_prune(
    masked_nonoverlap: Sequence[Box],
    masked_overlap: Sequence[Box],
    base: Sequence[Box],
    cfg: PruneConfig,
) -> list[Box]:
    """IoU-variant pruning: NMS for far-from-mask boxes, clustering for the rest."""
    sim_iou = lambda m, b: iou(m, b, class_agnostic=cfg.class_agnostic)
    sim_ioa = lambda m, b: ioa(m, b, class_agnostic=cfg.class_agnostic)
    no_survivors = _filter(masked_nonoverlap, base, sim_iou, cfg.iou_threshold)
    no_reps = iou_nms(no_survivors, cfg.iou_threshold, class_agnostic=cfg.class_agnostic)
    o_survivors = _filter(masked_overlap, base, sim_ioa, cfg.overlap_ioa_threshold)
    o_reps = [cluster_representative(c, cfg) for c in cluster_boxes(o_survivors, cfg)]
    return list(base) + no_reps + o_reps
