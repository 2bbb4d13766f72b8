"""Certifiably robust object detection against patch hiding attacks."""

from .certification import (
    ALL_MODEL,
    AttackOutcome,
    CertConfig,
    CertificationReport,
    LocationModel,
    ModelOutcome,
    ObjectCertification,
    PatchSpec,
    SuiteResult,
    attack_soundness_suite,
    certify_dataset,
    certify_image,
    classify_location,
    enumerate_patches,
    l_ioa,
    l_iou,
    origin_grid,
    simulate_adaptive_attack,
)
from .datagen import make_synthetic_images
from .detector import (
    BASE_KEY,
    DetectionStore,
    FixtureDetector,
    ImageMeta,
    SyntheticDetector,
    SyntheticDetectorConfig,
    load_annotations,
    load_fixture,
    precompute_store,
    write_annotations,
    write_fixture,
)
from .geometry import (
    Axis,
    Box,
    Rect,
    area,
    axis_gap,
    bounding_union,
    dedup_boxes,
    difference_area,
    intersection_area,
    ioa,
    iou,
)
from .masking import (
    Mask,
    MaskPart,
    MaskSet,
    MaskSetConfig,
    Side,
    covers,
    cut_positions,
    from_manifest,
    generate_mask_set,
    generate_two_patch_mask_set,
    load_manifest,
    manifest_hash,
    to_manifest,
    visible_fraction,
    visible_region,
    write_manifest,
)
from .metrics import (
    MatchConfig,
    PRPoint,
    average_precision,
    certr_at_recall,
    certr_by_object_size,
    match_detections,
    point_at_recall,
    pr_sweep,
)
from .pipeline import ThresholdConfig, robust_infer
from .pruning import (
    PruneConfig,
    box_mask_gap,
    cluster_boxes,
    cluster_distance,
    cluster_representative,
    filter_masked_boxes,
    ioa_box_prune,
    iou_box_prune,
    iou_nms,
    is_nonoverlapping,
    split_by_mask_proximity,
)

__version__ = "0.1.0"
