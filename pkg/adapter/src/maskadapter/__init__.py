"""Detector adapter: masked inference over real models, fixtures out.

Reads a mask manifest, applies each mask to real image pixels, runs a
detector over every view, and writes the detections fixture consumed by
the certification pipeline. Only the JSON wire formats couple the two
packages.
"""

from .export import (
    AdapterConfig,
    BASE_KEY,
    ExportReport,
    detect_views,
    export_detections,
    export_fixture,
    load_image,
)
from .manifest import (
    Manifest,
    MaskEntry,
    PartEntry,
    apply_mask,
    blanked_bitmap,
    canonical_json,
    parse_manifest,
    payload_hash,
    read_manifest,
)
from .models import EchoModel, PixelSumProbe, checkerboard, resolve_model
from .scenes import Scene, read_scenes
