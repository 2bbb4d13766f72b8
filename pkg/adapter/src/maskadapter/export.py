"""Masked-inference export: every image times every mask, one fixture file.

For each scene the model runs once on the unmasked image and once per
manifest mask on a copy with the masked pixels zeroed. All detections are
kept (confidence floor 0); thresholding is downstream's job, which is what
lets one export serve a whole threshold sweep. The output records the
manifest hash so it can only be re-ingested against the same mask family.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .manifest import Manifest, apply_mask, canonical_json, read_manifest
from .models import Model, checkerboard, resolve_model
from .scenes import Scene, read_scenes

BASE_KEY = "base"


@dataclass(frozen=True)
class AdapterConfig:
    manifest_path: str
    annotations_path: str
    model_entry: str
    out_path: str
    image_dir: Optional[str] = None
    resize_edge: Optional[int] = None
    workers: Optional[int] = None

    def __post_init__(self) -> None:
        if self.resize_edge is not None and self.resize_edge < 2:
            raise ValueError(f"resize edge too small: {self.resize_edge}")
        if self.workers is not None and self.workers < 1:
            raise ValueError(f"workers must be positive: {self.workers}")


@dataclass(frozen=True)
class ExportReport:
    images_written: int
    views_per_image: int
    skipped: tuple[tuple[str, str], ...]  # (image_id, reason)
    manifest_sha256: str


def load_image(path: str) -> np.ndarray:
    """Decode one image file into an array; .npy loads directly."""
    if path.endswith(".npy"):
        array = np.load(path)
        if array.ndim not in (2, 3):
            raise ValueError(f"expected a (H, W[, C]) array, got shape {array.shape}")
        return array
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img)


def _scene_image(scene: Scene, image_dir: Optional[str]) -> np.ndarray:
    if image_dir is None:
        # image-less mode: a fixed test pattern with the scene's dimensions
        return checkerboard(scene.width, scene.height)
    root = Path(image_dir)
    candidates = [root / scene.file_name]
    candidates += [root / f"{scene.image_id}{ext}" for ext in (".png", ".npy")]
    for candidate in candidates:
        if candidate.exists():
            return load_image(str(candidate))
    raise FileNotFoundError(f"no image file for {scene.image_id!r} under {image_dir}")


def _resized(image: np.ndarray, edge: Optional[int]) -> tuple[np.ndarray, float, float]:
    """Image scaled so its long edge matches `edge`, plus back-scaling factors."""
    if edge is None:
        return image, 1.0, 1.0
    height, width = image.shape[:2]
    scale = edge / max(width, height)
    new_w, new_h = max(1, round(width * scale)), max(1, round(height * scale))
    from PIL import Image

    resized = np.asarray(Image.fromarray(image).resize((new_w, new_h)))
    return resized, width / new_w, height / new_h


def _clamped_row(row, scene: Scene, context: str) -> Optional[list]:
    x0, y0, x1, y1 = (float(v) for v in row[:4])
    label, confidence = int(row[4]), float(row[5])
    x0, y0 = max(0.0, x0), max(0.0, y0)
    x1, y1 = min(float(scene.width), x1), min(float(scene.height), y1)
    if x0 >= x1 or y0 >= y1:
        warnings.warn(f"{context}: box {list(row[:4])} degenerate after clamping, dropped")
        return None
    return [x0, y0, x1, y1, label, confidence]


def detect_views(model: Model, scene: Scene, image: np.ndarray, manifest: Manifest,
                 resize_edge: Optional[int] = None) -> dict[str, list]:
    """All detection lists for one scene, keyed base plus stringified mask ids."""
    working, back_x, back_y = _resized(image, resize_edge)
    views: dict[str, list] = {}
    for key, view in [(BASE_KEY, working)] + [
        (str(m.mask_id), apply_mask(working, m)) for m in manifest.masks
    ]:
        rows = []
        for row in model(view, scene):
            scaled = [row[0] * back_x, row[1] * back_y, row[2] * back_x, row[3] * back_y, row[4], row[5]]
            clamped = _clamped_row(scaled, scene, f"{scene.image_id}/{key}")
            if clamped is not None:
                rows.append(clamped)
        views[key] = rows
    return views


def export_fixture(
    model: Model,
    scenes: Sequence[Scene],
    manifest: Manifest,
    out_path: str,
    image_dir: Optional[str] = None,
    resize_edge: Optional[int] = None,
    workers: Optional[int] = None,
) -> ExportReport:
    """Run the model over every view of every scene and write the fixture.

    Scenes whose image fails to load or decode are skipped with a warning
    and reported; detection happens batch-parallel across images while a
    single writer assembles the output.
    """
    def run_one(scene: Scene):
        try:
            image = _scene_image(scene, image_dir)
        except (OSError, ValueError) as exc:
            warnings.warn(f"skipping {scene.image_id!r}: {exc}")
            return scene.image_id, None, str(exc)
        return scene.image_id, detect_views(model, scene, image, manifest, resize_edge), ""

    max_workers = workers or min(8, max(1, len(scenes)))
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(run_one, scenes))

    images = {image_id: views for image_id, views, _ in results if views is not None}
    skipped = tuple((image_id, reason) for image_id, views, reason in results if views is None)
    payload = {"mask_manifest_hash": manifest.sha256, "images": images}
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(payload))
        fh.write("\n")
    return ExportReport(
        images_written=len(images),
        views_per_image=1 + len(manifest.masks),
        skipped=skipped,
        manifest_sha256=manifest.sha256,
    )


def export_detections(cfg: AdapterConfig) -> ExportReport:
    manifest = read_manifest(cfg.manifest_path)
    scenes = read_scenes(cfg.annotations_path)
    model = resolve_model(cfg.model_entry, scenes)
    return export_fixture(
        model, scenes, manifest, cfg.out_path,
        image_dir=cfg.image_dir, resize_edge=cfg.resize_edge, workers=cfg.workers,
    )
