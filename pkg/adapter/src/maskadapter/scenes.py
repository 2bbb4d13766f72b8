"""COCO-style scene annotations: image dimensions plus ground-truth boxes."""

from __future__ import annotations

import json
from dataclasses import dataclass


@dataclass(frozen=True)
class Scene:
    image_id: str
    width: int
    height: int
    file_name: str
    # (x_min, y_min, x_max, y_max, label) per ground-truth object
    boxes: tuple[tuple[float, float, float, float, int], ...]


def read_scenes(path: str) -> list[Scene]:
    """Images and their annotations, sorted by image id.

    Annotations use [x, y, w, h] bboxes keyed to images by id; images with
    no annotations still yield scenes so every view gets exported.
    """
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    boxes_by_image: dict[str, list] = {}
    for ann in payload.get("annotations", []):
        x, y, w, h = (float(v) for v in ann["bbox"])
        boxes_by_image.setdefault(str(ann["image_id"]), []).append(
            (x, y, x + w, y + h, int(ann["category_id"]))
        )
    scenes = []
    for entry in payload["images"]:
        image_id = str(entry["id"])
        scenes.append(
            Scene(
                image_id=image_id,
                width=int(entry["width"]),
                height=int(entry["height"]),
                file_name=str(entry.get("file_name", f"{image_id}.png")),
                boxes=tuple(boxes_by_image.get(image_id, ())),
            )
        )
    scenes.sort(key=lambda s: s.image_id)
    return scenes
