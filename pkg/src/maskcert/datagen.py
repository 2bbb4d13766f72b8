"""Deterministic synthetic datasets for desk-scale experiments."""

from __future__ import annotations

import random

from .detector import ImageMeta
from .geometry import Box, iou


def make_synthetic_images(
    num_images: int,
    objects_per_image: int,
    width: int,
    height: int,
    seed: int,
    num_labels: int = 3,
    min_side_frac: float = 0.12,
    max_side_frac: float = 0.40,
) -> list[ImageMeta]:
    """Random axis-aligned objects with integer coordinates, reproducible by seed.

    Object sides are drawn between the given fractions of the image extent;
    heavily overlapping duplicates are re-rolled a few times to keep scenes
    with distinguishable objects.
    """
    rng = random.Random(seed)
    images = []
    for i in range(num_images):
        boxes: list[Box] = []
        for _ in range(objects_per_image):
            for _attempt in range(20):
                w = rng.randint(max(2, int(min_side_frac * width)), max(3, int(max_side_frac * width)))
                h = rng.randint(max(2, int(min_side_frac * height)), max(3, int(max_side_frac * height)))
                x = rng.randint(0, width - w)
                y = rng.randint(0, height - h)
                label = rng.randint(1, num_labels)
                candidate = Box(x, y, x + w, y + h, label, 1.0)
                if all(iou(candidate, b, class_agnostic=True) <= 0.4 for b in boxes):
                    break
            boxes.append(candidate)
        images.append(
            ImageMeta(image_id=f"{i:04d}", width=width, height=height, ground_truth=tuple(boxes))
        )
    return images
