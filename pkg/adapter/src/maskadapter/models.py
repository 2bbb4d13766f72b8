"""Model entry points.

A model is any callable (image_array, scene) -> iterable of detection rows
(x_min, y_min, x_max, y_max, label, confidence). Entry points name a
factory taking the scene list and returning a model, so wrappers around
real detectors can precompute whatever they need; two built-in factories
cover testing.
"""

from __future__ import annotations

import importlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .scenes import Scene

Row = tuple[float, float, float, float, int, float]
Model = Callable[[np.ndarray, Scene], Iterable[Row]]


class EchoModel:
    """Returns each scene's ground truth verbatim, ignoring the pixels."""

    def __init__(self, scenes: Sequence[Scene]) -> None:
        self._boxes = {s.image_id: s.boxes for s in scenes}

    def __call__(self, image: np.ndarray, scene: Scene) -> list[Row]:
        return [(x0, y0, x1, y1, label, 1.0) for x0, y0, x1, y1, label in self._boxes[scene.image_id]]


class PixelSumProbe:
    """Reports the mean pixel value as a single box's confidence.

    Fed a known test pattern, the confidence pins down exactly how many
    pixels the masking step zeroed, which makes mask semantics observable
    through the fixture alone.
    """

    def __init__(self, scenes: Sequence[Scene] | None = None) -> None:
        del scenes

    def __call__(self, image: np.ndarray, scene: Scene) -> list[Row]:
        mean = float(image.sum()) / image.size
        return [(0.0, 0.0, 1.0, 1.0, 1, mean)]


def checkerboard(width: int, height: int) -> np.ndarray:
    """(height, width) uint8 parity pattern; default pixels for image-less runs."""
    rows, cols = np.indices((height, width))
    return ((rows + cols) % 2).astype(np.uint8)


FACTORIES = {"echo": EchoModel, "probe": PixelSumProbe}


def resolve_model(entry: str, scenes: Sequence[Scene]) -> Model:
    """Build a model from a built-in name or a "module:attribute" factory."""
    if entry in FACTORIES:
        return FACTORIES[entry](scenes)
    if ":" not in entry:
        raise ValueError(
            f"unknown model {entry!r}: expected one of {sorted(FACTORIES)} or module:attribute"
        )
    module_name, _, attr = entry.partition(":")
    try:
        module = importlib.import_module(module_name)
        factory = getattr(module, attr)
    except (ImportError, AttributeError) as exc:
        raise ValueError(f"cannot load model {entry!r}: {exc}")
    return factory(scenes)
