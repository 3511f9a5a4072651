"""Synthetic detector: turns ground truth into noisy labelled detections.

This stands in for an onboard vision model. It projects each visible
object into the camera exactly (the inverse of the projection pipeline),
then corrupts the result with configurable label confusion, confidence
spread, box jitter, and misses. With all noise rates at zero it is a
perfect, deterministic detector.
"""

import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import ConfigurationError, NoBoxError
from .projection import BoundingBox
from .scene_model import (
    CameraModel,
    Pose,
    TrueObject,
    WorldScene,
    bearing_and_distance,
    fold_signed,
    line_of_sight,
)


@dataclass(frozen=True)
class RawDetection:
    """One detector output: label, confidence, box, and the size the
    detector assumes for that label (used downstream to estimate distance)."""

    label: str
    confidence: float
    bbox: BoundingBox
    assumed_size: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ConfigurationError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class SensorNoise:
    """Detector error model. All defaults are noiseless.

    confusion_table maps each true label to weighted wrong-label choices;
    it must cover every label the scene can show whenever
    label_confusion_rate > 0. size_catalog maps labels to the physical
    size the detector assumes; labels missing from it fall back to the
    sensed object's true size (which is only correct when the label is).
    """

    label_confusion_rate: float = 0.0
    confusion_table: Mapping[str, Sequence[tuple[str, float]]] = field(
        default_factory=dict
    )
    confidence_mean_correct: float = 0.85
    confidence_mean_wrong: float = 0.55
    confidence_std: float = 0.0
    bbox_jitter_px: float = 0.0
    miss_rate: float = 0.0
    size_catalog: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.label_confusion_rate < 1.0:
            raise ConfigurationError("label_confusion_rate must be in [0, 1)")
        if not 0.0 <= self.miss_rate < 1.0:
            raise ConfigurationError("miss_rate must be in [0, 1)")
        for mean in (self.confidence_mean_correct, self.confidence_mean_wrong):
            if not 0.0 <= mean <= 1.0:
                raise ConfigurationError("confidence means must be in [0, 1]")
        if self.confidence_std < 0 or self.bbox_jitter_px < 0:
            raise ConfigurationError("spread parameters must be non-negative")
        for label, choices in self.confusion_table.items():
            for wrong, weight in choices:
                if weight <= 0:
                    raise ConfigurationError(
                        f"confusion weight for {label!r}->{wrong!r} must be positive"
                    )
        for label, size in self.size_catalog.items():
            if size <= 0:
                raise ConfigurationError(f"size for label {label!r} must be positive")


def inverse_project(obj: TrueObject, pose: Pose, cam: CameraModel) -> BoundingBox:
    """The exact pixel box the object subtends from this pose.

    Raises NoBoxError when the object is out of range, outside the field
    of view, or its box would not fit fully inside the image.
    """
    d, deviation = bearing_and_distance(pose, obj.position)
    if d <= 0:
        raise NoBoxError("object coincides with the camera")
    if d > cam.d_max:
        raise NoBoxError(f"object at {d:.3f} beyond range {cam.d_max}")
    if deviation >= cam.fov / 2.0:
        raise NoBoxError(f"deviation {deviation:.3f} deg at or beyond half-FOV")
    w_exact = math.degrees(math.atan(obj.physical_size / d)) / cam.gamma
    w = max(1, round(w_exact))
    bearing = math.degrees(math.atan2(obj.position[1] - pose.y, obj.position[0] - pose.x))
    offset = fold_signed(pose.theta - bearing) / cam.gamma
    x_center = cam.image_width / 2.0 + offset
    x_min = round(x_center - w / 2.0)
    x_max = x_min + w
    if x_min < 0 or x_max > cam.image_width:
        raise NoBoxError("box would extend past the image edge")
    return BoundingBox(x_min=x_min, y_min=0, x_max=x_max, y_max=w)


def _jitter_box(box: BoundingBox, std: float, width: int, rng: random.Random) -> BoundingBox:
    x_min = box.x_min + round(rng.gauss(0.0, std))
    x_max = box.x_max + round(rng.gauss(0.0, std))
    x_min = min(max(x_min, 0), width - 1)
    x_max = min(max(x_max, x_min + 1), width)
    return BoundingBox(x_min=x_min, y_min=box.y_min, x_max=x_max, y_max=box.y_max)


def _assumed_size(label: str, obj: TrueObject, noise: SensorNoise) -> float:
    size = noise.size_catalog.get(label)
    if size is not None:
        return size
    if label == obj.true_label:
        return obj.physical_size
    raise ConfigurationError(
        f"size_catalog has no entry for confused label {label!r}"
    )


def _draw_label(obj: TrueObject, noise: SensorNoise, rng: random.Random) -> str:
    if noise.label_confusion_rate > 0 and rng.random() < noise.label_confusion_rate:
        choices = noise.confusion_table.get(obj.true_label)
        if not choices:
            raise ConfigurationError(
                f"confusion_table has no entry for label {obj.true_label!r}"
            )
        labels = [wrong for wrong, _ in choices]
        weights = [weight for _, weight in choices]
        return rng.choices(labels, weights=weights, k=1)[0]
    return obj.true_label


def _draw_confidence(correct: bool, noise: SensorNoise, rng: random.Random) -> float:
    mean = noise.confidence_mean_correct if correct else noise.confidence_mean_wrong
    value = mean if noise.confidence_std == 0 else rng.gauss(mean, noise.confidence_std)
    return min(max(value, 0.0), 1.0)


def sense(
    scene: WorldScene, cav_id: str, noise: SensorNoise, rng: random.Random
) -> list[RawDetection]:
    """Detections for one vehicle this cycle.

    An object is sensed when it is in range, within half the field of view
    of the heading, not occluded, and its projected box fits the image.
    """
    cav = scene.cav(cav_id)
    cam = cav.camera
    out: list[RawDetection] = []
    for obj in scene.locations:
        d, deviation = bearing_and_distance(cav.pose, obj.position)
        if d > cam.d_max or deviation >= cam.fov / 2.0:
            continue
        if not line_of_sight(cav.pose.position, obj.position, scene.obstacles):
            continue
        try:
            box = inverse_project(obj, cav.pose, cam)
        except NoBoxError:
            continue
        if noise.miss_rate > 0 and rng.random() < noise.miss_rate:
            continue
        label = _draw_label(obj, noise, rng)
        confidence = _draw_confidence(label == obj.true_label, noise, rng)
        if noise.bbox_jitter_px > 0:
            box = _jitter_box(box, noise.bbox_jitter_px, cam.image_width, rng)
        out.append(
            RawDetection(
                label=label,
                confidence=confidence,
                bbox=box,
                assumed_size=_assumed_size(label, obj, noise),
            )
        )
    return out
