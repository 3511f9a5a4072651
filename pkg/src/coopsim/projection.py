"""Bounding-box geometry: pixel measurements to world coordinates.

The bearing formula comes in two flavours, selected by a convention flag:

* ``paper-literal`` computes ``theta = pose.theta - gamma * x_center``.
  The formula is self-consistent when the pose angle passed in is the
  bearing of the camera's leftmost pixel ray.
* ``center-relative`` computes
  ``theta = pose.theta - gamma * (x_center - image_width / 2)`` where the
  pose angle is the optical-axis bearing.

Both describe the same physical camera; :func:`reference_pose` converts a
vehicle pose (heading = optical axis) into the pose each formula expects,
and is the single place where the two readings are reconciled.
"""

import math
from dataclasses import dataclass

from .errors import (
    ConfigurationError,
    DegenerateBoxError,
    GeometryError,
    OutOfModelError,
)
from .scene_model import CameraModel, Point, Pose, normalize_angle

PAPER_LITERAL = "paper-literal"
CENTER_RELATIVE = "center-relative"
CONVENTIONS = (PAPER_LITERAL, CENTER_RELATIVE)


@dataclass(frozen=True)
class BoundingBox:
    """Pixel-space detection box; only the horizontal extent drives geometry."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_max <= self.x_min:
            raise ConfigurationError(
                f"bounding box needs x_max > x_min, got [{self.x_min}, {self.x_max}]"
            )
        if self.y_max < self.y_min:
            raise ConfigurationError(
                f"bounding box needs y_max >= y_min, got [{self.y_min}, {self.y_max}]"
            )
        if self.x_min < 0:
            raise ConfigurationError("bounding box extends left of the image")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def x_center(self) -> float:
        return self.x_min + 0.5 * self.width


@dataclass(frozen=True)
class LocalizedDetection:
    """A detection after projection into world coordinates."""

    label: str
    confidence: float
    position: Point
    source_cav: str = ""
    cycle: int = 0


def _check_convention(convention: str) -> None:
    if convention not in CONVENTIONS:
        raise ConfigurationError(
            f"unknown angular convention {convention!r}; expected one of {CONVENTIONS}"
        )


def reference_pose(pose: Pose, cam: CameraModel, convention: str) -> Pose:
    """The pose whose theta is the bearing formula's reference angle.

    ``pose.theta`` is the vehicle heading (optical axis). Under the
    paper-literal convention the formula's reference is the leftmost pixel
    ray, half a field of view to the left of the heading.
    """
    _check_convention(convention)
    if convention == PAPER_LITERAL:
        return Pose(pose.x, pose.y, pose.theta + cam.fov / 2.0)
    return pose


def estimate_distance(bbox: BoundingBox, assumed_size: float, cam: CameraModel) -> float:
    """Distance from box width: size / tan(gamma * width)."""
    w = bbox.width
    if w <= 0:
        raise DegenerateBoxError(f"box width {w} px")
    alpha = cam.gamma * w
    if alpha >= 90.0:
        raise OutOfModelError(f"subtended angle {alpha:.3f} deg >= 90 deg")
    return assumed_size / math.tan(math.radians(alpha))


def estimate_bearing(
    bbox: BoundingBox, pose: Pose, cam: CameraModel, convention: str = PAPER_LITERAL
) -> float:
    """Global bearing of the box center, in [0, 360).

    Applies the selected formula to ``pose.theta`` exactly as given; see the
    module docstring for what the angle must mean under each convention.
    """
    _check_convention(convention)
    x_center = bbox.x_center
    if not 0.0 <= x_center <= cam.image_width:
        raise GeometryError(
            f"box center {x_center} px outside image of width {cam.image_width}"
        )
    if convention == PAPER_LITERAL:
        theta = pose.theta - cam.gamma * x_center
    else:
        theta = pose.theta - cam.gamma * (x_center - cam.image_width / 2.0)
    return normalize_angle(theta)


def to_global(pose: Pose, distance: float, theta_w: float) -> Point:
    """World position at the given distance and bearing from the pose."""
    rad = math.radians(theta_w)
    return (pose.x + distance * math.cos(rad), pose.y + distance * math.sin(rad))


def localize(
    raw,
    pose: Pose,
    cam: CameraModel,
    convention: str = PAPER_LITERAL,
    source_cav: str = "",
    cycle: int = 0,
) -> LocalizedDetection:
    """Project a raw detection to world coordinates.

    Composes distance, bearing, and the global transform; label and
    confidence pass through unchanged.
    """
    d = estimate_distance(raw.bbox, raw.assumed_size, cam)
    theta = estimate_bearing(raw.bbox, pose, cam, convention)
    position = to_global(pose, d, theta)
    return LocalizedDetection(
        label=raw.label,
        confidence=raw.confidence,
        position=position,
        source_cav=source_cav,
        cycle=cycle,
    )
