"""Ground-truth world model: grid, object locations, vehicle poses, occluders.

Everything here is immutable after construction and safe to share across
any number of readers.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import ConfigurationError

Point = tuple[float, float]
Segment = tuple[Point, Point]


def normalize_angle(degrees: float) -> float:
    """Fold an angle into [0, 360)."""
    return degrees % 360.0


def fold_signed(degrees: float) -> float:
    """Fold an angle difference into [-180, 180)."""
    return (degrees + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class Pose:
    """Position plus global heading in degrees."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class CameraModel:
    """Horizontal pinhole model: field of view, pixel columns, range limit.

    ``gamma`` (degrees per pixel) is always fov / image_width; it is
    computed here so the two can never drift apart.
    """

    fov: float
    image_width: int
    d_max: float
    gamma: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.fov < 180.0:
            raise ConfigurationError(f"camera fov must be in (0, 180), got {self.fov}")
        if self.image_width < 1:
            raise ConfigurationError(f"image_width must be >= 1, got {self.image_width}")
        if self.d_max <= 0:
            raise ConfigurationError(f"d_max must be positive, got {self.d_max}")
        object.__setattr__(self, "gamma", self.fov / self.image_width)


@dataclass(frozen=True)
class TrueObject:
    """A real object at a known location, with its true label and extent."""

    location_id: str
    true_label: str
    physical_size: float
    position: Point

    def __post_init__(self):
        if self.physical_size <= 0:
            raise ConfigurationError(
                f"object {self.location_id}: physical_size must be positive"
            )


@dataclass(frozen=True)
class Cav:
    """A connected vehicle: identity, pose, and camera."""

    cav_id: str
    pose: Pose
    camera: CameraModel


@dataclass(frozen=True)
class WorldScene:
    """The full ground truth for one run."""

    grid_width: float
    grid_height: float
    locations: tuple[TrueObject, ...]
    cavs: tuple[Cav, ...]
    obstacles: tuple[Segment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(self.locations))
        object.__setattr__(self, "cavs", tuple(self.cavs))
        object.__setattr__(
            self,
            "obstacles",
            tuple((tuple(a), tuple(b)) for a, b in self.obstacles),
        )
        if self.grid_width <= 0 or self.grid_height <= 0:
            raise ConfigurationError("grid dimensions must be positive")
        seen_locs = set()
        for obj in self.locations:
            if obj.location_id in seen_locs:
                raise ConfigurationError(f"duplicate location id {obj.location_id!r}")
            seen_locs.add(obj.location_id)
            self._check_inside(obj.position, f"location {obj.location_id}")
        seen_cavs = set()
        for cav in self.cavs:
            if cav.cav_id in seen_cavs:
                raise ConfigurationError(f"duplicate cav id {cav.cav_id!r}")
            seen_cavs.add(cav.cav_id)
            self._check_inside(cav.pose.position, f"cav {cav.cav_id}")
        for i, (a, b) in enumerate(self.obstacles):
            self._check_inside(a, f"obstacle {i}")
            self._check_inside(b, f"obstacle {i}")

    def _check_inside(self, point: Point, what: str) -> None:
        x, y = point
        if not (0.0 <= x <= self.grid_width and 0.0 <= y <= self.grid_height):
            raise ConfigurationError(f"{what} at {point} is outside the grid")

    def location(self, location_id: str) -> TrueObject:
        for obj in self.locations:
            if obj.location_id == location_id:
                return obj
        raise ConfigurationError(f"unknown location id {location_id!r}")

    def cav(self, cav_id: str) -> Cav:
        for cav in self.cavs:
            if cav.cav_id == cav_id:
                return cav
        raise ConfigurationError(f"unknown cav id {cav_id!r}")

    def true_label(self, location_id: str) -> str:
        return self.location(location_id).true_label


def bearing_and_distance(from_pose: Pose, to: Point) -> tuple[float, float]:
    """Distance to a target and the absolute deviation from the pose heading.

    The deviation is folded into [0, 180] degrees; it is 0 when the target
    lies dead ahead.
    """
    dx = to[0] - from_pose.x
    dy = to[1] - from_pose.y
    distance = math.hypot(dx, dy)
    bearing = math.degrees(math.atan2(dy, dx))
    deviation = abs(fold_signed(bearing - from_pose.theta))
    return distance, deviation


def _orient(p: Point, q: Point, r: Point) -> int:
    v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    return (v > 0) - (v < 0)


def _on_segment(p: Point, q: Point, r: Point) -> bool:
    # r is assumed collinear with pq
    return (
        min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
        and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])
    )


def segments_intersect(p1: Point, p2: Point, p3: Point, p4: Point) -> bool:
    """True iff segments p1p2 and p3p4 share any point (touching counts)."""
    d1 = _orient(p3, p4, p1)
    d2 = _orient(p3, p4, p2)
    d3 = _orient(p1, p2, p3)
    d4 = _orient(p1, p2, p4)
    if d1 != d2 and d3 != d4:
        return True
    if d1 == 0 and _on_segment(p3, p4, p1):
        return True
    if d2 == 0 and _on_segment(p3, p4, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, p3):
        return True
    if d4 == 0 and _on_segment(p1, p2, p4):
        return True
    return False


def line_of_sight(
    from_point: Point, to_point: Point, obstacles: Sequence[Segment]
) -> bool:
    """True iff the segment between the points crosses no obstacle.

    Merely touching an obstacle endpoint counts as blocked.
    """
    for a, b in obstacles:
        if segments_intersect(from_point, to_point, a, b):
            return False
    return True
