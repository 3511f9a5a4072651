"""Edge-side multi-view fusion: aggregate, match, and fuse detections.

Every round the server concatenates the latest batch from each vehicle,
groups detections around the known locations, and fuses each group into
one labelled map entry, published for all vehicles to consume.
"""

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .errors import ConfigurationError
from .message_bus import MessageBus, TOPIC_DETECTIONS, TOPIC_GLOBAL_DETECTIONS
from .opcount import OpCounter
from .projection import LocalizedDetection
from .scene_model import Point, TrueObject
from . import wire


@dataclass(frozen=True)
class PaceParams:
    delta: float
    tau_ms: int = 120
    exclusive_nearest: bool = False

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigurationError("delta must be positive")
        if self.tau_ms <= 0:
            raise ConfigurationError("tau_ms must be positive")


@dataclass(frozen=True)
class GlobalMapEntry:
    """Fused result for one location; label None means nothing detected."""

    location_id: str
    label: Optional[str]
    confidence: float
    position: Optional[Point]

    def __post_init__(self):
        if (self.label is None) != (self.confidence == 0.0):
            raise ConfigurationError(
                f"entry {self.location_id}: label None iff confidence 0"
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise ConfigurationError("fused confidence must be in [0, 1]")

    def to_row(self) -> tuple:
        x, y = self.position if self.position else (None, None)
        return ("map", self.location_id, self.label, self.confidence, x, y)

    @staticmethod
    def from_row(row: Sequence[str]) -> "GlobalMapEntry":
        _, location_id, label, confidence, x, y = row
        position = (float(x), float(y)) if x else None
        return GlobalMapEntry(
            location_id=location_id,
            label=wire.opt_str(label),
            confidence=float(confidence),
            position=position,
        )


def collect(
    batches: Mapping[str, Sequence[LocalizedDetection]],
    counter: Optional[OpCounter] = None,
) -> list[LocalizedDetection]:
    """Unify per-vehicle batches into one list, in vehicle-id order."""
    unified: list[LocalizedDetection] = []
    for cav_id in sorted(batches):
        for det in batches[cav_id]:
            if counter:
                counter.add()
            unified.append(det)
    return unified


def match(
    omega_all: Sequence[LocalizedDetection],
    locations: Sequence[TrueObject],
    delta: float,
    exclusive_nearest: bool = False,
    counter: Optional[OpCounter] = None,
) -> dict[str, list[LocalizedDetection]]:
    """Group detections around known locations within radius delta.

    By default a detection within delta of several locations joins every
    one of their groups. With exclusive_nearest it joins only the nearest
    in-range location (ties broken by smallest location id).
    """
    if delta <= 0:
        raise ConfigurationError("delta must be positive")
    groups: dict[str, list[LocalizedDetection]] = {
        obj.location_id: [] for obj in locations
    }
    if exclusive_nearest:
        for det in omega_all:
            best = None
            for obj in locations:
                if counter:
                    counter.add()
                d = math.dist(det.position, obj.position)
                if d <= delta and (best is None or (d, obj.location_id) < best):
                    best = (d, obj.location_id)
            if best is not None:
                groups[best[1]].append(det)
        return groups
    for obj in locations:
        for det in omega_all:
            if counter:
                counter.add()
            if math.dist(det.position, obj.position) <= delta:
                groups[obj.location_id].append(det)
    return groups


def fuse(
    location_id: str,
    group: Sequence[LocalizedDetection],
    counter: Optional[OpCounter] = None,
) -> GlobalMapEntry:
    """Fuse one group: confidence-weighted label vote, c^2/c confidence,
    unweighted mean position. An empty group (or one with no confidence
    mass) yields an empty entry."""
    if counter:
        counter.add(max(1, len(group)))
    if not group:
        return GlobalMapEntry(location_id, None, 0.0, None)
    sum_c = sum(det.confidence for det in group)
    if sum_c == 0.0:
        return GlobalMapEntry(location_id, None, 0.0, None)
    label_mass: dict[str, float] = {}
    for det in group:
        label_mass[det.label] = label_mass.get(det.label, 0.0) + det.confidence
    label = min(label_mass, key=lambda l: (-label_mass[l], l))
    confidence = sum(det.confidence**2 for det in group) / sum_c
    x = sum(det.position[0] for det in group) / len(group)
    y = sum(det.position[1] for det in group) / len(group)
    return GlobalMapEntry(location_id, label, confidence, (x, y))


def fuse_all(
    omega_all: Sequence[LocalizedDetection],
    locations: Sequence[TrueObject],
    delta: float,
    exclusive_nearest: bool = False,
    counter: Optional[OpCounter] = None,
) -> list[GlobalMapEntry]:
    """collect-free fusion pipeline over an already-unified list."""
    groups = match(omega_all, locations, delta, exclusive_nearest, counter)
    return [
        fuse(obj.location_id, groups[obj.location_id], counter) for obj in locations
    ]


class PaceEdgeServer:
    """Stateful fusion server bound to a bus.

    Keeps the latest batch per vehicle; batches older than three update
    intervals are discarded so a silent vehicle cannot poison the map.
    """

    STALE_FACTOR = 3

    def __init__(
        self,
        bus: MessageBus,
        locations: Sequence[TrueObject],
        params: PaceParams,
        server_id: str = "edge",
    ):
        self.bus = bus
        self.locations = tuple(locations)
        self.params = params
        self.server_id = server_id
        self.counter = OpCounter()
        self.last_published: Optional[int] = None
        self.received_any = False
        self.rounds_run = 0
        self._batches: dict[str, tuple[int, list[LocalizedDetection]]] = {}
        self._true_labels = {obj.location_id: obj.true_label for obj in locations}
        self._positions = {obj.location_id: obj.position for obj in locations}
        self.report_counts: dict[str, list[int]] = {}
        bus.subscribe(TOPIC_DETECTIONS, server_id)

    def ingest(self, envelope) -> None:
        dets = [
            LocalizedDetection(
                label=row[1],
                confidence=float(row[2]),
                position=(float(row[3]), float(row[4])),
                source_cav=row[5],
                cycle=int(row[6]),
            )
            for row in wire.decode_records(envelope.payload)
            if row[0] == "det"
        ]
        self._batches[envelope.publisher] = (envelope.deliver_time, dets)
        self.received_any = True

    def current_batches(self, now: int) -> dict[str, list[LocalizedDetection]]:
        horizon = now - self.STALE_FACTOR * self.params.tau_ms
        return {
            cav: dets
            for cav, (received, dets) in self._batches.items()
            if received >= horizon
        }

    def _judge(self, omega_all: Sequence[LocalizedDetection]) -> None:
        # Per-vehicle report accuracy vs ground truth, for run metrics.
        for det in omega_all:
            nearest = None
            for loc_id, pos in self._positions.items():
                d = math.dist(det.position, pos)
                if d <= self.params.delta and (nearest is None or d < nearest[0]):
                    nearest = (d, loc_id)
            if nearest is None:
                continue
            counts = self.report_counts.setdefault(det.source_cav, [0, 0])
            counts[1] += 1
            if det.label == self._true_labels[nearest[1]]:
                counts[0] += 1

    def pace_round(self, now: int) -> list[GlobalMapEntry]:
        """Run one fusion round and publish the global map."""
        batches = self.current_batches(now)
        omega_all = collect(batches, self.counter)
        entries = fuse_all(
            omega_all,
            self.locations,
            self.params.delta,
            self.params.exclusive_nearest,
            self.counter,
        )
        self._judge(omega_all)
        payload = wire.encode_records(entry.to_row() for entry in entries)
        self.bus.publish(TOPIC_GLOBAL_DETECTIONS, payload, self.server_id, now)
        self.last_published = now
        self.rounds_run += 1
        return entries
