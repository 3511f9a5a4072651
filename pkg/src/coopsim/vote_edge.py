"""Edge-side label consensus: reputation- and visibility-weighted voting.

Each incoming report adds reputation * confidence * visibility to the
tally cell for its (location, label). At every verdict interval the
highest-scoring label per location wins, reputations are adjusted from
ground truth, and the tally is cleared for the next round (unless
configured to accumulate).
"""

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .errors import (
    ConfigurationError,
    OutOfRangeError,
    UnknownLocationError,
)
from .message_bus import MessageBus, TOPIC_GLOBAL_VERDICTS, TOPIC_VOTE_DETECTIONS
from .opcount import OpCounter
from .scene_model import Pose, TrueObject, bearing_and_distance
from . import wire

VISIBILITY_PAPER_LITERAL = "paper-literal"
VISIBILITY_CORRECTED = "corrected"
VISIBILITY_MODES = (VISIBILITY_PAPER_LITERAL, VISIBILITY_CORRECTED)

REPUTATION_FLOOR = 0.30
REPUTATION_CEILING = 1.00
INITIAL_REPUTATION = 0.5


@dataclass(frozen=True)
class VoteParams:
    d_max: float
    p_d: float = 0.7
    tau_ms: int = 120
    eta: float = 0.05
    visibility_mode: str = VISIBILITY_PAPER_LITERAL
    cumulative_tally: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p_d <= 1.0:
            raise ConfigurationError("p_d must be in [0, 1]")
        if self.eta <= 0:
            raise ConfigurationError("eta must be positive")
        if self.d_max <= 0:
            raise ConfigurationError("d_max must be positive")
        if self.tau_ms <= 0:
            raise ConfigurationError("tau_ms must be positive")
        if self.visibility_mode not in VISIBILITY_MODES:
            raise ConfigurationError(
                f"visibility_mode must be one of {VISIBILITY_MODES}"
            )


@dataclass
class Reputation:
    """Per-vehicle trust plus the per-round outcome counters feeding it."""

    value: float = INITIAL_REPUTATION
    correct_count: int = 0
    incorrect_count: int = 0
    object_count: int = 0

    def reset_round(self) -> None:
        self.correct_count = 0
        self.incorrect_count = 0
        self.object_count = 0


@dataclass(frozen=True)
class VoteReport:
    """One vote from a vehicle: a proposed label for a known location."""

    location_id: str
    label: str
    confidence: float
    cav_id: str
    cycle: int = 0

    def to_row(self) -> tuple:
        return ("vote", self.location_id, self.label, self.confidence, self.cav_id, self.cycle)

    @staticmethod
    def from_row(row: Sequence[str]) -> "VoteReport":
        _, location_id, label, confidence, cav_id, cycle = row
        return VoteReport(location_id, label, float(confidence), cav_id, int(cycle))


@dataclass(frozen=True)
class Verdict:
    location_id: str
    label: Optional[str]
    round: int
    issue_time: int

    def to_row(self) -> tuple:
        return ("verdict", self.location_id, self.label, self.round, self.issue_time)

    @staticmethod
    def from_row(row: Sequence[str]) -> "Verdict":
        _, location_id, label, round_index, issue_time = row
        return Verdict(location_id, wire.opt_str(label), int(round_index), int(issue_time))


class VoteTally:
    """Accumulated scores per (known location, candidate label)."""

    def __init__(self, location_ids: Sequence[str]):
        self.scores: dict[str, dict[str, float]] = {loc: {} for loc in location_ids}

    def add(self, location_id: str, label: str, amount: float) -> None:
        if location_id not in self.scores:
            raise UnknownLocationError(f"no known location {location_id!r}")
        cell = self.scores[location_id]
        cell[label] = cell.get(label, 0.0) + amount

    def get(self, location_id: str, label: str) -> float:
        return self.scores.get(location_id, {}).get(label, 0.0)

    def reset(self) -> None:
        for cell in self.scores.values():
            cell.clear()


def visibility(rho_position, cav_pose: Pose, params: VoteParams) -> float:
    """Visibility weight in [0, 1] from distance and angular deviation.

    The default mode applies the published combination verbatim, in which
    the angle term grows with deviation; "corrected" flips that term so
    straight-ahead targets score highest. Both stay within [0, 1].
    """
    d, deviation = bearing_and_distance(cav_pose, rho_position)
    if d > params.d_max:
        raise OutOfRangeError(f"distance {d:.3f} exceeds d_max {params.d_max}")
    distance_term = 1.0 - d / params.d_max
    angle_fraction = deviation / 360.0
    if params.visibility_mode == VISIBILITY_PAPER_LITERAL:
        angle_term = angle_fraction
    else:
        angle_term = 1.0 - angle_fraction
    return params.p_d * distance_term + (1.0 - params.p_d) * angle_term


def ingest_vote(
    tally: VoteTally, report: VoteReport, reputation_value: float, k: float
) -> None:
    """Add reputation * confidence * visibility to the report's tally cell."""
    if not 0.0 <= report.confidence <= 1.0:
        raise ConfigurationError(f"confidence {report.confidence} outside [0, 1]")
    tally.add(report.location_id, report.label, reputation_value * report.confidence * k)


def verdict_round(
    tally: VoteTally,
    location_ids: Sequence[str],
    round_index: int = 0,
    issue_time: int = 0,
    counter: Optional[OpCounter] = None,
    reset: bool = True,
) -> list[Verdict]:
    """Argmax label per location (lexicographic ties, None when no votes);
    clears the tally afterwards unless reset is False."""
    verdicts = []
    for loc in location_ids:
        cell = tally.scores.get(loc, {})
        if counter:
            counter.add(max(1, len(cell)))
        label = min(cell, key=lambda l: (-cell[l], l)) if cell else None
        verdicts.append(Verdict(loc, label, round_index, issue_time))
    if reset:
        tally.reset()
    return verdicts


def update_reputation(
    value: float, correct: int, incorrect: int, objects: int, eta: float
) -> float:
    """One reputation step from a round outcome, clamped to the trust band."""
    if objects < correct + incorrect:
        raise ConfigurationError("objects must be >= correct + incorrect")
    if objects == 0:
        return value
    raw = (correct - incorrect) / objects
    return min(max(value + eta * raw, REPUTATION_FLOOR), REPUTATION_CEILING)


def score_oracle(
    reports_by_cav: Mapping[str, Sequence[VoteReport]],
    reputations: Mapping[str, float],
    poses: Mapping[str, Pose],
    locations: Mapping[str, tuple],
    params: VoteParams,
) -> dict[str, dict[str, float]]:
    """Brute-force tally: triple loop over vehicles, reports, and candidate
    labels, with the visibility weight recomputed inline rather than via
    :func:`visibility`. Used to verify the incremental path in tests."""
    labels = sorted(
        {rep.label for reports in reports_by_cav.values() for rep in reports}
    )
    tally: dict[str, dict[str, float]] = {loc: {} for loc in locations}
    for cav_id in sorted(reports_by_cav):
        pose = poses[cav_id]
        r_v = reputations[cav_id]
        for rep in reports_by_cav[cav_id]:
            rho = locations[rep.location_id]
            d = math.hypot(rho[0] - pose.x, rho[1] - pose.y)
            bearing = math.degrees(math.atan2(rho[1] - pose.y, rho[0] - pose.x))
            dev = abs((bearing - pose.theta + 180.0) % 360.0 - 180.0)
            if params.visibility_mode == VISIBILITY_PAPER_LITERAL:
                angle_term = dev / 360.0
            else:
                angle_term = 1.0 - dev / 360.0
            k = params.p_d * (1.0 - d / params.d_max) + (1.0 - params.p_d) * angle_term
            for label in labels:
                if rep.label != label:
                    continue
                cell = tally[rep.location_id]
                cell[label] = cell.get(label, 0.0) + r_v * rep.confidence * k
    return tally


class VoteEdgeServer:
    """Stateful consensus server bound to a bus.

    Needs the scene's known locations (for tally keys and truth) and the
    vehicle poses (to weight each vote by visibility). Reports naming an
    unknown location or arriving from beyond detection range are rejected
    and counted, never fatal.
    """

    def __init__(
        self,
        bus: MessageBus,
        locations: Sequence[TrueObject],
        cav_poses: Mapping[str, Pose],
        params: VoteParams,
        server_id: str = "edge",
    ):
        self.bus = bus
        self.locations = tuple(locations)
        self.params = params
        self.server_id = server_id
        self.cav_poses = dict(cav_poses)
        self.location_ids = [obj.location_id for obj in locations]
        self._positions = {obj.location_id: obj.position for obj in locations}
        self._true_labels = {obj.location_id: obj.true_label for obj in locations}
        self.tally = VoteTally(self.location_ids)
        self.reputations: dict[str, Reputation] = {
            cav: Reputation() for cav in sorted(cav_poses)
        }
        self.counter = OpCounter()
        self.rejected_reports = 0
        self.received_any = False
        self.last_published: Optional[int] = None
        self.rounds_run = 0
        self.report_counts: dict[str, list[int]] = {}
        self.trajectories: dict[str, list[float]] = {
            cav: [rep.value] for cav, rep in self.reputations.items()
        }
        bus.subscribe(TOPIC_VOTE_DETECTIONS, server_id)

    def ingest(self, envelope) -> None:
        self.received_any = True
        for row in wire.decode_records(envelope.payload):
            if row[0] != "vote":
                continue
            report = VoteReport.from_row(row)
            self._ingest_report(report)

    def _ingest_report(self, report: VoteReport) -> None:
        rep = self.reputations.get(report.cav_id)
        if rep is None or report.location_id not in self._positions:
            self.rejected_reports += 1
            return
        try:
            k = visibility(
                self._positions[report.location_id],
                self.cav_poses[report.cav_id],
                self.params,
            )
        except OutOfRangeError:
            self.rejected_reports += 1
            return
        ingest_vote(self.tally, report, rep.value, k)
        self.counter.add()
        rep.object_count += 1
        lifetime = self.report_counts.setdefault(report.cav_id, [0, 0])
        lifetime[1] += 1
        if report.label == self._true_labels[report.location_id]:
            rep.correct_count += 1
            lifetime[0] += 1
        else:
            rep.incorrect_count += 1

    def verdict_round(self, now: int) -> list[Verdict]:
        """Issue verdicts, publish them, and apply reputation updates."""
        verdicts = verdict_round(
            self.tally,
            self.location_ids,
            round_index=self.rounds_run,
            issue_time=now,
            counter=self.counter,
            reset=not self.params.cumulative_tally,
        )
        payload = wire.encode_records(v.to_row() for v in verdicts)
        self.bus.publish(TOPIC_GLOBAL_VERDICTS, payload, self.server_id, now)
        for cav in sorted(self.reputations):
            rep = self.reputations[cav]
            rep.value = update_reputation(
                rep.value,
                rep.correct_count,
                rep.incorrect_count,
                rep.object_count,
                self.params.eta,
            )
            self.counter.add()
            rep.reset_round()
            self.trajectories[cav].append(rep.value)
        self.last_published = now
        self.rounds_run += 1
        return verdicts
