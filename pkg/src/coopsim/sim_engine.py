"""Run orchestration on the simulated clock.

Each 30 ms tick: due bus messages are delivered, every vehicle senses and
localizes, vehicles whose publish interval elapsed send their batch, and
the edge runs its round when its own interval elapsed. The edge stays
quiet until the first message ever reaches it, so a fully partitioned run
issues no verdicts at all.

Also provides the no-collaboration baseline, parameter sweeps, and the
operation-count probe behind the scaling analysis.
"""

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from .errors import ConfigurationError
from .message_bus import (
    BusConfig,
    MessageBus,
    TOPIC_DETECTIONS,
    TOPIC_GLOBAL_DETECTIONS,
    TOPIC_GLOBAL_VERDICTS,
    TOPIC_VOTE_DETECTIONS,
)
from .opcount import OpCounter
from .pace_edge import GlobalMapEntry, PaceEdgeServer, PaceParams, collect, fuse_all
from .projection import (
    CONVENTIONS,
    PAPER_LITERAL,
    LocalizedDetection,
    localize,
    reference_pose,
)
from .scene_model import Pose, TrueObject, WorldScene
from .seeding import BUS_DOMAIN, PROBE_DOMAIN, SENSOR_DOMAIN, derive_seed, substream
from .synthetic_sensor import SensorNoise, sense
from .vote_edge import (
    Verdict,
    VoteEdgeServer,
    VoteParams,
    VoteReport,
    VoteTally,
    ingest_vote,
    verdict_round,
    visibility,
)
from . import wire

CYCLE_TICK_MS = 30

MODE_PACE = "pace"
MODE_VOTE = "vote"
MODE_BASELINE_PACE = "baseline-pace"
MODE_BASELINE_VOTE = "baseline-vote"
MODES = (MODE_PACE, MODE_VOTE, MODE_BASELINE_PACE, MODE_BASELINE_VOTE)

EDGE_ID = "edge-server"
NO_CAV = "-"


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a run needs; fully determined together with its seed."""

    scene: WorldScene
    sensor: SensorNoise
    bus: BusConfig
    pace: PaceParams
    vote: VoteParams
    cycles: int
    seed: int
    mode: str = MODE_PACE
    verdicts_target: Optional[int] = None
    angular_convention: str = PAPER_LITERAL
    name: str = "scenario"
    bus_seed_from_master: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.cycles <= 0:
            raise ConfigurationError("cycles must be positive")
        if self.verdicts_target is not None and self.verdicts_target <= 0:
            raise ConfigurationError("verdicts_target must be positive or omitted")
        if self.angular_convention not in CONVENTIONS:
            raise ConfigurationError(
                f"angular_convention must be one of {CONVENTIONS}"
            )
        for cav in self.scene.cavs:
            if cav.cav_id == EDGE_ID:
                raise ConfigurationError(f"cav id {EDGE_ID!r} is reserved")

    @property
    def run_id(self) -> str:
        return f"{self.name}-{self.mode}-s{self.seed}"


@dataclass(frozen=True)
class VerdictRecord:
    """One judged verdict; cav is '-' for collaborative modes."""

    run_id: str
    round: int
    simulated_time_ms: int
    location_id: str
    cav: str
    issued_label: Optional[str]
    true_label: str
    correct: bool
    mode: str
    seed: int


@dataclass
class RunMetrics:
    run_id: str
    mode: str
    seed: int
    records: list[VerdictRecord]
    accuracy: float
    accuracy_defined: bool
    per_cav_accuracy: dict[str, float]
    reputation_trajectories: dict[str, list[float]]
    message_stats: dict
    operation_counts: list[int]
    rounds_issued: int
    cycles_executed: int
    delivery_digest: str

    def best_cav_accuracy(self) -> float:
        return max(self.per_cav_accuracy.values(), default=0.0)

    def mean_cav_accuracy(self) -> float:
        values = list(self.per_cav_accuracy.values())
        return sum(values) / len(values) if values else 0.0


def nearest_location(
    position, locations: Sequence[TrueObject], delta: float
) -> Optional[str]:
    """Nearest known location within delta, ties to the smaller id."""
    best = None
    for obj in locations:
        d = math.dist(position, obj.position)
        if d <= delta and (best is None or (d, obj.location_id) < best):
            best = (d, obj.location_id)
    return best[1] if best else None


class _Agent:
    """Vehicle loop state: sensing, localizing, batching, feedback intake."""

    def __init__(self, cav, rng, convention: str):
        self.cav = cav
        self.rng = rng
        self.convention = convention
        self.ref_pose = reference_pose(cav.pose, cav.camera, convention)
        self.pending: list = []
        self.last_publish = 0
        self.unmatched_reports = 0
        self.latest_map: Optional[list[GlobalMapEntry]] = None
        self.latest_verdicts: Optional[list[Verdict]] = None
        self.feedback_received = 0

    def sense_cycle(
        self,
        scene: WorldScene,
        noise: SensorNoise,
        cycle: int,
        vote_matching: Optional[tuple[Sequence[TrueObject], float]],
    ) -> None:
        raws = sense(scene, self.cav.cav_id, noise, self.rng)
        for raw in raws:
            det = localize(
                raw,
                self.ref_pose,
                self.cav.camera,
                self.convention,
                source_cav=self.cav.cav_id,
                cycle=cycle,
            )
            if vote_matching is None:
                self.pending.append(det)
                continue
            locations, delta = vote_matching
            loc_id = nearest_location(det.position, locations, delta)
            if loc_id is None:
                self.unmatched_reports += 1
                continue
            self.pending.append(
                VoteReport(loc_id, det.label, det.confidence, self.cav.cav_id, cycle)
            )

    def encode_pending(self) -> bytes:
        if self.pending and isinstance(self.pending[0], VoteReport):
            return wire.encode_records(r.to_row() for r in self.pending)
        return wire.encode_records(
            ("det", d.label, d.confidence, d.position[0], d.position[1], d.source_cav, d.cycle)
            for d in self.pending
        )

    def receive(self, envelope) -> None:
        self.feedback_received += 1
        rows = wire.decode_records(envelope.payload)
        if envelope.topic == TOPIC_GLOBAL_DETECTIONS:
            self.latest_map = [GlobalMapEntry.from_row(r) for r in rows]
        elif envelope.topic == TOPIC_GLOBAL_VERDICTS:
            self.latest_verdicts = [Verdict.from_row(r) for r in rows]


class _BaselineEdge:
    """No-collaboration reference: per vehicle, per location, the verdict is
    that vehicle's highest-confidence label from its most recent sensing
    cycle; locations it cannot currently report on count as missed."""

    STALE_FACTOR = 3

    def __init__(self, bus: MessageBus, locations, delta: float, tau_ms: int):
        self.locations = tuple(locations)
        self.delta = delta
        self.tau_ms = tau_ms
        self.received_any = False
        self.counter = OpCounter()
        self._batches: dict[str, tuple[int, list[LocalizedDetection]]] = {}
        bus.subscribe(TOPIC_DETECTIONS, EDGE_ID)

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

    def round(self, now: int) -> list[tuple[str, str, Optional[str]]]:
        horizon = now - self.STALE_FACTOR * self.tau_ms
        out = []
        for cav_id in sorted(self._batches):
            received, batch = self._batches[cav_id]
            current: list[LocalizedDetection] = []
            if received >= horizon and batch:
                newest = max(det.cycle for det in batch)
                current = [det for det in batch if det.cycle == newest]
            per_location: dict[str, list[LocalizedDetection]] = {}
            for det in current:
                self.counter.add()
                loc_id = nearest_location(det.position, self.locations, self.delta)
                if loc_id is not None:
                    per_location.setdefault(loc_id, []).append(det)
            for obj in self.locations:
                group = per_location.get(obj.location_id)
                if group:
                    best = sorted(group, key=lambda d: (-d.confidence, d.label))[0]
                    out.append((cav_id, obj.location_id, best.label))
                else:
                    out.append((cav_id, obj.location_id, None))
        return out


def _effective_bus_config(config: ScenarioConfig) -> BusConfig:
    if config.bus_seed_from_master:
        return replace(config.bus, seed=derive_seed(config.seed, BUS_DOMAIN))
    return config.bus


def run(config: ScenarioConfig) -> RunMetrics:
    """Execute one full deterministic run and return its metrics."""
    scene = config.scene
    mode = config.mode
    tau = config.pace.tau_ms if mode in (MODE_PACE, MODE_BASELINE_PACE) else config.vote.tau_ms
    bus = MessageBus(_effective_bus_config(config))

    agents = [
        _Agent(cav, substream(config.seed, SENSOR_DOMAIN, i), config.angular_convention)
        for i, cav in enumerate(sorted(scene.cavs, key=lambda c: c.cav_id))
    ]
    vote_matching = None
    publish_topic = TOPIC_DETECTIONS
    if mode == MODE_VOTE:
        vote_matching = (scene.locations, config.pace.delta)
        publish_topic = TOPIC_VOTE_DETECTIONS

    if mode == MODE_PACE:
        edge = PaceEdgeServer(bus, scene.locations, config.pace, EDGE_ID)
        for agent in agents:
            bus.subscribe(TOPIC_GLOBAL_DETECTIONS, agent.cav.cav_id)
    elif mode == MODE_VOTE:
        poses = {cav.cav_id: cav.pose for cav in scene.cavs}
        edge = VoteEdgeServer(bus, scene.locations, poses, config.vote, EDGE_ID)
        for agent in agents:
            bus.subscribe(TOPIC_GLOBAL_VERDICTS, agent.cav.cav_id)
    else:
        delta = config.pace.delta
        edge = _BaselineEdge(bus, scene.locations, delta, tau)

    handlers: dict[str, Callable] = {agent.cav.cav_id: agent.receive for agent in agents}
    handlers[EDGE_ID] = edge.ingest

    true_labels = {obj.location_id: obj.true_label for obj in scene.locations}
    records: list[VerdictRecord] = []
    operation_counts: list[int] = []
    rounds_issued = 0
    last_round = 0
    cycles_executed = 0

    for cycle in range(config.cycles):
        now = cycle * CYCLE_TICK_MS
        cycles_executed = cycle + 1
        for envelope in bus.advance(now):
            handler = handlers.get(envelope.subscriber)
            if handler:
                handler(envelope)
        for agent in agents:
            agent.sense_cycle(scene, config.sensor, cycle, vote_matching)
        for agent in agents:
            if now > 0 and now - agent.last_publish >= tau:
                bus.publish(publish_topic, agent.encode_pending(), agent.cav.cav_id, now)
                agent.pending.clear()
                agent.last_publish = now
        if now > 0 and now - last_round >= tau and edge.received_any:
            round_index = rounds_issued
            if mode == MODE_PACE:
                entries = edge.pace_round(now)
                for entry in entries:
                    truth = true_labels[entry.location_id]
                    records.append(
                        VerdictRecord(
                            config.run_id, round_index, now, entry.location_id,
                            NO_CAV, entry.label, truth, entry.label == truth,
                            mode, config.seed,
                        )
                    )
            elif mode == MODE_VOTE:
                verdicts = edge.verdict_round(now)
                for verdict in verdicts:
                    truth = true_labels[verdict.location_id]
                    records.append(
                        VerdictRecord(
                            config.run_id, round_index, now, verdict.location_id,
                            NO_CAV, verdict.label, truth, verdict.label == truth,
                            mode, config.seed,
                        )
                    )
            else:
                for cav_id, loc_id, label in edge.round(now):
                    truth = true_labels[loc_id]
                    records.append(
                        VerdictRecord(
                            config.run_id, round_index, now, loc_id,
                            cav_id, label, truth, label == truth,
                            mode, config.seed,
                        )
                    )
            operation_counts.append(edge.counter.reset())
            last_round = now
            rounds_issued += 1
            if config.verdicts_target and rounds_issued >= config.verdicts_target:
                break

    correct = sum(record.correct for record in records)
    accuracy_defined = bool(records)
    accuracy = correct / len(records) if records else 0.0

    if mode in (MODE_BASELINE_PACE, MODE_BASELINE_VOTE):
        per_cav: dict[str, float] = {}
        for agent in agents:
            mine = [r for r in records if r.cav == agent.cav.cav_id]
            per_cav[agent.cav.cav_id] = (
                sum(r.correct for r in mine) / len(mine) if mine else 0.0
            )
    else:
        counts = getattr(edge, "report_counts", {})
        per_cav = {
            agent.cav.cav_id: (
                counts[agent.cav.cav_id][0] / counts[agent.cav.cav_id][1]
                if counts.get(agent.cav.cav_id, [0, 0])[1]
                else 0.0
            )
            for agent in agents
        }

    trajectories = dict(getattr(edge, "trajectories", {}))

    by_topic = Counter(env.topic for env in bus.log)
    message_stats = {
        **bus.stats.as_dict(),
        "in_flight_at_end": bus.in_flight(),
        "by_topic": {topic: by_topic[topic] for topic in sorted(by_topic)},
        "rejected_reports": getattr(edge, "rejected_reports", 0),
        "unmatched_reports": sum(a.unmatched_reports for a in agents),
        "feedback_received": sum(a.feedback_received for a in agents),
    }

    return RunMetrics(
        run_id=config.run_id,
        mode=mode,
        seed=config.seed,
        records=records,
        accuracy=accuracy,
        accuracy_defined=accuracy_defined,
        per_cav_accuracy=per_cav,
        reputation_trajectories=trajectories,
        message_stats=message_stats,
        operation_counts=operation_counts,
        rounds_issued=rounds_issued,
        cycles_executed=cycles_executed,
        delivery_digest=bus.schedule_digest(),
    )


_BASELINE_OF = {MODE_PACE: MODE_BASELINE_PACE, MODE_VOTE: MODE_BASELINE_VOTE}


def run_baseline(config: ScenarioConfig) -> RunMetrics:
    """Run the single-vehicle benchmark twin of the configured mode."""
    mode = config.mode
    if mode in _BASELINE_OF:
        mode = _BASELINE_OF[mode]
    return run(replace(config, mode=mode))


def _set_cav_count(config: ScenarioConfig, value) -> ScenarioConfig:
    n = int(value)
    if not 1 <= n <= len(config.scene.cavs):
        raise ConfigurationError(
            f"cav_count must be in [1, {len(config.scene.cavs)}], got {n}"
        )
    scene = replace(config.scene, cavs=config.scene.cavs[:n])
    return replace(config, scene=scene)


def _bus_setter(field_name: str):
    def apply(config: ScenarioConfig, value) -> ScenarioConfig:
        return replace(config, bus=replace(config.bus, **{field_name: float(value)}))

    return apply


def _sensor_setter(field_name: str):
    def apply(config: ScenarioConfig, value) -> ScenarioConfig:
        return replace(config, sensor=replace(config.sensor, **{field_name: float(value)}))

    return apply


SWEEP_AXES: dict[str, Callable[[ScenarioConfig, object], ScenarioConfig]] = {
    "cav_count": _set_cav_count,
    "drop_probability": _bus_setter("drop_probability"),
    "latency_mean_ms": _bus_setter("latency_mean_ms"),
    "latency_jitter_ms": _bus_setter("latency_jitter_ms"),
    "label_confusion_rate": _sensor_setter("label_confusion_rate"),
    "miss_rate": _sensor_setter("miss_rate"),
    "bbox_jitter_px": _sensor_setter("bbox_jitter_px"),
    "confidence_std": _sensor_setter("confidence_std"),
    "delta": lambda c, v: replace(c, pace=replace(c.pace, delta=float(v))),
    "p_d": lambda c, v: replace(c, vote=replace(c.vote, p_d=float(v))),
    "eta": lambda c, v: replace(c, vote=replace(c.vote, eta=float(v))),
    "visibility_mode": lambda c, v: replace(c, vote=replace(c.vote, visibility_mode=str(v))),
    "angular_convention": lambda c, v: replace(c, angular_convention=str(v)),
    "mode": lambda c, v: replace(c, mode=str(v)),
}


def sweep(base_config: ScenarioConfig, axis: str, values: Sequence) -> list[RunMetrics]:
    """One run per value, with the seed advanced by the value's index."""
    applier = SWEEP_AXES.get(axis)
    if applier is None:
        raise ConfigurationError(
            f"unknown sweep axis {axis!r}; valid axes: {', '.join(sorted(SWEEP_AXES))}"
        )
    results = []
    for index, value in enumerate(values):
        cfg = applier(base_config, value)
        cfg = replace(cfg, seed=base_config.seed + index)
        results.append(run(cfg))
    return results


def _probe_world(locations_count: int):
    labels = [f"l{i}" for i in range(6)]
    locations = []
    for i in range(locations_count):
        angle = 2 * math.pi * i / locations_count
        locations.append(
            TrueObject(
                f"p{i:02d}",
                labels[i % len(labels)],
                1.0,
                (30 + 20 * math.cos(angle), 30 + 20 * math.sin(angle)),
            )
        )
    return labels, locations


def complexity_probe(
    cav_counts: Sequence[int],
    object_counts: Sequence[int],
    locations_count: int = 8,
    seed: int = 0,
) -> list[dict]:
    """Empirical operation counts for one fusion round and one consensus
    round at each (vehicle count, detections-per-vehicle) grid point.

    The known-location set stays fixed so the counts isolate scaling in
    the product of the two grid axes.
    """
    labels, locations = _probe_world(locations_count)
    location_ids = [obj.location_id for obj in locations]
    vote_params = VoteParams(d_max=200.0)
    rows = []
    for v_count in cav_counts:
        for obj_count in object_counts:
            rng = substream(seed, PROBE_DOMAIN, v_count, obj_count)
            batches: dict[str, list[LocalizedDetection]] = {}
            reports: dict[str, list[VoteReport]] = {}
            poses: dict[str, Pose] = {}
            for c in range(v_count):
                cav_id = f"c{c:02d}"
                poses[cav_id] = Pose(
                    30 + 28 * math.cos(2 * math.pi * c / max(1, v_count)),
                    30 + 28 * math.sin(2 * math.pi * c / max(1, v_count)),
                    rng.uniform(0, 360),
                )
                dets = []
                votes = []
                for _ in range(obj_count):
                    anchor = locations[rng.randrange(len(locations))]
                    pos = (
                        anchor.position[0] + rng.uniform(-1.0, 1.0),
                        anchor.position[1] + rng.uniform(-1.0, 1.0),
                    )
                    label = labels[rng.randrange(len(labels))]
                    conf = rng.uniform(0.1, 1.0)
                    dets.append(LocalizedDetection(label, conf, pos, cav_id))
                    votes.append(VoteReport(anchor.location_id, label, conf, cav_id))
                batches[cav_id] = dets
                reports[cav_id] = votes

            pace_counter = OpCounter()
            unified = collect(batches, pace_counter)
            fuse_all(unified, locations, delta=2.0, counter=pace_counter)

            vote_counter = OpCounter()
            tally = VoteTally(location_ids)
            for cav_id in sorted(reports):
                for report in reports[cav_id]:
                    k = visibility(
                        next(
                            obj.position
                            for obj in locations
                            if obj.location_id == report.location_id
                        ),
                        poses[cav_id],
                        vote_params,
                    )
                    ingest_vote(tally, report, 0.5, k)
                    vote_counter.add()
            verdict_round(tally, location_ids, counter=vote_counter)

            rows.append(
                {
                    "cavs": v_count,
                    "objects_per_cav": obj_count,
                    "pace_ops": pace_counter.count,
                    "vote_ops": vote_counter.count,
                }
            )
    return rows
