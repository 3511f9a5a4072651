"""Simulated topic-based publish/subscribe transport.

One-to-many delivery on a simulated millisecond clock, with seedable
uniform latency and at-most-once loss. Each publish creates one envelope
per current subscriber; dropped envelopes are recorded but never
delivered. The full schedule is logged so two runs can be compared
bitwise.
"""

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigurationError, TimeRegressionError
from .seeding import substream

TOPIC_DETECTIONS = "detections"
TOPIC_GLOBAL_DETECTIONS = "global_detections"
TOPIC_VOTE_DETECTIONS = "vote_detections"
TOPIC_GLOBAL_VERDICTS = "global_verdicts"


@dataclass(frozen=True)
class BusConfig:
    latency_mean_ms: float = 0.0
    latency_jitter_ms: float = 0.0
    drop_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.latency_mean_ms < 0 or self.latency_jitter_ms < 0:
            raise ConfigurationError("latency parameters must be non-negative")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ConfigurationError("drop_probability must be in [0, 1]")


@dataclass(frozen=True)
class Envelope:
    topic: str
    payload: bytes
    publisher: str
    subscriber: str
    publish_time: int
    deliver_time: int
    dropped: bool
    sequence: int


@dataclass(frozen=True)
class Subscription:
    topic: str
    subscriber: str


@dataclass
class BusStats:
    published: int = 0
    delivered: int = 0
    dropped: int = 0

    def as_dict(self) -> dict:
        return {
            "published": self.published,
            "delivered": self.delivered,
            "dropped": self.dropped,
        }


class MessageBus:
    """Single-clock event queue; all calls are serialized by the caller."""

    def __init__(self, config: Optional[BusConfig] = None):
        self.config = config or BusConfig()
        self._rng = substream(self.config.seed)
        self._subscribers: dict[str, list[str]] = {}
        self._queue: list[tuple[int, int, Envelope]] = []
        self._now = 0
        self._sequence = 0
        self.stats = BusStats()
        self.log: list[Envelope] = []

    @property
    def now(self) -> int:
        return self._now

    def subscribe(self, topic: str, subscriber: str) -> Subscription:
        if not topic:
            raise ConfigurationError("topic must be non-empty")
        subs = self._subscribers.setdefault(topic, [])
        if subscriber not in subs:
            subs.append(subscriber)
        return Subscription(topic=topic, subscriber=subscriber)

    def _sample_latency(self) -> int:
        cfg = self.config
        latency = self._rng.uniform(
            cfg.latency_mean_ms - cfg.latency_jitter_ms,
            cfg.latency_mean_ms + cfg.latency_jitter_ms,
        )
        return max(0, round(latency))

    def publish(self, topic: str, payload: bytes, publisher: str, now: int) -> None:
        if not topic:
            raise ConfigurationError("topic must be non-empty")
        for subscriber in self._subscribers.get(topic, []):
            latency = self._sample_latency()
            dropped = self._rng.random() < self.config.drop_probability
            envelope = Envelope(
                topic=topic,
                payload=payload,
                publisher=publisher,
                subscriber=subscriber,
                publish_time=int(now),
                deliver_time=int(now) + latency,
                dropped=dropped,
                sequence=self._sequence,
            )
            self._sequence += 1
            self.stats.published += 1
            self.log.append(envelope)
            if dropped:
                self.stats.dropped += 1
            else:
                heapq.heappush(self._queue, (envelope.deliver_time, envelope.sequence, envelope))

    def advance(self, to_time: int) -> list[Envelope]:
        """Deliver everything due by to_time, in (deliver_time, sequence) order."""
        if to_time < self._now:
            raise TimeRegressionError(f"clock at {self._now}, asked for {to_time}")
        self._now = to_time
        delivered = []
        while self._queue and self._queue[0][0] <= to_time:
            delivered.append(heapq.heappop(self._queue)[2])
        self.stats.delivered += len(delivered)
        return delivered

    def in_flight(self) -> int:
        return len(self._queue)

    def schedule_digest(self) -> str:
        """Hash of the complete publish/delivery schedule, for determinism checks."""
        h = hashlib.sha256()
        for env in self.log:
            h.update(
                f"{env.sequence}|{env.topic}|{env.publisher}|{env.subscriber}|"
                f"{env.publish_time}|{env.deliver_time}|{int(env.dropped)}\n".encode()
            )
        return h.hexdigest()
