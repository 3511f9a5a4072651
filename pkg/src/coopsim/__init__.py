"""coopsim: deterministic simulator for edge-based collaborative object
detection among camera-equipped vehicles.

The package models vehicles that detect objects with a synthetic camera,
project them to world coordinates, and publish them over a simulated
pub/sub bus to an edge server that either fuses multi-view detections
into a global object map or runs reputation-weighted label consensus.
"""

__version__ = "0.1.0"

from .scene_model import (  # noqa: F401
    CameraModel,
    Cav,
    Pose,
    TrueObject,
    WorldScene,
    bearing_and_distance,
    line_of_sight,
)
from .projection import (  # noqa: F401
    BoundingBox,
    LocalizedDetection,
    CENTER_RELATIVE,
    PAPER_LITERAL,
    estimate_bearing,
    estimate_distance,
    localize,
    reference_pose,
    to_global,
)
from .synthetic_sensor import RawDetection, SensorNoise, inverse_project, sense  # noqa: F401
from .message_bus import BusConfig, Envelope, MessageBus  # noqa: F401
from .pace_edge import GlobalMapEntry, PaceEdgeServer, PaceParams, collect, fuse, match  # noqa: F401
from .vote_edge import (  # noqa: F401
    Reputation,
    Verdict,
    VoteEdgeServer,
    VoteParams,
    VoteReport,
    VoteTally,
    ingest_vote,
    score_oracle,
    update_reputation,
    verdict_round,
    visibility,
)
