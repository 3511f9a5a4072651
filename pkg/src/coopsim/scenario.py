"""Scenario documents: schema validation, overrides, canonical form.

A scenario is a YAML document with sections scene / sensor / bus / pace /
vote / run. Validation is strict (unknown keys are rejected) and error
messages carry the field path plus the source line when available.
"""

import re
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .errors import ConfigurationError, SchemaError
from .message_bus import BusConfig
from .pace_edge import PaceParams
from .projection import CONVENTIONS, PAPER_LITERAL
from .scene_model import CameraModel, Cav, Pose, TrueObject, WorldScene
from .sim_engine import MODES, ScenarioConfig
from .synthetic_sensor import SensorNoise
from .vote_edge import VISIBILITY_MODES, VoteParams

NAME_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")

_SECTIONS = ("scene", "sensor", "bus", "pace", "vote", "run")

SENSOR_DEFAULTS = {
    "label_confusion_rate": 0.0,
    "confusion_table": {},
    "confidence_mean_correct": 0.85,
    "confidence_mean_wrong": 0.55,
    "confidence_std": 0.0,
    "bbox_jitter_px": 0.0,
    "miss_rate": 0.0,
    "size_catalog": {},
    "angular_convention": PAPER_LITERAL,
}
BUS_DEFAULTS = {
    "latency_mean_ms": 0.0,
    "latency_jitter_ms": 0.0,
    "drop_probability": 0.0,
    "seed": None,
}
PACE_DEFAULTS = {"delta": 3.0, "tau_ms": 120, "exclusive_nearest": False}
VOTE_DEFAULTS = {
    "p_d": 0.7,
    "d_max": 60.0,
    "tau_ms": 120,
    "eta": 0.05,
    "visibility_mode": "paper-literal",
    "cumulative_tally": False,
}


def _collect_marks(node, path: str, marks: dict) -> None:
    marks[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = str(key_node.value)
            _collect_marks(value_node, f"{path}.{key}" if path else key, marks)
    elif isinstance(node, yaml.SequenceNode):
        for index, item in enumerate(node.value):
            _collect_marks(item, f"{path}[{index}]", marks)


class _Checker:
    def __init__(self, marks: dict):
        self.marks = marks
        self.errors: list[str] = []

    def error(self, path: str, message: str) -> None:
        line = self.marks.get(path)
        where = f"{path} (line {line})" if line else path
        self.errors.append(f"{where}: {message}")

    def mapping(self, value, path, allowed, required=()) -> Optional[dict]:
        if not isinstance(value, dict):
            self.error(path, "must be a mapping")
            return None
        for key in value:
            if key not in allowed:
                self.error(f"{path}.{key}" if path else str(key), "unknown key")
        for key in required:
            if key not in value:
                self.error(path, f"missing required key {key!r}")
        return value

    def number(self, value, path, lo=None, hi=None, lo_open=False, hi_open=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.error(path, "must be a number")
            return None
        if lo is not None and (value <= lo if lo_open else value < lo):
            self.error(path, f"must be {'>' if lo_open else '>='} {lo}")
            return None
        if hi is not None and (value >= hi if hi_open else value > hi):
            self.error(path, f"must be {'<' if hi_open else '<='} {hi}")
            return None
        return value

    def integer(self, value, path, lo=None):
        if isinstance(value, bool) or not isinstance(value, int):
            self.error(path, "must be an integer")
            return None
        if lo is not None and value < lo:
            self.error(path, f"must be >= {lo}")
            return None
        return value

    def boolean(self, value, path):
        if not isinstance(value, bool):
            self.error(path, "must be true or false")
            return None
        return value

    def name(self, value, path):
        if not isinstance(value, str) or not NAME_RE.match(value):
            self.error(path, "must be a name of letters, digits, '_', '-', '.'")
            return None
        return value

    def choice(self, value, path, options):
        if value not in options:
            self.error(path, f"must be one of {', '.join(options)}")
            return None
        return value

    def point(self, value, path):
        if (
            not isinstance(value, (list, tuple))
            or len(value) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
        ):
            self.error(path, "must be a [x, y] pair of numbers")
            return None
        return (float(value[0]), float(value[1]))


def _validate_scene(chk: _Checker, data: dict) -> Optional[WorldScene]:
    scene = chk.mapping(
        data.get("scene"), "scene", {"grid", "locations", "cavs", "obstacles"},
        required=("grid", "locations", "cavs"),
    )
    if scene is None:
        return None
    ok = True

    grid = chk.mapping(scene.get("grid"), "scene.grid", {"width", "height"}, ("width", "height"))
    width = height = None
    if grid is not None:
        width = chk.number(grid.get("width"), "scene.grid.width", lo=0, lo_open=True)
        height = chk.number(grid.get("height"), "scene.grid.height", lo=0, lo_open=True)
    ok = ok and width is not None and height is not None

    locations = []
    raw_locations = scene.get("locations")
    if not isinstance(raw_locations, list) or not raw_locations:
        chk.error("scene.locations", "must be a non-empty list")
        ok = False
    else:
        for i, item in enumerate(raw_locations):
            path = f"scene.locations[{i}]"
            entry = chk.mapping(item, path, {"id", "label", "size", "position"},
                                ("id", "label", "size", "position"))
            if entry is None:
                ok = False
                continue
            loc_id = chk.name(entry.get("id"), f"{path}.id")
            label = chk.name(entry.get("label"), f"{path}.label")
            size = chk.number(entry.get("size"), f"{path}.size", lo=0, lo_open=True)
            position = chk.point(entry.get("position"), f"{path}.position")
            if None in (loc_id, label, size, position):
                ok = False
                continue
            locations.append(TrueObject(loc_id, label, float(size), position))

    cavs = []
    raw_cavs = scene.get("cavs")
    if not isinstance(raw_cavs, list) or not raw_cavs:
        chk.error("scene.cavs", "must be a non-empty list")
        ok = False
    else:
        for i, item in enumerate(raw_cavs):
            path = f"scene.cavs[{i}]"
            entry = chk.mapping(item, path, {"id", "pose", "camera"}, ("id", "pose", "camera"))
            if entry is None:
                ok = False
                continue
            cav_id = chk.name(entry.get("id"), f"{path}.id")
            pose_map = chk.mapping(entry.get("pose"), f"{path}.pose", {"x", "y", "theta"},
                                   ("x", "y", "theta"))
            cam_map = chk.mapping(entry.get("camera"), f"{path}.camera",
                                  {"fov", "image_width", "d_max"},
                                  ("fov", "image_width", "d_max"))
            if cav_id is None or pose_map is None or cam_map is None:
                ok = False
                continue
            x = chk.number(pose_map.get("x"), f"{path}.pose.x")
            y = chk.number(pose_map.get("y"), f"{path}.pose.y")
            theta = chk.number(pose_map.get("theta"), f"{path}.pose.theta")
            fov = chk.number(cam_map.get("fov"), f"{path}.camera.fov", lo=0, hi=180,
                             lo_open=True, hi_open=True)
            image_width = chk.integer(cam_map.get("image_width"), f"{path}.camera.image_width", lo=1)
            d_max = chk.number(cam_map.get("d_max"), f"{path}.camera.d_max", lo=0, lo_open=True)
            if None in (x, y, theta, fov, image_width, d_max):
                ok = False
                continue
            cavs.append(
                Cav(cav_id, Pose(float(x), float(y), float(theta)),
                    CameraModel(float(fov), image_width, float(d_max)))
            )

    obstacles = []
    for i, item in enumerate(scene.get("obstacles") or []):
        path = f"scene.obstacles[{i}]"
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            chk.error(path, "must be a [[x, y], [x, y]] segment")
            ok = False
            continue
        a = chk.point(item[0], f"{path}[0]")
        b = chk.point(item[1], f"{path}[1]")
        if a is None or b is None:
            ok = False
            continue
        obstacles.append((a, b))

    if not ok:
        return None
    try:
        return WorldScene(float(width), float(height), tuple(locations), tuple(cavs),
                          tuple(obstacles))
    except ConfigurationError as exc:
        chk.error("scene", str(exc))
        return None


def _validate_sensor(chk: _Checker, data: dict) -> Optional[SensorNoise]:
    merged = dict(SENSOR_DEFAULTS)
    section = data.get("sensor", {})
    if chk.mapping(section, "sensor", set(SENSOR_DEFAULTS)) is None:
        return None
    merged.update(section)

    chk.number(merged["label_confusion_rate"], "sensor.label_confusion_rate", lo=0, hi=1, hi_open=True)
    chk.number(merged["miss_rate"], "sensor.miss_rate", lo=0, hi=1, hi_open=True)
    chk.number(merged["confidence_mean_correct"], "sensor.confidence_mean_correct", lo=0, hi=1)
    chk.number(merged["confidence_mean_wrong"], "sensor.confidence_mean_wrong", lo=0, hi=1)
    chk.number(merged["confidence_std"], "sensor.confidence_std", lo=0)
    chk.number(merged["bbox_jitter_px"], "sensor.bbox_jitter_px", lo=0)
    chk.choice(merged["angular_convention"], "sensor.angular_convention", CONVENTIONS)

    table = merged["confusion_table"]
    if not isinstance(table, dict):
        chk.error("sensor.confusion_table", "must be a mapping")
    else:
        parsed_table = {}
        for label, choices in table.items():
            path = f"sensor.confusion_table.{label}"
            chk.name(label, path)
            if not isinstance(choices, list) or not choices:
                chk.error(path, "must be a non-empty list of [label, weight] pairs")
                continue
            entries = []
            for j, pair in enumerate(choices):
                if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                    chk.error(f"{path}[{j}]", "must be a [label, weight] pair")
                    continue
                wrong = chk.name(pair[0], f"{path}[{j}]")
                weight = chk.number(pair[1], f"{path}[{j}]", lo=0, lo_open=True)
                if wrong is not None and weight is not None:
                    entries.append((wrong, float(weight)))
            parsed_table[label] = tuple(entries)
        merged["confusion_table"] = parsed_table

    catalog = merged["size_catalog"]
    if not isinstance(catalog, dict):
        chk.error("sensor.size_catalog", "must be a mapping")
    else:
        parsed_catalog = {}
        for label, size in catalog.items():
            path = f"sensor.size_catalog.{label}"
            chk.name(label, path)
            value = chk.number(size, path, lo=0, lo_open=True)
            if value is not None:
                parsed_catalog[label] = float(value)
        merged["size_catalog"] = parsed_catalog

    if chk.errors:
        return None
    convention = merged.pop("angular_convention")
    noise = SensorNoise(**merged)
    return noise, convention


def _validate_bus(chk: _Checker, data: dict):
    merged = dict(BUS_DEFAULTS)
    section = data.get("bus", {})
    if chk.mapping(section, "bus", set(BUS_DEFAULTS)) is None:
        return None
    merged.update(section)
    chk.number(merged["latency_mean_ms"], "bus.latency_mean_ms", lo=0)
    chk.number(merged["latency_jitter_ms"], "bus.latency_jitter_ms", lo=0)
    chk.number(merged["drop_probability"], "bus.drop_probability", lo=0, hi=1)
    seed = merged["seed"]
    if seed is not None:
        chk.integer(seed, "bus.seed")
    if chk.errors:
        return None
    config = BusConfig(
        latency_mean_ms=float(merged["latency_mean_ms"]),
        latency_jitter_ms=float(merged["latency_jitter_ms"]),
        drop_probability=float(merged["drop_probability"]),
        seed=seed if seed is not None else 0,
    )
    return config, seed is None


def _validate_pace(chk: _Checker, data: dict) -> Optional[PaceParams]:
    merged = dict(PACE_DEFAULTS)
    section = data.get("pace", {})
    if chk.mapping(section, "pace", set(PACE_DEFAULTS)) is None:
        return None
    merged.update(section)
    chk.number(merged["delta"], "pace.delta", lo=0, lo_open=True)
    chk.integer(merged["tau_ms"], "pace.tau_ms", lo=1)
    chk.boolean(merged["exclusive_nearest"], "pace.exclusive_nearest")
    if chk.errors:
        return None
    return PaceParams(
        delta=float(merged["delta"]),
        tau_ms=merged["tau_ms"],
        exclusive_nearest=merged["exclusive_nearest"],
    )


def _validate_vote(chk: _Checker, data: dict) -> Optional[VoteParams]:
    merged = dict(VOTE_DEFAULTS)
    section = data.get("vote", {})
    if chk.mapping(section, "vote", set(VOTE_DEFAULTS)) is None:
        return None
    merged.update(section)
    chk.number(merged["p_d"], "vote.p_d", lo=0, hi=1)
    chk.number(merged["d_max"], "vote.d_max", lo=0, lo_open=True)
    chk.integer(merged["tau_ms"], "vote.tau_ms", lo=1)
    chk.number(merged["eta"], "vote.eta", lo=0, lo_open=True)
    chk.choice(merged["visibility_mode"], "vote.visibility_mode", VISIBILITY_MODES)
    chk.boolean(merged["cumulative_tally"], "vote.cumulative_tally")
    if chk.errors:
        return None
    return VoteParams(
        d_max=float(merged["d_max"]),
        p_d=float(merged["p_d"]),
        tau_ms=merged["tau_ms"],
        eta=float(merged["eta"]),
        visibility_mode=merged["visibility_mode"],
        cumulative_tally=merged["cumulative_tally"],
    )


def _validate_run(chk: _Checker, data: dict):
    section = chk.mapping(
        data.get("run"), "run", {"mode", "cycles", "verdicts_target", "seed"},
        required=("mode", "cycles", "seed"),
    )
    if section is None:
        return None
    mode = chk.choice(section.get("mode"), "run.mode", MODES)
    cycles = chk.integer(section.get("cycles"), "run.cycles", lo=1)
    seed = chk.integer(section.get("seed"), "run.seed")
    target = section.get("verdicts_target")
    if target is not None:
        target = chk.integer(target, "run.verdicts_target", lo=1)
    if chk.errors:
        return None
    return mode, cycles, seed, target


def validate_data(data, marks: Optional[dict] = None, name: str = "scenario") -> ScenarioConfig:
    """Validate plain scenario data and build the run configuration."""
    chk = _Checker(marks or {})
    top = chk.mapping(data, "", set(_SECTIONS), required=("scene", "run"))
    if top is None:
        raise SchemaError(chk.errors)

    scene = _validate_scene(chk, data)
    sensor_result = _validate_sensor(chk, data)
    bus_result = _validate_bus(chk, data)
    pace = _validate_pace(chk, data)
    vote = _validate_vote(chk, data)
    run_result = _validate_run(chk, data)

    if chk.errors or None in (scene, sensor_result, bus_result, pace, vote, run_result):
        raise SchemaError(chk.errors or ["scenario: invalid document"])

    sensor, convention = sensor_result
    bus, seed_from_master = bus_result
    mode, cycles, seed, target = run_result
    try:
        return ScenarioConfig(
            scene=scene,
            sensor=sensor,
            bus=bus,
            pace=pace,
            vote=vote,
            cycles=cycles,
            seed=seed,
            mode=mode,
            verdicts_target=target,
            angular_convention=convention,
            name=name,
            bus_seed_from_master=seed_from_master,
        )
    except ConfigurationError as exc:
        raise SchemaError([f"run: {exc}"]) from exc


def parse_scenario(
    text: str, name: str = "scenario", overrides: Sequence[str] = ()
) -> ScenarioConfig:
    """Parse, apply dotted-path overrides, validate."""
    try:
        data = yaml.safe_load(text)
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise SchemaError([f"document: not valid YAML ({exc})"]) from exc
    marks: dict = {}
    if node is not None:
        _collect_marks(node, "", marks)
    if data is None:
        data = {}
    for override in overrides:
        data = apply_override(data, override)
    return validate_data(data, marks, name)


def load_scenario(path, overrides: Sequence[str] = ()) -> ScenarioConfig:
    path = Path(path)
    return parse_scenario(path.read_text(), name=path.stem, overrides=overrides)


def apply_override(data: dict, override: str) -> dict:
    """Apply one "section.key=value" override; value is parsed as YAML.

    Integer path segments index into lists, e.g. scene.cavs.0.pose.x=5.
    """
    if "=" not in override:
        raise SchemaError([f"override {override!r}: expected path=value"])
    raw_path, _, raw_value = override.partition("=")
    segments = raw_path.strip().split(".")
    if not all(segments):
        raise SchemaError([f"override {override!r}: empty path segment"])
    try:
        value = yaml.safe_load(raw_value)
    except yaml.YAMLError as exc:
        raise SchemaError([f"override {override!r}: bad value ({exc})"]) from exc
    target = data
    for i, segment in enumerate(segments[:-1]):
        if isinstance(target, list):
            try:
                target = target[int(segment)]
            except (ValueError, IndexError) as exc:
                raise SchemaError(
                    [f"override {override!r}: bad list index {segment!r}"]
                ) from exc
        elif isinstance(target, dict):
            target = target.setdefault(segment, {})
            if not isinstance(target, (dict, list)):
                raise SchemaError(
                    [f"override {override!r}: {'.'.join(segments[: i + 1])} is not a section"]
                )
        else:
            raise SchemaError([f"override {override!r}: cannot descend into {segment!r}"])
    last = segments[-1]
    if isinstance(target, list):
        try:
            target[int(last)] = value
        except (ValueError, IndexError) as exc:
            raise SchemaError([f"override {override!r}: bad list index {last!r}"]) from exc
    else:
        target[last] = value
    return data


def scenario_to_data(config: ScenarioConfig) -> dict:
    """Canonical plain-data form with every default materialized."""
    scene = config.scene
    data = {
        "scene": {
            "grid": {"width": scene.grid_width, "height": scene.grid_height},
            "locations": [
                {
                    "id": obj.location_id,
                    "label": obj.true_label,
                    "size": obj.physical_size,
                    "position": [obj.position[0], obj.position[1]],
                }
                for obj in scene.locations
            ],
            "cavs": [
                {
                    "id": cav.cav_id,
                    "pose": {"x": cav.pose.x, "y": cav.pose.y, "theta": cav.pose.theta},
                    "camera": {
                        "fov": cav.camera.fov,
                        "image_width": cav.camera.image_width,
                        "d_max": cav.camera.d_max,
                    },
                }
                for cav in scene.cavs
            ],
            "obstacles": [
                [[a[0], a[1]], [b[0], b[1]]] for a, b in scene.obstacles
            ],
        },
        "sensor": {
            "label_confusion_rate": config.sensor.label_confusion_rate,
            "confusion_table": {
                label: [[wrong, weight] for wrong, weight in choices]
                for label, choices in config.sensor.confusion_table.items()
            },
            "confidence_mean_correct": config.sensor.confidence_mean_correct,
            "confidence_mean_wrong": config.sensor.confidence_mean_wrong,
            "confidence_std": config.sensor.confidence_std,
            "bbox_jitter_px": config.sensor.bbox_jitter_px,
            "miss_rate": config.sensor.miss_rate,
            "size_catalog": dict(config.sensor.size_catalog),
            "angular_convention": config.angular_convention,
        },
        "bus": {
            "latency_mean_ms": config.bus.latency_mean_ms,
            "latency_jitter_ms": config.bus.latency_jitter_ms,
            "drop_probability": config.bus.drop_probability,
            "seed": None if config.bus_seed_from_master else config.bus.seed,
        },
        "pace": {
            "delta": config.pace.delta,
            "tau_ms": config.pace.tau_ms,
            "exclusive_nearest": config.pace.exclusive_nearest,
        },
        "vote": {
            "p_d": config.vote.p_d,
            "d_max": config.vote.d_max,
            "tau_ms": config.vote.tau_ms,
            "eta": config.vote.eta,
            "visibility_mode": config.vote.visibility_mode,
            "cumulative_tally": config.vote.cumulative_tally,
        },
        "run": {
            "mode": config.mode,
            "cycles": config.cycles,
            "verdicts_target": config.verdicts_target,
            "seed": config.seed,
        },
    }
    return data


def canonical_dump(config: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_data(config), sort_keys=True)


def preset_path(name: str) -> Path:
    """Path of a bundled scenario; raises for names that are not bundled."""
    candidate = resources.files("coopsim").joinpath("presets", f"{name}.yaml")
    with resources.as_file(candidate) as path:
        if not path.exists():
            raise ConfigurationError(f"no bundled preset named {name!r}")
        return Path(path)


def resolve_scenario_path(spec: str) -> Path:
    """A filesystem path if it exists, otherwise a bundled preset name."""
    path = Path(spec)
    if path.exists():
        return path
    return preset_path(spec)
