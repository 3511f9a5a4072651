import dataclasses

import pytest

from coopsim.errors import ConfigurationError
from coopsim.message_bus import BusConfig
from coopsim.pace_edge import PaceParams
from coopsim.projection import CENTER_RELATIVE
from coopsim.scenario import load_scenario, preset_path
from coopsim.scene_model import CameraModel, Cav, Pose, TrueObject, WorldScene
from coopsim.sim_engine import (
    CYCLE_TICK_MS,
    MODE_BASELINE_PACE,
    MODE_PACE,
    MODE_VOTE,
    ScenarioConfig,
    complexity_probe,
    nearest_location,
    run,
    run_baseline,
    sweep,
)
from coopsim.synthetic_sensor import SensorNoise
from coopsim.vote_edge import VoteParams


CAM = CameraModel(fov=62.2, image_width=640, d_max=60)


def solo_config(**kwargs):
    scene = WorldScene(
        60, 40,
        (TrueObject("p1", "A", 1.5, (30, 20)),),
        (Cav("solo", Pose(10, 20, 0), CAM),),
    )
    noise = SensorNoise(
        label_confusion_rate=0.35,
        confusion_table={"A": (("B", 1.0),)},
        size_catalog={"A": 1.5, "B": 1.5},
    )
    defaults = dict(
        scene=scene,
        sensor=noise,
        bus=BusConfig(latency_mean_ms=5),
        pace=PaceParams(delta=3.0),
        vote=VoteParams(d_max=60),
        cycles=1000,
        seed=7,
        mode=MODE_BASELINE_PACE,
        name="solo",
    )
    defaults.update(kwargs)
    return ScenarioConfig(**defaults)


@pytest.fixture(scope="module")
def parking():
    return load_scenario(preset_path("parking"))


@pytest.fixture(scope="module")
def intersection():
    return load_scenario(preset_path("intersection"))


def test_noiseless_parking_pace_accuracy_is_one(parking):
    metrics = run(parking)
    assert metrics.accuracy == 1.0
    assert metrics.rounds_issued == 200
    assert len(metrics.records) == 200 * 8
    assert metrics.accuracy_defined


def test_total_loss_yields_zero_verdicts(parking):
    config = dataclasses.replace(
        parking, bus=dataclasses.replace(parking.bus, drop_probability=1.0)
    )
    metrics = run(config)
    assert metrics.rounds_issued == 0
    assert metrics.records == []
    assert not metrics.accuracy_defined
    assert metrics.accuracy == 0.0


def test_same_seed_reproduces_metrics_exactly(parking):
    config = dataclasses.replace(parking, verdicts_target=25)
    a = run(config)
    b = run(config)
    assert a == b
    assert a.delivery_digest == b.delivery_digest


def test_verdict_cadence_exact_with_zero_jitter(intersection):
    config = dataclasses.replace(intersection, cycles=300)
    metrics = run(config)
    times = sorted({r.simulated_time_ms for r in metrics.records})
    gaps = [b - a for a, b in zip(times, times[1:])]
    assert gaps and all(gap == config.vote.tau_ms for gap in gaps)


def test_message_conservation_at_end(intersection):
    config = dataclasses.replace(
        intersection,
        cycles=400,
        bus=dataclasses.replace(intersection.bus, drop_probability=0.3, latency_jitter_ms=10),
    )
    stats = run(config).message_stats
    assert (
        stats["delivered"] + stats["dropped"] + stats["in_flight_at_end"]
        == stats["published"]
    )
    assert stats["dropped"] > 0


def test_baseline_binomial_single_object():
    # one visible object, confusion 0.35, 1000 cycles: empirical accuracy
    # sits within two binomial standard deviations of 0.65
    metrics = run(solo_config())
    assert metrics.rounds_issued == 249
    assert abs(metrics.accuracy - 0.65) <= 0.04


def test_baseline_counts_unseen_locations_as_wrong():
    # vehicle sees 3 of 8 locations: accuracy can never beat 3/8
    locations = tuple(
        TrueObject(f"p{i}", "A", 1.5, (20 + 5 * i, 20)) for i in range(3)
    ) + tuple(
        TrueObject(f"q{i}", "A", 1.5, (1.0, 34.0 + i)) for i in range(5)
    )
    scene = WorldScene(60, 40, locations, (Cav("solo", Pose(2, 20, 0), CAM),))
    config = solo_config(scene=scene, sensor=SensorNoise(), cycles=400)
    metrics = run(config)
    assert metrics.accuracy <= 3 / 8
    assert metrics.accuracy > 0


def test_baseline_all_seeing_cav_is_perfect():
    config = solo_config(sensor=SensorNoise(), cycles=400)
    metrics = run(config)
    assert metrics.accuracy == 1.0


def test_run_baseline_maps_collaborative_modes(parking):
    metrics = run_baseline(dataclasses.replace(parking, verdicts_target=5))
    assert metrics.mode == MODE_BASELINE_PACE
    assert set(metrics.per_cav_accuracy) == {"nw", "ne", "sw", "se"}


def test_parking_baseline_per_cav_coverage(parking):
    metrics = run_baseline(dataclasses.replace(parking, verdicts_target=40))
    assert all(v == 0.5 for v in metrics.per_cav_accuracy.values())
    assert metrics.best_cav_accuracy() == 0.5


def test_vote_run_tracks_reputations(intersection):
    config = dataclasses.replace(intersection, cycles=300)
    metrics = run(config)
    assert set(metrics.reputation_trajectories) == {"north", "south", "east", "west"}
    for trajectory in metrics.reputation_trajectories.values():
        assert trajectory[0] == 0.5
        assert len(trajectory) == metrics.rounds_issued + 1
        assert all(0.30 <= v <= 1.00 for v in trajectory)


def test_vote_and_pace_agree_on_both_conventions(parking):
    for convention in (parking.angular_convention, CENTER_RELATIVE):
        config = dataclasses.replace(
            parking, angular_convention=convention, verdicts_target=10
        )
        assert run(config).accuracy == 1.0


def test_collaborative_dominance_over_seeds(parking, intersection):
    pace_cfg = dataclasses.replace(parking, verdicts_target=20)
    vote_cfg = dataclasses.replace(intersection, cycles=250)
    pace_mean = base_best = 0.0
    vote_mean = base_mean = 0.0
    n = 20
    for i in range(n):
        p = dataclasses.replace(pace_cfg, seed=pace_cfg.seed + i)
        v = dataclasses.replace(vote_cfg, seed=vote_cfg.seed + i)
        pace_mean += run(p).accuracy / n
        base_best += run_baseline(p).best_cav_accuracy() / n
        vote_mean += run(v).accuracy / n
        base_mean += run_baseline(v).mean_cav_accuracy() / n
    assert pace_mean >= base_best
    assert vote_mean >= base_mean


def test_stop_at_verdict_target(parking):
    config = dataclasses.replace(parking, verdicts_target=7)
    metrics = run(config)
    assert metrics.rounds_issued == 7
    assert metrics.cycles_executed < parking.cycles


def test_invalid_scene_fails_before_any_cycle():
    with pytest.raises(ConfigurationError):
        solo_config(cycles=0)
    with pytest.raises(ConfigurationError):
        solo_config(mode="warp")
    with pytest.raises(ConfigurationError):
        solo_config(verdicts_target=-3)


def test_nearest_location_prefers_close_then_small_id():
    locations = (
        TrueObject("b", "x", 1, (0.0, 0.0)),
        TrueObject("a", "x", 1, (2.0, 0.0)),
    )
    assert nearest_location((0.4, 0.0), locations, 1.5) == "b"
    assert nearest_location((1.0, 0.0), locations, 1.5) == "a"  # tie -> smaller id
    assert nearest_location((10.0, 0.0), locations, 1.5) is None


def test_sweep_runs_one_per_value(parking):
    config = dataclasses.replace(parking, verdicts_target=5)
    results = sweep(config, "cav_count", [2, 4])
    assert len(results) == 2
    assert [m.seed for m in results] == [config.seed, config.seed + 1]
    assert results[0].accuracy == 0.5  # first two cavs cover one row
    assert results[1].accuracy == 1.0


def test_sweep_drop_probability_axis(parking):
    config = dataclasses.replace(parking, verdicts_target=5)
    results = sweep(config, "drop_probability", [0.0, 1.0])
    assert results[0].rounds_issued == 5
    assert results[1].rounds_issued == 0


def test_sweep_visibility_mode_pairs(intersection):
    config = dataclasses.replace(intersection, cycles=150)
    results = sweep(config, "visibility_mode", ["paper-literal", "corrected"])
    assert len(results) == 2
    assert all(m.accuracy_defined for m in results)


def test_sweep_unknown_axis_lists_valid_ones(parking):
    with pytest.raises(ConfigurationError) as excinfo:
        sweep(parking, "warp_factor", [1])
    assert "cav_count" in str(excinfo.value)
    assert "drop_probability" in str(excinfo.value)


def test_complexity_probe_shape_and_zero_cavs():
    rows = complexity_probe([0, 2, 4], [4, 8], locations_count=8, seed=1)
    assert len(rows) == 6
    zero_rows = [r for r in rows if r["cavs"] == 0]
    assert len({r["pace_ops"] for r in zero_rows}) == 1  # constant overhead
    assert all(r["pace_ops"] == 8 for r in zero_rows)
    two, four = (
        next(r for r in rows if r["cavs"] == c and r["objects_per_cav"] == 8)
        for c in (2, 4)
    )
    assert 1.8 <= four["pace_ops"] / two["pace_ops"] <= 2.2
    assert 1.8 <= four["vote_ops"] / two["vote_ops"] <= 2.2


def test_run_ids_distinguish_modes(parking):
    config = dataclasses.replace(parking, verdicts_target=3)
    assert run(config).run_id == "parking-pace-s42"
    assert run_baseline(config).run_id == "parking-baseline-pace-s42"


def test_feedback_loop_reaches_agents(parking):
    config = dataclasses.replace(parking, verdicts_target=5)
    metrics = run(config)
    # each fusion round fans out to the four vehicles; the final round's
    # envelopes are still in flight when the run stops at its target
    assert metrics.message_stats["by_topic"]["global_detections"] == 5 * 4
    assert metrics.message_stats["feedback_received"] == 4 * 4
    assert metrics.message_stats["in_flight_at_end"] == 4
