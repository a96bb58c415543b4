import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fade.config import ConfigError, PipelineConfig
from fade.detector import FallEvent
from fade.evaluation import (
    aggregate,
    benchmark_scenario,
    dump_events,
    evaluate,
    load_events,
    match_events,
    metrics,
)
from fade.pipeline import run_pipeline, timing_overhead
from fade.simulator import Action, ActorScript, NoiseSpec, Scenario, TruthEvent


def _fall(t0, t1, actor=1):
    return TruthEvent(actor, "fall", t0, t1)


def _det(t, tid=1):
    return FallEvent(tid, t, -3.0, -6.0, 0.9)


def test_match_examples():
    truth = [_fall(3.0, 3.4)]
    assert match_events([_det(3.6)], truth) == (1, 0, 0)
    assert match_events([], truth) == (0, 0, 1)
    assert match_events([_det(3.5), _det(3.7)], truth) == (1, 1, 0)
    assert match_events([_det(9.0)], truth) == (0, 1, 1)


def test_adl_truth_events_are_not_targets():
    truth = [TruthEvent(1, "adl", 1.0, 2.0)]
    assert match_events([_det(1.5)], truth) == (0, 1, 0)


def test_each_detection_takes_its_own_fall():
    truth = [_fall(3.0, 3.4, actor=1), _fall(4.0, 4.4, actor=2)]
    assert match_events([_det(3.5), _det(4.5)], truth) == (2, 0, 0)


def test_published_ratios_from_counts():
    rep = metrics(101, 6, 4)
    assert round(rep.precision, 4) == 0.9439
    assert round(rep.recall, 4) == 0.9619
    assert round(rep.f1, 4) == 0.9528


def test_hand_evaluated_metrics():
    rep = metrics(8, 2, 0)
    assert rep.precision == pytest.approx(0.8)
    assert rep.recall == pytest.approx(1.0)
    assert rep.f1 == pytest.approx(2 * 0.8 / 1.8)
    assert round(rep.f1, 4) == 0.8889


def test_empty_metrics_are_absent():
    rep = metrics(0, 0, 0)
    assert rep.precision is None and rep.recall is None and rep.f1 is None
    with pytest.raises(ValueError):
        metrics(-1, 0, 0)


def test_aggregate_breakdown():
    rep = aggregate([(1, (1, 0, 0)), (2, (1, 1, 0)), (2, (0, 0, 1))])
    assert (rep.tp, rep.fp, rep.fn) == (2, 1, 1)
    assert rep.by_users[2].recall == 0.5
    assert set(rep.to_dict()["by_users"]) == {"1", "2"}


times = st.floats(0, 100, allow_nan=False)


@given(st.lists(times, max_size=8), st.lists(st.tuples(times, st.floats(0.1, 1.0)), max_size=5),
       st.floats(-50, 50))
def test_matching_is_shift_invariant(dets, falls, shift):
    truth = [_fall(a, a + d) for a, d in falls]
    moved = [_fall(a + shift, a + d + shift) for a, d in falls]
    base = match_events([_det(t) for t in dets], truth)
    assert match_events([_det(t + shift) for t in dets], moved) == base
    tp, fp, fn = base
    assert tp + fp == len(dets) and tp + fn == len(truth)


def test_events_round_trip():
    evs = [_det(1.5, 2), _det(4.25, 3)]
    assert load_events(io.StringIO(dump_events(evs))) == evs
    with pytest.raises(ValueError):
        load_events(io.StringIO('{"t": 1.0}\n'))


def test_evaluate_reports_timing():
    rep = evaluate([_det(3.5)], [_fall(3.0, 3.4)], frame_ms=[1.0, 2.0, 3.0])
    assert rep.timing["frames"] == 3
    assert rep.timing["mean_ms"] == pytest.approx(2.0)
    assert rep.to_dict()["by_users"]["1"]["tp"] == 1


def test_single_fall_scenario_end_to_end():
    sc = benchmark_scenario(101, falls=1)
    frames, truth = sc.generate()
    res = run_pipeline(frames, PipelineConfig().with_frame_period(sc.t_frame), sc.pose)
    assert len(res.events) == 1
    impact = truth.events[-1].impact_t
    assert abs(res.events[0].t - impact) < 1.0


@pytest.mark.parametrize("kind", ["sit", "squat", "walk"])
def test_adl_scenario_end_to_end(kind):
    sc = benchmark_scenario(202, falls=0, adl=kind)
    frames, _ = sc.generate()
    assert run_pipeline(frames, PipelineConfig(), sc.pose).events == []


def test_empty_scene_takes_dormant_path():
    empty = Scenario(seed=1, duration=3.0, actors=[], noise=NoiseSpec(clutter_rate=0.5))
    busy = Scenario(seed=1, duration=3.0, actors=[ActorScript(1, (0, 3), 1.1, (
        Action(0.0, "walk", {"velocity": [0.5, 0.0], "duration": 3.0}),))],
        noise=NoiseSpec.room())
    r_empty = run_pipeline(empty.generate()[0], pose=empty.pose)
    r_busy = run_pipeline(busy.generate()[0], pose=busy.pose)
    assert all(t.n_tracks == 0 for t in r_empty.timing)
    assert r_empty.frame_ms().mean() < r_busy.frame_ms().mean()


def test_pipeline_is_deterministic():
    sc = benchmark_scenario(5, n_actors=2, falls=1)
    frames, _ = sc.generate()
    a = run_pipeline(frames, pose=sc.pose, record_features=True)
    b = run_pipeline(frames, pose=sc.pose, record_features=True)
    assert a.events == b.events and a.features == b.features


def test_timing_overhead_is_small():
    sc = benchmark_scenario(6, n_actors=1, falls=1)
    frames, _ = sc.generate()
    work = run_pipeline(frames, pose=sc.pose).frame_ms().mean()
    assert timing_overhead() < 0.05 * work


def test_benchmark_scenes_keep_actors_apart():
    sc = benchmark_scenario(17, n_actors=3, falls=1)
    _, truth = sc.generate()
    xy = truth.states[:, :, :2]
    for i in range(3):
        for j in range(i + 1, 3):
            d = ((xy[:, i] - xy[:, j]) ** 2).sum(axis=1) ** 0.5
            assert d.min() >= 1.2


def test_config_keys():
    cfg = PipelineConfig.from_dict({"clustering": {"cell_size": 0.3}, "tracker.n_window": 5,
                                    "imm": {"gamma_matrix": [[0.9, 0.1], [0.2, 0.8]]}})
    assert cfg.clustering.cell_size == 0.3
    assert cfg.tracker.n_window == 5
    assert cfg.imm.transition == ((0.9, 0.1), (0.2, 0.8))
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"tracker": {"bogus": 1}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"nonsense": 1})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"detector": {"window": 0}})
