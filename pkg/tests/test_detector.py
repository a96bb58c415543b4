import numpy as np
import pytest

from fade.detector import (
    DetectorConfig,
    FallDetector,
    StreamDetector,
    detect_stream,
    threshold_decide,
)
from fade.simulator import Action, ActorScript, synth_scene
from fade.tracking import TrackOutput

SPEC_THRESHOLDS = DetectorConfig(v_thre=-3.0, a_thre=-5.0)


def _ring(vs, as_, ps, t0=0.0):
    return [(t0 + 0.05 * k, np.array([1.0, v, a]), p) for k, (v, a, p) in enumerate(zip(vs, as_, ps))]


def test_fall_like_window_fires():
    ring = _ring([0, -1.5, -3.4, -2.0], [-1, -6.0, -2, 0.5], [0.2, 0.6, 0.9, 0.7])
    for cfg in (SPEC_THRESHOLDS, DetectorConfig()):
        ev = threshold_decide(ring, cfg, track_id=4)
        assert ev is not None and ev.track_id == 4
        assert (ev.peak_v, ev.peak_a, ev.peak_p) == (-3.4, -6.0, 0.9)
        assert ev.t == pytest.approx(0.15)


def test_deep_squat_does_not_fire():
    ring = _ring([-0.4, -1.1, -0.6], [-2.5, -4.0, 1.0], [0.3, 0.7, 0.5])
    assert threshold_decide(ring, SPEC_THRESHOLDS) is None
    assert threshold_decide(ring, DetectorConfig()) is None


def test_positive_acceleration_never_counts():
    ring = _ring([-3.5, -3.2], [6.0, 7.0], [0.9, 0.9])
    assert threshold_decide(ring, DetectorConfig()) is None


def test_only_last_window_frames_count():
    ring = _ring([-3.5] + [0.0] * 20, [-6.0] + [0.0] * 20, [0.9] + [0.1] * 20)
    assert threshold_decide(ring, DetectorConfig(window=20)) is None
    assert threshold_decide(ring, DetectorConfig(window=21)) is not None


def _fall_stream(track_id, seed, fall=True, a_fall=-8.0, t_fall=1.5, duration=4.0):
    acts = (Action(t_fall, "fall", {"a_fall": a_fall}),) if fall else ()
    truth = synth_scene([ActorScript(track_id, (0, 3), 1.2, acts)], 0.05, duration)
    rng = np.random.default_rng(seed)
    z = truth.states[:, 0, 2] + rng.normal(0, 0.02, len(truth.t))
    return [(track_id, float(t), float(zz)) for t, zz in zip(truth.t, z)], truth


def test_two_tracks_one_falls():
    a, truth = _fall_stream(1, 0, fall=True)
    b, _ = _fall_stream(2, 1, fall=False)
    merged = sorted(a + b, key=lambda m: (m[1], m[0]))
    events = detect_stream(merged)
    assert len(events) == 1
    assert events[0].track_id == 1
    impact = truth.events[0].impact_t
    assert abs(events[0].t - impact) < 1.0


def test_refractory_suppresses_repeat():
    stream, _ = _fall_stream(1, 3)
    # replay the fall shortly after: second drop lands inside the refractory period
    again = [(1, t + 1.2 + stream[-1][1], z) for _, t, z in stream[25:]]
    events = detect_stream(stream + again, det_cfg=DetectorConfig(refractory=10.0))
    assert len(events) == 1
    # without a refractory period the window keeps firing on one fall
    assert len(detect_stream(stream, det_cfg=DetectorConfig(refractory=0.0))) > 1
    assert len(detect_stream(stream)) == 1


def test_no_tracks_no_events():
    det = StreamDetector()
    assert det.step([]) == []
    assert det.active_ids == []
    assert detect_stream([]) == []


def test_stream_detector_drops_vanished_tracks():
    det = StreamDetector()
    out = lambda tid, t, z: TrackOutput(tid, t, np.array([0, 3, z]), z)  # noqa: E731
    det.step([out(1, 0.0, 1.0), out(2, 0.0, 1.1)])
    assert det.active_ids == [1, 2]
    det.step([out(2, 0.05, 1.1)])
    assert det.active_ids == [2]


def test_miss_before_start_creates_nothing():
    det = StreamDetector()
    assert det.update(5, 0.0, None) is None
    assert det.active_ids == []


def test_feature_rows_recorded():
    det = StreamDetector(record_features=True)
    stream, _ = _fall_stream(3, 2)
    for tid, t, z in stream:
        det.update(tid, t, z)
    assert len(det.features) == len(stream)
    assert sum(r.decision for r in det.features) == 1


@pytest.mark.parametrize("kw", [dict(window=0), dict(p_thre=1.0), dict(refractory=-1.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        DetectorConfig(**kw)


def test_estimator_interface():
    stream, _ = _fall_stream(1, 5)
    X = np.array([[t, z] for _, t, z in stream])
    est = FallDetector().fit(X)
    feats = est.transform(X)
    assert feats.shape == (len(X), 4)
    flags = est.predict(X)
    assert flags.shape == (len(X),) and flags.sum() == 1
    with pytest.raises(ValueError):
        est.predict(np.zeros((3, 3)))
