import numpy as np
import pytest
from sklearn.base import clone

from fade import FADE, FallDetector, GridDBSCAN, PipelineConfig
from fade.evaluation import benchmark_scenario


@pytest.mark.parametrize("est", [GridDBSCAN(cell_size=0.3), FallDetector(v_thre=-2.5),
                                 FADE(config={"detector": {"window": 15}})])
def test_params_round_trip_through_clone(est):
    params = est.get_params()
    twin = clone(est)
    assert twin.get_params().keys() == params.keys()
    for k, v in params.items():
        assert twin.get_params()[k] == v
    twin.set_params(**params)


def test_grid_dbscan_param_change_takes_effect(rng):
    X = np.column_stack([rng.uniform(0, 0.6, (30, 2)), np.ones(30), np.zeros(30)])
    assert GridDBSCAN().fit(X).n_clusters_ == 1
    assert GridDBSCAN(thre_final=40, thre_starter=5).fit(X).n_clusters_ == 0


def test_fade_predict_and_transform():
    sc = benchmark_scenario(31, falls=1)
    frames, _ = sc.generate()
    est = FADE(pose=sc.pose).fit()
    assert isinstance(est.config_, PipelineConfig)
    events = est.predict(frames)
    assert len(events) == 1
    feats = est.transform(frames)
    assert feats.shape[1] == 7
    assert feats[:, 6].sum() == 1
