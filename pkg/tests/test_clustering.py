import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fade.clustering import (
    Cluster,
    ClusterConfig,
    GridDBSCAN,
    build_grid,
    cluster_frame,
    grid_cluster,
    torso_extract,
)
from fade.frames import PointFrame

from oracles import components_oracle, random_frame


def _pts(xy, z=1.0, doppler=0.0):
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    out = np.zeros((len(xy), 5))
    out[:, :2] = xy
    out[:, 2] = z
    out[:, 3] = doppler
    return out


def test_close_points_share_a_cell():
    grid = build_grid(_pts([(0.1, 0.1), (0.15, 0.12)]), ClusterConfig(cell_size=0.3))
    assert grid == {(0, 0): [0, 1]}


def test_floor_arithmetic_for_cells():
    assert list(build_grid(_pts([(0.31, 0.0)]), ClusterConfig(cell_size=0.3))) == [(1, 0)]
    assert list(build_grid(_pts([(-0.01, -0.31)]), ClusterConfig(cell_size=0.3))) == [(-1, -2)]


def test_grid_is_a_partition(rng):
    pts = _pts(rng.uniform(-3, 3, size=(100, 2)))
    grid = build_grid(pts, ClusterConfig())
    members = sorted(i for cell in grid.values() for i in cell)
    assert members == list(range(100))
    assert sum(len(v) for v in grid.values()) == 100


def test_single_dense_blob(rng):
    pts = _pts(rng.uniform(0.0, 0.5, size=(40, 2)))
    cfg = ClusterConfig(cell_size=0.25, thre_starter=5, thre_final=20)
    clusters = grid_cluster(build_grid(pts, cfg), cfg)
    assert len(clusters) == 1 and len(clusters[0]) == 40
    assert components_oracle(pts, cfg) == {frozenset(range(40))}


def test_two_separated_blobs(rng):
    a = rng.uniform(0.0, 0.5, size=(30, 2))
    b = rng.uniform(0.0, 0.5, size=(30, 2)) + [1.5, 0.0]
    pts = _pts(np.vstack([a, b]))
    cfg = ClusterConfig(thre_starter=5, thre_final=20)
    clusters = grid_cluster(build_grid(pts, cfg), cfg)
    assert len(clusters) == 2
    assert {frozenset(c.indices.tolist()) for c in clusters} == components_oracle(pts, cfg)


def test_isolated_points_are_dropped():
    pts = _pts([(0, 0), (2, 2), (-2, 1)])
    assert grid_cluster(build_grid(pts, ClusterConfig()), ClusterConfig()) == []


def test_grid_cluster_does_not_mutate_input(rng):
    pts = _pts(rng.uniform(0.0, 0.5, size=(40, 2)))
    grid = build_grid(pts, ClusterConfig())
    before = {k: list(v) for k, v in grid.items()}
    grid_cluster(grid, ClusterConfig())
    assert grid == before


def test_uniform_doppler_keeps_whole_cluster(rng):
    pts = _pts(rng.uniform(0, 0.4, size=(20, 2)), doppler=1.0 + rng.uniform(-0.01, 0.01, 20))
    c = torso_extract(Cluster(np.arange(20)), pts, ClusterConfig(beta_gap=0.5))
    assert c.torso.tolist() == list(range(20))


def test_fast_group_is_the_torso(rng):
    torso = _pts(rng.uniform(0, 0.4, size=(8, 2)), z=rng.uniform(0.8, 1.4, 8),
                 doppler=-1.2 + rng.uniform(-0.05, 0.05, 8))
    limbs = _pts(rng.uniform(0, 0.4, size=(3, 2)), z=0.5, doppler=0.4)
    pts = np.vstack([limbs, torso])
    c = torso_extract(Cluster(np.arange(11)), pts, ClusterConfig(beta_gap=0.5))
    assert c.torso.tolist() == list(range(3, 11))
    np.testing.assert_allclose(c.centroid, torso[:, :3].mean(axis=0))
    assert c.mean_doppler == pytest.approx(torso[:, 3].mean())


def test_speed_tie_goes_to_larger_then_lower_group():
    pts = np.vstack([_pts([(0, 0)] * 3, z=1.0, doppler=1.0),
                     _pts([(0, 0)] * 5, z=1.5, doppler=-1.0)])
    c = torso_extract(Cluster(np.arange(8)), pts, ClusterConfig(beta_gap=0.5))
    assert c.torso.tolist() == [3, 4, 5, 6, 7]
    pts = np.vstack([_pts([(0, 0)] * 4, z=1.0, doppler=1.0),
                     _pts([(0, 0)] * 4, z=0.5, doppler=-1.0)])
    c = torso_extract(Cluster(np.arange(8)), pts, ClusterConfig(beta_gap=0.5))
    assert c.torso.tolist() == [4, 5, 6, 7]


def test_single_point_cluster_is_its_own_torso():
    c = torso_extract(Cluster(np.array([0])), _pts([(1.0, 2.0)], z=0.7), ClusterConfig())
    assert c.torso.tolist() == [0]
    np.testing.assert_allclose(c.centroid, [1.0, 2.0, 0.7])


def test_empty_cluster_is_rejected():
    with pytest.raises(ValueError):
        torso_extract(Cluster(np.array([], dtype=int)), _pts([(0, 0)]), ClusterConfig())


def test_sparse_frame_short_circuits():
    assert cluster_frame(PointFrame(0, 0.0, _pts([(0, 0)] * 10))) == []


@pytest.mark.parametrize("kw", [dict(cell_size=0), dict(thre_starter=0),
                                dict(thre_starter=10, thre_final=5), dict(alpha=0.5),
                                dict(beta_gap=-1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ClusterConfig(**kw)


def test_matches_components_oracle_on_random_frames():
    rng = np.random.default_rng(7)
    cfg = ClusterConfig()
    for _ in range(300):
        pts = random_frame(rng)
        got = {frozenset(c.indices.tolist()) for c in grid_cluster(build_grid(pts, cfg), cfg)}
        assert got == components_oracle(pts, cfg)


@given(st.integers(0, 2**32 - 1))
def test_cluster_properties(seed):
    rng = np.random.default_rng(seed)
    pts = random_frame(rng)
    clusters = cluster_frame(pts)
    seen = set()
    for c in clusters:
        idx = set(c.indices.tolist())
        assert not idx & seen
        seen |= idx
        assert set(c.torso.tolist()) <= idx
        tz = pts[c.torso, 2]
        assert tz.min() - 1e-12 <= c.centroid[2] <= tz.max() + 1e-12
        np.testing.assert_allclose(c.centroid, pts[c.torso, :3].mean(axis=0))
    again = cluster_frame(pts.copy())
    assert [c.indices.tolist() for c in again] == [c.indices.tolist() for c in clusters]
    assert [c.torso.tolist() for c in again] == [c.torso.tolist() for c in clusters]


def test_estimator_labels(rng):
    a = np.column_stack([rng.uniform(0, 0.4, (20, 2)), np.ones(20), -np.ones(20)])
    b = np.column_stack([rng.uniform(2, 2.4, (20, 2)), np.ones(20), np.ones(20)])
    X = np.vstack([a, b, [[5.0, 5.0, 1.0, 0.0]]])
    est = GridDBSCAN().fit(X)
    assert est.n_clusters_ == 2
    assert est.labels_[-1] == -1
    assert len(set(est.labels_[:20])) == 1 and len(set(est.labels_[20:40])) == 1
    assert est.centroids_.shape == (2, 3)
    assert est.fit_predict(X).tolist() == est.labels_.tolist()


def test_estimator_rejects_narrow_input():
    with pytest.raises(ValueError):
        GridDBSCAN().fit(np.zeros((5, 3)))
