import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from airgrid.errors import (InsufficientDataError, InvalidInputError,
                            SchemaError)
from airgrid.features import (FeatureSchema, FeatureTensor, RoadSegment,
                              assemble_features, build_od_adjacency,
                              build_semantic_adjacency, congestion_matrix,
                              encode_timestamps, fill_missing, flow_matrix,
                              grid_congestion_index, truck_flow)
from airgrid.synth import SynthConfig, generate, make_grid


class TestODAdjacency:
    def test_single_hop(self):
        a = build_od_adjacency([("k1", 0, 2), ("k1", 1, 5)], n_grids=6)
        expect = np.eye(6)
        expect[2, 5] = 1.0
        assert np.array_equal(a, expect)

    def test_direction_matters(self):
        a = build_od_adjacency([("k1", 0, 2), ("k1", 1, 5)], n_grids=6)
        assert a[2, 5] == 1.0 and a[5, 2] == 0.0

    def test_symmetrize(self):
        a = build_od_adjacency([("k1", 0, 2), ("k1", 1, 5)], n_grids=6,
                               symmetrize=True)
        assert a[2, 5] == 1.0 and a[5, 2] == 1.0

    def test_staying_put_adds_nothing(self):
        a = build_od_adjacency([("k1", 0, 3), ("k1", 1, 3)], n_grids=4)
        assert np.array_equal(a, np.eye(4))

    def test_trucks_are_independent(self):
        # consecutive points must come from the same truck
        a = build_od_adjacency([("k1", 0, 1), ("k2", 1, 3)], n_grids=4)
        assert np.array_equal(a, np.eye(4))

    def test_unsorted_rejected(self):
        with pytest.raises(InvalidInputError):
            build_od_adjacency([("k1", 5, 0), ("k1", 2, 1)], n_grids=2)

    def test_unit_diagonal_and_binary(self):
        rng = np.random.default_rng(0)
        pts = []
        for k in range(4):
            gids = rng.integers(0, 9, size=12)
            pts.extend((f"k{k}", t, int(g)) for t, g in enumerate(gids))
        a = build_od_adjacency(pts, n_grids=9)
        assert np.array_equal(np.diag(a), np.ones(9))
        assert set(np.unique(a)) <= {0.0, 1.0}


class TestCongestion:
    def segs(self):
        return [
            RoadSegment("r1", grid_id=0, length_in_grid=2.0,
                        congestion=np.array([1.0, 3.0])),
            RoadSegment("r2", grid_id=0, length_in_grid=1.0,
                        congestion=np.array([4.0, 0.0])),
            RoadSegment("r3", grid_id=2, length_in_grid=5.0,
                        congestion=np.array([2.0, 2.0])),
        ]

    def test_length_weighted_mean(self):
        # (1*2 + 4*1) / 3 = 2
        assert grid_congestion_index(self.segs(), 0, 0) == pytest.approx(2.0)
        assert grid_congestion_index(self.segs(), 0, 1) == pytest.approx(2.0)

    def test_no_roads_gives_zero(self):
        assert grid_congestion_index(self.segs(), 1, 0) == 0.0

    def test_matrix_matches_scalar(self):
        m = congestion_matrix(self.segs(), n_grids=3, hours=2)
        for gid in range(3):
            for t in range(2):
                assert m[gid, t] == pytest.approx(
                    grid_congestion_index(self.segs(), gid, t))


class TestSemanticAdjacency:
    def test_two_obvious_clusters(self):
        x = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]])
        a = build_semantic_adjacency(x, k=2, seed=0)
        assert a[0, 1] == 1.0 and a[2, 3] == 1.0
        assert a[0, 2] == 0.0 and a[1, 3] == 0.0

    def test_symmetric_unit_diagonal(self):
        rng = np.random.default_rng(4)
        a = build_semantic_adjacency(rng.normal(size=(30, 5)), k=4, seed=1)
        assert np.array_equal(a, a.T)
        assert np.array_equal(np.diag(a), np.ones(30))

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(25, 3))
        a = build_semantic_adjacency(x, k=5, seed=3)
        b = build_semantic_adjacency(x, k=5, seed=3)
        assert np.array_equal(a, b)

    def test_scale_invariant(self):
        # standardization inside means rescaling a column changes nothing
        rng = np.random.default_rng(2)
        x = rng.normal(size=(20, 3))
        x2 = x * np.array([1.0, 100.0, 0.01])
        a = build_semantic_adjacency(x, k=3, seed=0)
        b = build_semantic_adjacency(x2, k=3, seed=0)
        assert np.array_equal(a, b)

    def test_bad_k(self):
        with pytest.raises(InvalidInputError):
            build_semantic_adjacency(np.zeros((5, 2)), k=6)


class TestFlow:
    def test_counts(self):
        pts = [("k1", 0, 3), ("k2", 0, 3), ("k1", 1, 3), ("k3", 0, 1)]
        assert truck_flow(pts, grid_id=3, hour=0) == 2
        assert truck_flow(pts, grid_id=3, hour=1) == 1
        assert truck_flow(pts, grid_id=0, hour=0) == 0
        m = flow_matrix(pts, n_grids=4, hours=2)
        assert m[3, 0] == 2 and m[3, 1] == 1 and m[1, 0] == 1
        assert m.sum() == 4


class TestTimestamps:
    def test_known_week(self):
        # 2022-03-01 is a Tuesday
        ts = pd.date_range("2022-03-01", periods=30, freq="h")
        enc = encode_timestamps(ts)
        assert enc.shape == (30, 2)
        assert enc[0, 0] == 0 and enc[23, 0] == 23 and enc[24, 0] == 0
        assert enc[0, 1] == 1  # Monday=0 so Tuesday=1
        assert enc[24, 1] == 2


class TestFillMissing:
    def test_identity_on_complete(self):
        x = np.array([1.0, 2.0, 5.0])
        assert np.array_equal(fill_missing(x), x)

    def test_interior_linear(self):
        x = np.array([1.0, np.nan, np.nan, 7.0])
        assert np.allclose(fill_missing(x), [1.0, 3.0, 5.0, 7.0])

    def test_leading_and_trailing(self):
        x = np.array([np.nan, 4.0, 6.0, np.nan, np.nan])
        assert np.allclose(fill_missing(x), [4.0, 4.0, 6.0, 6.0, 6.0])

    def test_all_missing(self):
        with pytest.raises(InsufficientDataError):
            fill_missing(np.full(5, np.nan))

    @given(st.integers(0, 2 ** 16))
    @settings(max_examples=25, deadline=None)
    def test_output_bounded_by_observed(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-5, 5, size=20)
        drop = rng.random(20) < 0.5
        drop[int(rng.integers(20))] = False  # keep at least one
        x[drop] = np.nan
        out = fill_missing(x)
        obs = x[~np.isnan(x)]
        assert np.isfinite(out).all()
        assert out.min() >= obs.min() - 1e-12
        assert out.max() <= obs.max() + 1e-12


class TestSchemaAndTensor:
    def test_restrict(self):
        s = FeatureSchema(numeric_names=("a", "b", "c"))
        r = s.restrict({"a", "c"}, {"hour_of_day"})
        assert r.numeric_names == ("a", "c")
        assert r.categorical_names == ("hour_of_day",)
        assert r.cardinalities == (24,)

    def test_cardinality_enforced(self):
        s = FeatureSchema(numeric_names=("a",))
        x_num = np.zeros((2, 3, 1))
        x_cat = np.zeros((2, 3, 2), int)
        x_cat[0, 0, 0] = 24  # out of range for hour
        with pytest.raises(SchemaError):
            FeatureTensor(x_num=x_num, x_cat=x_cat, schema=s)

    def test_select_numeric(self):
        s = FeatureSchema(numeric_names=("a", "b", "c"))
        x_num = np.arange(2 * 3 * 3, dtype=float).reshape(2, 3, 3)
        x_cat = np.zeros((2, 3, 2), int)
        ft = FeatureTensor(x_num=x_num, x_cat=x_cat, schema=s)
        sub = ft.select_numeric(["c", "a"])
        assert sub.schema.numeric_names == ("c", "a")
        assert np.array_equal(sub.x_num[..., 0], x_num[..., 2])
        assert np.array_equal(sub.x_num[..., 1], x_num[..., 0])


@pytest.fixture(scope="module")
def built():
    cfg = SynthConfig(n_rows=5, n_cols=5, hours=24 * 4, n_ss=5, n_ms=8,
                      n_trucks=4, seed=0)
    bundle = generate(cfg)
    g = make_grid(cfg)
    tensor, adj = assemble_features(bundle, g, "NO2")
    return cfg, bundle, g, tensor, adj


class TestAssembleFeatures:
    def test_shapes_and_schema(self, built):
        cfg, bundle, g, tensor, adj = built
        n, T = g.n_cells, cfg.hours
        u = tensor.schema.n_numeric
        assert tensor.x_num.shape == (n, T, u)
        assert tensor.x_cat.shape == (n, T, 2)
        assert tensor.schema.numeric_names[0] == "trend"
        assert tensor.schema.numeric_names[1] == "rep_O3"
        assert sum(nm.startswith("met_") for nm in
                   tensor.schema.numeric_names) == 7
        assert "congestion_index" in tensor.schema.numeric_names
        assert any(nm == "ge_noise" for nm in tensor.schema.numeric_names)
        assert "truck_flow" not in tensor.schema.numeric_names  # NO2

    def test_adjacency_invariants(self, built):
        cfg, bundle, g, tensor, adj = built
        for a in (adj.a_od, adj.a_se):
            assert a.shape == (g.n_cells, g.n_cells)
            assert np.array_equal(np.diag(a), np.ones(g.n_cells))
            assert set(np.unique(a)) <= {0.0, 1.0}
        assert np.array_equal(adj.a_se, adj.a_se.T)

    def test_weather_broadcast_uniform_across_grids(self, built):
        cfg, bundle, g, tensor, adj = built
        j = tensor.schema.numeric_names.index("met_temp")
        col = tensor.x_num[:, :, j]
        assert np.allclose(col, col[0][None, :])

    def test_geographic_constant_in_time(self, built):
        cfg, bundle, g, tensor, adj = built
        j = tensor.schema.numeric_names.index("ge_noise")
        col = tensor.x_num[:, :, j]
        assert np.allclose(col, col[:, 0][:, None])

    def test_pm25_includes_truck_flow(self, built):
        cfg, bundle, g, _, _ = built
        tensor, _ = assemble_features(bundle, g, "PM25")
        assert tensor.schema.numeric_names[-1] == "truck_flow"
        assert tensor.schema.numeric_names[1] == "rep_NO2"

    def test_unknown_pollutant(self, built):
        cfg, bundle, g, _, _ = built
        with pytest.raises(InvalidInputError):
            assemble_features(bundle, g, "SO2")
