import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from airgrid.errors import InvalidInputError
from airgrid.evaluation import (ABLATION_VARIANTS, _variant_configs, baseline,
                                corrupt_and_fill, metrics,
                                missing_ratio_study, run_ablation, run_cv)
from airgrid.features import (AdjacencyPair, FeatureSchema, FeatureTensor)
from airgrid.grid import assign_stations, split_grids
from airgrid.network import ModelConfig
from airgrid.pipeline import PreparedData, prepare_synth
from airgrid.synth import SynthConfig, generate, make_grid
from airgrid.training import TrainConfig

SMALL = SynthConfig(n_rows=5, n_cols=5, hours=96, n_ss=12, n_ms=8,
                    n_trucks=3, seed=2)
TINY_MODEL = ModelConfig(d_p=2, d_t=8, heads_od=2, heads_se=2, heads_sup=2,
                         tau=4, d_ss_hidden=4, d_ss=1)
FAST_TRAIN = TrainConfig(beta=0.01, gamma=0.01, seed=0, max_epochs=1,
                         patience=1, max_steps_per_epoch=3, val_stride=16)


@pytest.fixture(scope="module")
def prep():
    return prepare_synth(SMALL, pollutant="NO2", split_seed=0)


class TestMetrics:
    def test_hand_values(self):
        m = metrics([1.0, 2.0, 3.0, 4.0], [2.0, 2.0, 4.0, 4.0])
        assert m.mae == pytest.approx(0.5)
        assert m.rmse == pytest.approx(math.sqrt(0.5))
        assert m.r2 == pytest.approx(0.6)

    def test_perfect_prediction(self):
        m = metrics([1.0, 2.0], [1.0, 2.0])
        assert (m.mae, m.rmse, m.r2) == (0.0, 0.0, 1.0)

    def test_constant_truth_r2_undefined(self):
        m = metrics([3.0, 3.0, 3.0], [2.0, 3.0, 4.0])
        assert np.isnan(m.r2)
        assert m.mae == pytest.approx(2.0 / 3.0)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            metrics([1.0], [1.0, 2.0])

    @given(st.integers(0, 2 ** 16))
    @settings(max_examples=50, deadline=None)
    def test_mae_never_exceeds_rmse(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 30))
        m = metrics(rng.normal(size=n), rng.normal(size=n))
        assert m.mae <= m.rmse + 1e-12


class TestCorruptAndFill:
    def test_zero_ratio_is_identity(self):
        b = generate(SMALL)
        out = corrupt_and_fill(b, 0.0, seed=1)
        for pol in b.readings:
            assert out.readings[pol]["value"].equals(b.readings[pol]["value"])

    def test_changes_values_but_keeps_shape(self):
        b = generate(SMALL)
        out = corrupt_and_fill(b, 0.5, seed=1)
        for pol in b.readings:
            a = b.readings[pol]["value"].to_numpy()
            c = out.readings[pol]["value"].to_numpy()
            assert a.shape == c.shape
            assert np.isfinite(c).all()
            assert not np.allclose(a, c)
            # the untouched points are preserved exactly
            assert np.isclose(a, c).mean() > 0.3

    def test_filled_values_bounded_by_observed(self):
        b = generate(SMALL)
        out = corrupt_and_fill(b, 0.7, seed=3)
        df_in = b.readings["NO2"]
        df_out = out.readings["NO2"]
        for sid, grp in df_out.groupby("station_id"):
            orig = df_in[df_in["station_id"] == sid]["value"]
            assert grp["value"].min() >= orig.min() - 1e-9
            assert grp["value"].max() <= orig.max() + 1e-9

    def test_deterministic(self):
        b = generate(SMALL)
        x = corrupt_and_fill(b, 0.4, seed=9).readings["O3"]["value"]
        y = corrupt_and_fill(b, 0.4, seed=9).readings["O3"]["value"]
        assert x.equals(y)

    def test_invalid_ratio(self):
        b = generate(SMALL)
        with pytest.raises(InvalidInputError):
            corrupt_and_fill(b, 1.0, seed=0)


class TestVariantConfigs:
    def test_all_names_resolve(self):
        for v in ABLATION_VARIANTS:
            mc, tc, ss, adj = _variant_configs(v, TINY_MODEL, FAST_TRAIN)
            assert isinstance(mc, ModelConfig)

    def test_unknown_variant(self):
        with pytest.raises(InvalidInputError):
            _variant_configs("wo_everything", TINY_MODEL, FAST_TRAIN)

    def test_specific_effects(self):
        mc, tc, _, _ = _variant_configs("wo_sst", TINY_MODEL, FAST_TRAIN)
        assert not mc.use_ssb and tc.pretext == "none"
        _, _, ss, _ = _variant_configs("rp_ksst", TINY_MODEL, FAST_TRAIN)
        assert ss == "knn"
        _, tc, _, _ = _variant_configs("rp_gsst", TINY_MODEL, FAST_TRAIN)
        assert tc.pretext == "completion"
        mc, _, _, _ = _variant_configs("wo_pe", TINY_MODEL, FAST_TRAIN)
        assert not mc.use_pe
        _, tc, _, _ = _variant_configs("wo_fs", TINY_MODEL, FAST_TRAIN)
        assert tc.beta == 0.0 and tc.gamma == 0.0
        for v, key in (("wo_od", "a_od"), ("wo_se", "a_se")):
            _, _, _, adj = _variant_configs(v, TINY_MODEL, FAST_TRAIN)
            assert adj == {key: "identity"}


class TestRunCV:
    def test_full_variant_smoke(self, prep):
        avg, per_fold = run_cv(prep, TINY_MODEL, FAST_TRAIN)
        assert len(per_fold) == len(prep.split.folds)
        assert np.isfinite(avg.mae) and np.isfinite(avg.rmse)
        assert avg.mae == pytest.approx(np.mean([m.mae for m in per_fold]))

    def test_ablation_variants_smoke(self, prep):
        for v in ("wo_sst", "rp_gsst", "wo_od"):
            m = run_ablation(v, prep, TINY_MODEL, FAST_TRAIN)
            assert np.isfinite(m.mae)


class TestMissingRatioStudy:
    def test_table_shape_and_finiteness(self):
        bundle = generate(SMALL)
        grid = make_grid(SMALL)
        df = missing_ratio_study(bundle, grid, "NO2", [0.2, 0.5],
                                 TINY_MODEL, FAST_TRAIN)
        assert list(df.columns) == ["ratio", "mae", "rmse", "r2"]
        assert list(df["ratio"]) == [0.2, 0.5]
        assert np.isfinite(df["mae"]).all()


class TestBaselines:
    def test_idw_knn_finite(self, prep):
        for name in ("idw", "knn"):
            m = baseline(name, prep, from_hour=TINY_MODEL.tau - 1)
            assert np.isfinite(m.mae) and m.mae > 0

    def test_unknown_name(self, prep):
        with pytest.raises(InvalidInputError):
            baseline("kriging", prep)

    def test_lur_recovers_linear_field(self):
        """On labels exactly linear in the geographic/meteorological
        features, the regression baseline is near-perfect."""
        cfg = SynthConfig(n_rows=5, n_cols=5, hours=80, n_ss=20, n_ms=5,
                          n_trucks=2, seed=4)
        bundle = generate(cfg)
        g = assign_stations(make_grid(cfg), bundle.stations)
        rng = np.random.default_rng(0)
        n, T = 25, 80
        ge = rng.normal(size=(n, 1))
        met = rng.normal(size=(1, T))
        schema = FeatureSchema(numeric_names=("trend", "ge_a", "met_b"))
        x_num = np.stack([rng.normal(size=(n, T)),
                          np.broadcast_to(ge, (n, T)).copy(),
                          np.broadcast_to(met, (n, T)).copy()], axis=-1)
        x_cat = np.zeros((n, T, 2), int)
        y = 2.0 * x_num[..., 1] - 1.5 * x_num[..., 2] + 7.0
        ctx = sorted(set(g.context_ids()))
        y_raw = np.full((n, T), np.nan)
        y_raw[ctx] = y[ctx]
        prep = PreparedData(
            graph=g,
            tensor=FeatureTensor(x_num=x_num, x_cat=x_cat, schema=schema),
            adj=AdjacencyPair(a_od=np.eye(n), a_se=np.eye(n)),
            y_raw=y_raw, split=split_grids(set(ctx), seed=0),
            pollutant="NO2", bundle=bundle)
        m = baseline("lur", prep)
        assert m.r2 > 0.999
        assert m.mae < 1e-6 * np.abs(y).mean() + 1e-6
