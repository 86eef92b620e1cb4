"""Metrics, cross-validated evaluation, ablation harness, missing-ratio
pressure test and classical baselines (KNN / IDW / LUR)."""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .dataio import DatasetBundle
from .errors import InvalidInputError
from .features import fill_missing
from .interpolate import idw, knn_interpolate
from .network import ModelConfig
from .pipeline import GraphSTRegressor, PreparedData, prepare
from .training import TrainConfig

ABLATION_VARIANTS = ("full", "wo_sst", "rp_ksst", "rp_gsst", "wo_pe",
                     "wo_fs", "wo_od", "wo_se")


@dataclass(frozen=True)
class MetricTriple:
    mae: float
    rmse: float
    r2: float


def metrics(y, y_hat) -> MetricTriple:
    y = np.asarray(y, float)
    y_hat = np.asarray(y_hat, float)
    if y.shape != y_hat.shape or y.size < 2:
        raise InvalidInputError("metrics need equal shapes with >= 2 points")
    err = y_hat - y
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt((err ** 2).mean()))
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = float("nan") if ss_tot == 0 else 1.0 - float((err ** 2).sum()) / ss_tot
    assert mae <= rmse + 1e-12, "MAE must not exceed RMSE"
    return MetricTriple(mae=mae, rmse=rmse, r2=r2)


def _average(triples: list[MetricTriple]) -> MetricTriple:
    return MetricTriple(
        mae=float(np.mean([m.mae for m in triples])),
        rmse=float(np.mean([m.rmse for m in triples])),
        r2=float(np.mean([m.r2 for m in triples])),
    )


def _test_points(prep: PreparedData, field: np.ndarray, tau: int):
    """Flatten (grid, hour) truth/prediction pairs on the test grids."""
    ids = sorted(prep.split.test_ids)
    y = prep.y_raw[ids, tau - 1:]
    p = field[ids, tau - 1:]
    valid = ~np.isnan(y) & ~np.isnan(p)
    return y[valid], p[valid]


def evaluate_on_test(prep: PreparedData, est: GraphSTRegressor) -> MetricTriple:
    field = est.predict(prep)
    y, p = _test_points(prep, field, est.net_.config.tau)
    return metrics(y, p)


def _variant_configs(variant: str, model_cfg: ModelConfig,
                     train_cfg: TrainConfig):
    """Map an ablation variant name onto config/wiring changes."""
    mc, tc, ss_method = model_cfg, train_cfg, "idw"
    adj = {}
    if variant == "full":
        pass
    elif variant == "wo_sst":
        mc = replace(mc, use_ssb=False)
        tc = replace(tc, pretext="none")
    elif variant == "rp_ksst":
        ss_method = "knn"
    elif variant == "rp_gsst":
        tc = replace(tc, pretext="completion")
    elif variant == "wo_pe":
        mc = replace(mc, use_pe=False)
    elif variant == "wo_fs":
        tc = replace(tc, beta=0.0, gamma=0.0)
    elif variant == "wo_od":
        adj["a_od"] = "identity"
    elif variant == "wo_se":
        adj["a_se"] = "identity"
    else:
        raise InvalidInputError(f"unknown ablation variant {variant!r}")
    return mc, tc, ss_method, adj


def _apply_adj(prep: PreparedData, adj: dict) -> PreparedData:
    if not adj:
        return prep
    new = copy.copy(prep)
    n = prep.graph.n_cells
    pair = prep.adj
    if adj.get("a_od") == "identity":
        pair = replace(pair, a_od=np.eye(n))
    if adj.get("a_se") == "identity":
        pair = replace(pair, a_se=np.eye(n))
    new.adj = pair
    return new


def run_cv(prep: PreparedData, model_cfg: ModelConfig, train_cfg: TrainConfig,
           variant: str = "full") -> tuple[MetricTriple, list[MetricTriple]]:
    """Train one model per fold, evaluate each on the fixed test grids and
    average. Returns (averaged, per-fold) metric triples."""
    mc, tc, ss_method, adj = _variant_configs(variant, model_cfg, train_cfg)
    prep = _apply_adj(prep, adj)
    per_fold = []
    for fold in range(len(prep.split.folds)):
        est = GraphSTRegressor(model_config=mc, train_config=tc,
                               ss_method=ss_method)
        est.fit(prep, fold=fold)
        per_fold.append(evaluate_on_test(prep, est))
    return _average(per_fold), per_fold


def run_ablation(variant: str, prep: PreparedData, model_cfg: ModelConfig,
                 train_cfg: TrainConfig) -> MetricTriple:
    avg, _ = run_cv(prep, model_cfg, train_cfg, variant=variant)
    return avg


def corrupt_and_fill(bundle: DatasetBundle, ratio: float,
                     seed: int) -> DatasetBundle:
    """Uniformly drop `ratio` of every station series, then restore it by
    linear interpolation (next/previous observed value at the edges)."""
    if not 0.0 <= ratio < 1.0:
        raise InvalidInputError("ratio must be in [0, 1)")
    out = copy.copy(bundle)
    if ratio == 0.0:
        return out
    rng = np.random.default_rng(seed)
    new_readings = {}
    for pol, df in bundle.readings.items():
        df = df.copy()
        values = df["value"].to_numpy(float).copy()
        for _, idx in df.groupby("station_id").indices.items():
            n_drop = min(len(idx) - 1, int(round(ratio * len(idx))))
            if n_drop <= 0:
                continue
            drop = rng.choice(idx, size=n_drop, replace=False)
            series = values[idx].copy()
            pos = {g: i for i, g in enumerate(idx)}
            series[[pos[d] for d in drop]] = np.nan
            values[idx] = fill_missing(series)
        df["value"] = values
        new_readings[pol] = df
    out.readings = new_readings
    return out


def missing_ratio_study(bundle: DatasetBundle, grid, pollutant: str,
                        ratios, model_cfg: ModelConfig,
                        train_cfg: TrainConfig, split_seed: int = 0,
                        corrupt_seed: int = 1234,
                        feature_cfg=None) -> pd.DataFrame:
    """Full pipeline per missing ratio; returns a plot-ready table.

    Features and training labels come from the corrupted readings, but the
    score is always computed against the uncorrupted test-grid labels, so
    the table isolates how data loss degrades the model rather than how it
    smooths the evaluation target.
    """
    from .features import FeatureConfig
    feature_cfg = feature_cfg or FeatureConfig()
    clean = prepare(bundle, pollutant, grid, split_seed=split_seed,
                    feature_cfg=feature_cfg)
    rows = []
    for ratio in ratios:
        corrupted = corrupt_and_fill(bundle, ratio, corrupt_seed)
        prep = prepare(corrupted, pollutant, grid, split_seed=split_seed,
                       feature_cfg=feature_cfg)
        per_fold = []
        for fold in range(len(prep.split.folds)):
            est = GraphSTRegressor(model_config=model_cfg,
                                   train_config=train_cfg)
            est.fit(prep, fold=fold)
            field = est.predict(prep)
            y, p = _test_points(clean, field, est.net_.config.tau)
            per_fold.append(metrics(y, p))
        avg = _average(per_fold)
        rows.append({"ratio": ratio, "mae": avg.mae, "rmse": avg.rmse,
                     "r2": avg.r2})
    return pd.DataFrame(rows)


def baseline(name: str, prep: PreparedData, k: int = 3, p: float = 2.0,
             from_hour: int = 0) -> MetricTriple:
    """Classical baselines, evaluated per fold on the test grids and
    averaged like run_cv. `from_hour` restricts the scored hours so the
    baseline sees the same evaluation window as a windowed model."""
    test_ids = sorted(prep.split.test_ids)
    test_coords = prep.graph.centroids()[test_ids]
    y_test = prep.y_raw[test_ids]  # [n_test, T]
    per_fold = []
    for train_ids, _ in prep.split.folds:
        ids = sorted(train_ids)
        coords = prep.graph.centroids()[ids]
        y_train = prep.y_raw[ids]
        if name == "idw":
            pred = idw(test_coords, coords, y_train, p=p)
        elif name == "knn":
            pred = knn_interpolate(test_coords, coords, y_train,
                                   k=min(k, len(ids)))
        elif name == "lur":
            pred = _lur_predict(prep, ids, test_ids)
        else:
            raise InvalidInputError(f"unknown baseline {name!r}")
        yt = y_test[:, from_hour:]
        pr = pred[:, from_hour:]
        valid = ~np.isnan(yt)
        per_fold.append(metrics(yt[valid], pr[valid]))
    return _average(per_fold)


def _lur_predict(prep: PreparedData, train_ids, test_ids) -> np.ndarray:
    """Least-squares regression of concentrations on geographic +
    meteorological features."""
    names = prep.tensor.schema.numeric_names
    cols = [i for i, nm in enumerate(names)
            if nm.startswith("ge_") or nm.startswith("met_")]
    X = prep.tensor.x_num[:, :, cols]  # [N, T, d]

    def flatten(ids):
        x = X[ids].reshape(-1, len(cols))
        return np.column_stack([x, np.ones(len(x))])

    y_tr = prep.y_raw[train_ids].ravel()
    A = flatten(train_ids)
    ok = ~np.isnan(y_tr)
    coef, *_ = np.linalg.lstsq(A[ok], y_tr[ok], rcond=None)
    T = prep.y_raw.shape[1]
    return (flatten(test_ids) @ coef).reshape(len(test_ids), T)
