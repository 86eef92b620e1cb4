"""Dataset preparation and the estimator wrapper.

`prepare` turns a raw dataset bundle into model-ready arrays (feature
tensor, adjacencies, labels, split plan, pretext labels).
`GraphSTRegressor` is a scikit-learn-flavored estimator (get_params /
set_params / fit / predict) around the manual-gradient network, fitting on
one fold of a prepared dataset and predicting a full grid x hour field in
label units.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataio import DatasetBundle
from .errors import InvalidInputError
from .features import (AdjacencyPair, FeatureConfig, FeatureTensor,
                       assemble_features, context_labels)
from .grid import GridGraph, SplitPlan, assign_stations, split_grids
from .interpolate import generate_ss_labels
from .network import ModelConfig, STNetwork
from .synth import make_grid, SynthConfig
from .training import TrainConfig, TrainingData, train


@dataclass
class PreparedData:
    graph: GridGraph
    tensor: FeatureTensor
    adj: AdjacencyPair
    y_raw: np.ndarray          # [N, T] label units, NaN off context
    split: SplitPlan
    pollutant: str
    bundle: DatasetBundle

    @property
    def hours(self) -> int:
        return self.y_raw.shape[1]


def prepare(bundle: DatasetBundle, pollutant: str, grid: GridGraph,
            split_seed: int = 0,
            feature_cfg: FeatureConfig = FeatureConfig()) -> PreparedData:
    """Assemble features, labels and the grid split for one pollutant."""
    g = assign_stations(grid, bundle.stations)
    tensor, adj = assemble_features(bundle, g, pollutant, feature_cfg)
    y_raw = context_labels(bundle, g, pollutant)
    split = split_grids(set(g.context_ids()), seed=split_seed)
    return PreparedData(graph=g, tensor=tensor, adj=adj, y_raw=y_raw,
                        split=split, pollutant=pollutant, bundle=bundle)


def pretext_labels(prep: PreparedData, p: float = 2.0,
                   method: str = "idw", k: int | None = None) -> np.ndarray:
    """[N, T] pretext-task labels interpolated from the interpolation
    grids only (test grids never contribute)."""
    ids = sorted(prep.split.interpolation_ids)
    coords = prep.graph.centroids()[ids]
    values = prep.y_raw[ids]
    if np.isnan(values).any():
        raise InvalidInputError("interpolation-grid labels contain gaps")
    return generate_ss_labels(prep.graph, coords, values, p=p,
                              method=method, k=k).values


def build_training_data(prep: PreparedData, cfg: TrainConfig,
                        a_od: np.ndarray | None = None,
                        a_se: np.ndarray | None = None,
                        ss_method: str = "idw") -> TrainingData:
    """Standardize features and labels; attach pretext labels.

    The label scaler uses context grids outside the test set.
    """
    x = prep.tensor.x_num.astype(float)
    mu = x.mean(axis=(0, 1))
    sd = x.std(axis=(0, 1))
    sd[sd == 0] = 1.0
    x_std = (x - mu) / sd

    fit_ids = sorted((prep.split.cv_pool() | prep.split.interpolation_ids))
    y_fit = prep.y_raw[fit_ids]
    y_mean = float(np.nanmean(y_fit))
    y_std = float(np.nanstd(y_fit))
    if y_std == 0:
        y_std = 1.0
    y = (prep.y_raw - y_mean) / y_std

    ss = None
    if cfg.pretext == "regression":
        ss = (pretext_labels(prep, method=ss_method) - y_mean) / y_std
    return TrainingData(x_num=x_std, x_cat=prep.tensor.x_cat,
                        a_od=prep.adj.a_od if a_od is None else a_od,
                        a_se=prep.adj.a_se if a_se is None else a_se,
                        y=y, ss_labels=ss, y_mean=y_mean, y_std=y_std)


class GraphSTRegressor:
    """Estimator over a prepared dataset: fit on one CV fold, predict a
    full [N, T] concentration field in label units."""

    def __init__(self, model_config: ModelConfig = ModelConfig(),
                 train_config: TrainConfig = TrainConfig(),
                 ss_method: str = "idw"):
        self.model_config = model_config
        self.train_config = train_config
        self.ss_method = ss_method

    # sklearn-style parameter plumbing
    def get_params(self, deep: bool = True) -> dict:
        return {"model_config": self.model_config,
                "train_config": self.train_config,
                "ss_method": self.ss_method}

    def set_params(self, **kwargs) -> "GraphSTRegressor":
        for k, v in kwargs.items():
            if k not in self.get_params():
                raise InvalidInputError(f"unknown parameter {k!r}")
            setattr(self, k, v)
        return self

    def fit(self, prep: PreparedData, fold: int = 0) -> "GraphSTRegressor":
        cfg = self.train_config
        mcfg = self.model_config
        if cfg.pretext == "completion":
            mcfg = replace(mcfg, d_ss=prep.tensor.schema.n_numeric)
        self.data_ = build_training_data(prep, cfg, ss_method=self.ss_method)
        self.net_ = STNetwork(mcfg, prep.tensor.schema, prep.graph)
        train_ids, val_ids = prep.split.folds[fold]
        self.params_, self.log_ = train(self.net_, self.data_,
                                        (train_ids, val_ids), cfg)
        return self

    def predict(self, prep: PreparedData | None = None,
                hours=None) -> np.ndarray:
        """[N, T] supervised-head field; hours before the first full
        window are NaN."""
        data = self.data_
        tau = self.net_.config.tau
        out = np.full((self.net_.n, data.hours), np.nan)
        rng_hours = range(tau - 1, data.hours) if hours is None else hours
        for t in rng_hours:
            sl = slice(t - tau + 1, t + 1)
            y_sup, _ = self.net_.predict(self.params_, data.x_num[:, sl, :],
                                         data.x_cat[:, sl, :], data.a_od,
                                         data.a_se)
            out[:, t] = y_sup * data.y_std + data.y_mean
        return out


def prepare_synth(cfg: SynthConfig, pollutant: str = "NO2",
                  split_seed: int = 0,
                  feature_cfg: FeatureConfig = FeatureConfig()):
    """Generate a synthetic bundle and prepare it in one call."""
    from .synth import generate
    bundle = generate(cfg)
    grid = make_grid(cfg)
    return prepare(bundle, pollutant, grid, split_seed=split_seed,
                   feature_cfg=feature_cfg)
