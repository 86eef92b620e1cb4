"""Command-line pipeline orchestration.

Each subcommand reads the structured config file, performs one pipeline
stage, and writes its outputs plus a run manifest (config hash, seed,
version) atomically into the output directory.

Exit codes: 0 success, 2 missing inputs/artifacts, 3 validation failure,
4 numeric divergence.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np
import pandas as pd

from . import __version__
from .config import POLLUTANT_CHOICES, RunConfig, load_config
from .dataio import (atomic_write_csv, load_arrays, load_bundle, save_arrays,
                     write_bundle, write_run_manifest)
from .decompose import stl_decompose
from .errors import (AirgridError, DivergenceError, MissingArtifactError)
from .evaluation import (ABLATION_VARIANTS, evaluate_on_test,
                         missing_ratio_study, run_ablation)
from .features import station_series
from .network import STNetwork
from .pipeline import (GraphSTRegressor, build_training_data, prepare)
from .synth import generate, make_grid
from .training import feature_importance


def _exit_code(err: Exception) -> int:
    if isinstance(err, (MissingArtifactError, FileNotFoundError)):
        return 2
    if isinstance(err, DivergenceError):
        return 4
    return 3


class _Ctx:
    def __init__(self, config, seed, out, pollutant):
        cfg = load_config(config) if config else RunConfig()
        if seed is not None:
            cfg = replace(cfg, split_seed=seed,
                          synth=replace(cfg.synth, seed=seed),
                          train=replace(cfg.train, seed=seed))
        if out is not None:
            cfg = replace(cfg, out_dir=out)
        if pollutant is not None:
            cfg = replace(cfg, pollutant=pollutant)
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)

    def manifest(self, command: str) -> None:
        write_run_manifest(self.out / f"{command}_manifest.json",
                           self.cfg.to_dict(), self.cfg.split_seed)

    def load_prep(self):
        bundle = load_bundle(self.cfg.data_dir)
        grid = make_grid(self.cfg.synth)
        return prepare(bundle, self.cfg.pollutant, grid,
                       split_seed=self.cfg.split_seed,
                       feature_cfg=self.cfg.features)


def _run(ctx_obj, command, fn):
    try:
        fn()
        ctx_obj.manifest(command)
    except AirgridError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(_exit_code(err))
    except FileNotFoundError as err:
        click.echo(f"error: missing input {err}", err=True)
        sys.exit(2)


@click.group()
@click.option("--config", type=click.Path(), default=None,
              help="YAML run configuration")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--pollutant", type=click.Choice(POLLUTANT_CHOICES),
              default=None)
@click.version_option(__version__)
@click.pass_context
def main(ctx, config, seed, out, pollutant):
    """Fine-grained gridded air-quality inference pipeline."""
    try:
        ctx.obj = _Ctx(config, seed, out, pollutant)
    except AirgridError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(_exit_code(err))


@main.command()
@click.pass_obj
def synth(obj):
    """Generate the synthetic-city dataset bundle."""
    def go():
        bundle = generate(obj.cfg.synth)
        write_bundle(obj.cfg.data_dir, bundle)
        click.echo(f"dataset written to {obj.cfg.data_dir}")
    _run(obj, "synth", go)


@main.command()
@click.option("--station", required=True, help="station id to decompose")
@click.pass_obj
def decompose(obj, station):
    """STL-decompose one station series to t,raw,trend,seasonal,residual."""
    def go():
        bundle = load_bundle(obj.cfg.data_dir)
        kind = next((s.kind for s in bundle.stations if s.id == station), None)
        if kind is None:
            raise MissingArtifactError(f"station {station!r} not in bundle")
        coords, values = station_series(bundle, obj.cfg.pollutant, kind)
        ids = [s.id for s in bundle.stations if s.kind == kind]
        raw = values[ids.index(station)]
        dec = stl_decompose(raw, period=obj.cfg.features.stl_period)
        df = pd.DataFrame({"t": np.arange(len(raw)), "raw": raw,
                           "trend": dec.trend, "seasonal": dec.seasonal,
                           "residual": dec.residual})
        atomic_write_csv(obj.out / f"decompose_{station}.csv", df)
        click.echo(f"wrote {obj.out / f'decompose_{station}.csv'}")
    _run(obj, "decompose", go)


@main.command()
@click.pass_obj
def features(obj):
    """Assemble the feature tensor and adjacencies."""
    def go():
        prep = obj.load_prep()
        x = prep.tensor.x_num
        save_arrays(obj.out / "features.bin", obj.out / "features.schema.txt",
                    {"x_num": x, "x_cat": prep.tensor.x_cat.astype(float),
                     "a_od": prep.adj.a_od, "a_se": prep.adj.a_se},
                    extra={"numeric_names": list(prep.tensor.schema.numeric_names),
                           "categorical_names": list(prep.tensor.schema.categorical_names),
                           "layout": "row-major [N,T,U] float64"})
        click.echo(f"features: {x.shape[2]} numeric + "
                   f"{prep.tensor.schema.n_categorical} categorical")
    _run(obj, "features", go)


def _checkpoint_paths(out: Path, fold: int):
    return out / f"checkpoint_fold{fold}.bin", out / f"checkpoint_fold{fold}.txt"


@main.command()
@click.option("--folds", type=int, default=None,
              help="train only the first N folds")
@click.pass_obj
def train(obj, folds):
    """Train one model per cross-validation fold; save checkpoints."""
    def go():
        prep = obj.load_prep()
        n_folds = folds or len(prep.split.folds)
        for fold in range(n_folds):
            est = GraphSTRegressor(model_config=obj.cfg.model,
                                   train_config=obj.cfg.train)
            est.fit(prep, fold=fold)
            pb, pm = _checkpoint_paths(obj.out, fold)
            save_arrays(pb, pm, est.params_,
                        extra={"fold": fold, "pollutant": obj.cfg.pollutant,
                               "model": dataclasses.asdict(obj.cfg.model)})
            atomic_write_csv(obj.out / f"training_log_fold{fold}.csv",
                             est.log_)
            click.echo(f"fold {fold}: best val MAE "
                       f"{est.log_['val_mae'].min():.4f}")
    _run(obj, "train", go)


def _load_estimator(obj, prep, fold):
    pb, pm = _checkpoint_paths(obj.out, fold)
    params, extra = load_arrays(pb, pm)
    est = GraphSTRegressor(model_config=obj.cfg.model,
                           train_config=obj.cfg.train)
    est.data_ = build_training_data(prep, obj.cfg.train)
    est.net_ = STNetwork(obj.cfg.model, prep.tensor.schema, prep.graph)
    est.params_ = params
    return est


@main.command()
@click.option("--fold", type=int, default=0)
@click.pass_obj
def infer(obj, fold):
    """Predict the full grid x hour field with a trained checkpoint."""
    def go():
        prep = obj.load_prep()
        est = _load_estimator(obj, prep, fold)
        field = est.predict(prep)
        n, T = field.shape
        rows = pd.DataFrame({
            "grid_id": np.repeat(np.arange(n), T),
            "row": np.repeat([c.row for c in prep.graph.cells], T),
            "col": np.repeat([c.col for c in prep.graph.cells], T),
            "t": np.tile(np.arange(T), n),
            "value": field.ravel(),
        })
        atomic_write_csv(obj.out / "field.csv", rows)
        click.echo(f"wrote {obj.out / 'field.csv'}")
    _run(obj, "infer", go)


@main.command()
@click.pass_obj
def evaluate(obj):
    """Evaluate trained fold checkpoints on the test grids."""
    def go():
        prep = obj.load_prep()
        rows = []
        from .evaluation import _average, evaluate_on_test
        triples = []
        for fold in range(len(prep.split.folds)):
            est = _load_estimator(obj, prep, fold)
            m = evaluate_on_test(prep, est)
            triples.append(m)
            rows.append({"fold": fold, "mae": m.mae, "rmse": m.rmse,
                         "r2": m.r2})
        avg = _average(triples)
        rows.append({"fold": "mean", "mae": avg.mae, "rmse": avg.rmse,
                     "r2": avg.r2})
        atomic_write_csv(obj.out / "metrics.csv", pd.DataFrame(rows))
        click.echo(f"test MAE {avg.mae:.4f} RMSE {avg.rmse:.4f} "
                   f"R2 {avg.r2:.4f}")
    _run(obj, "evaluate", go)


@main.command()
@click.option("--variant", type=click.Choice(ABLATION_VARIANTS),
              multiple=True, default=ABLATION_VARIANTS)
@click.pass_obj
def ablate(obj, variant):
    """Run ablation variants (each trains its own models)."""
    def go():
        prep = obj.load_prep()
        rows = []
        for v in variant:
            m = run_ablation(v, prep, obj.cfg.model, obj.cfg.train)
            rows.append({"variant": v, "mae": m.mae, "rmse": m.rmse,
                         "r2": m.r2})
            click.echo(f"{v}: MAE {m.mae:.4f}")
        atomic_write_csv(obj.out / "ablation.csv", pd.DataFrame(rows))
    _run(obj, "ablate", go)


@main.command("missing-study")
@click.pass_obj
def missing_study(obj):
    """Corrupt-and-restore pressure test across missing ratios."""
    def go():
        bundle = load_bundle(obj.cfg.data_dir)
        grid = make_grid(obj.cfg.synth)
        table = missing_ratio_study(bundle, grid, obj.cfg.pollutant,
                                    obj.cfg.missing_ratios, obj.cfg.model,
                                    obj.cfg.train,
                                    split_seed=obj.cfg.split_seed,
                                    feature_cfg=obj.cfg.features)
        atomic_write_csv(obj.out / "missing_study.csv", table)
        click.echo(table.to_string(index=False))
    _run(obj, "missing-study", go)


@main.command()
@click.option("--fold", type=int, default=0)
@click.pass_obj
def importance(obj, fold):
    """Gradient-based feature importance from a trained checkpoint."""
    def go():
        prep = obj.load_prep()
        est = _load_estimator(obj, prep, fold)
        train_ids, _ = prep.split.folds[fold]
        report = feature_importance(est.net_, est.params_, est.data_,
                                    train_ids, obj.cfg.train)
        atomic_write_csv(obj.out / "importance.csv", report.to_frame())
        click.echo(report.to_frame().to_string(index=False))
    _run(obj, "importance", go)


if __name__ == "__main__":
    main()
