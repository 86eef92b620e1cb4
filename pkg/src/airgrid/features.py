"""Feature tensor assembly: sensor trends, interpolated co-pollutants,
meteorology, traffic, geography, timestamps, and both graph adjacencies.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from sklearn.cluster import KMeans

from .decompose import stl_decompose, normalize_trend
from .errors import InvalidInputError, SchemaError, InsufficientDataError
from .grid import GridGraph, locate
from .interpolate import idw

REP_MAPPING = {"NO2": "O3", "O3": "NO2", "PM25": "NO2"}

HOUR_CARD = 24
DOW_CARD = 7


@dataclass(frozen=True)
class FeatureSchema:
    numeric_names: tuple[str, ...]
    categorical_names: tuple[str, ...] = ("hour_of_day", "day_of_week")
    cardinalities: tuple[int, ...] = (HOUR_CARD, DOW_CARD)
    embed_dims: tuple[int, ...] = (8, 8)

    @property
    def n_numeric(self) -> int:
        return len(self.numeric_names)

    @property
    def n_categorical(self) -> int:
        return len(self.categorical_names)

    def restrict(self, numeric_keep, categorical_keep) -> "FeatureSchema":
        num = tuple(n for n in self.numeric_names if n in numeric_keep)
        keep_idx = [i for i, n in enumerate(self.categorical_names)
                    if n in categorical_keep]
        return FeatureSchema(
            numeric_names=num,
            categorical_names=tuple(self.categorical_names[i] for i in keep_idx),
            cardinalities=tuple(self.cardinalities[i] for i in keep_idx),
            embed_dims=tuple(self.embed_dims[i] for i in keep_idx),
        )


@dataclass
class FeatureTensor:
    x_num: np.ndarray  # [N, T, U] float
    x_cat: np.ndarray  # [N, T, V] int
    schema: FeatureSchema

    def __post_init__(self):
        n, t, u = self.x_num.shape
        if u != self.schema.n_numeric:
            raise SchemaError(
                f"{u} numeric columns vs schema {self.schema.n_numeric}")
        if self.x_cat.shape != (n, t, self.schema.n_categorical):
            raise SchemaError("categorical tensor shape mismatch")
        for j, card in enumerate(self.schema.cardinalities):
            col = self.x_cat[:, :, j]
            if col.min() < 0 or col.max() >= card:
                raise SchemaError(
                    f"categorical feature {self.schema.categorical_names[j]} "
                    f"out of range [0, {card})")

    def select_numeric(self, names) -> "FeatureTensor":
        idx = [self.schema.numeric_names.index(n) for n in names]
        schema = replace(self.schema, numeric_names=tuple(names))
        return FeatureTensor(x_num=self.x_num[:, :, idx],
                             x_cat=self.x_cat, schema=schema)


@dataclass(frozen=True)
class AdjacencyPair:
    a_od: np.ndarray  # [N, N] binary, unit diagonal
    a_se: np.ndarray  # [N, N] binary, symmetric, unit diagonal


@dataclass(frozen=True)
class RoadSegment:
    road_id: str
    grid_id: int
    length_in_grid: float  # km
    congestion: np.ndarray  # [T] dimensionless index


def build_od_adjacency(trajectories, n_grids: int,
                       symmetrize: bool = False) -> np.ndarray:
    """One-hop origin-destination adjacency from truck trajectory points.

    trajectories is an iterable of (truck_id, t, grid_id), sorted by time
    within each truck. A(i, j) = 1 iff some truck's consecutive points
    moved grid i -> j (i != j); the diagonal is set to 1 so no grid is
    isolated.
    """
    a = np.eye(n_grids)
    last: dict = {}
    for truck, t, gid in trajectories:
        if truck in last:
            pt, pg = last[truck]
            if t < pt:
                raise InvalidInputError(
                    f"trajectory of truck {truck} not sorted by time")
            if pg != gid:
                a[pg, gid] = 1.0
        last[truck] = (t, gid)
    if symmetrize:
        a = np.maximum(a, a.T)
    return a


def grid_congestion_index(segments: list[RoadSegment], grid_id: int,
                          t: int) -> float:
    """Road-length-weighted mean congestion within a grid cell; 0 if no roads."""
    num = 0.0
    den = 0.0
    for s in segments:
        if s.grid_id != grid_id:
            continue
        num += s.congestion[t] * s.length_in_grid
        den += s.length_in_grid
    return num / den if den > 0 else 0.0


def congestion_matrix(segments: list[RoadSegment], n_grids: int,
                      hours: int) -> np.ndarray:
    """Vectorized [N, T] grid congestion index."""
    num = np.zeros((n_grids, hours))
    den = np.zeros(n_grids)
    for s in segments:
        num[s.grid_id] += np.asarray(s.congestion[:hours]) * s.length_in_grid
        den[s.grid_id] += s.length_in_grid
    out = np.zeros_like(num)
    nz = den > 0
    out[nz] = num[nz] / den[nz, None]
    return out


def build_semantic_adjacency(x_ge: np.ndarray, k: int = 8, seed: int = 0,
                             n_restarts: int = 20,
                             max_iter: int = 300) -> np.ndarray:
    """Cluster grids on standardized geographic features; same-cluster
    pairs are adjacent. Symmetric with unit diagonal by construction."""
    x = np.asarray(x_ge, float)
    n = x.shape[0]
    if k < 1 or k > n:
        raise InvalidInputError(f"k={k} out of range for {n} grids")
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    z = (x - mu) / sd
    km = KMeans(n_clusters=k, n_init=n_restarts, max_iter=max_iter,
                random_state=seed)
    labels = km.fit_predict(z)
    a = (labels[:, None] == labels[None, :]).astype(float)
    return a


def truck_flow(trajectories, grid_id: int, hour: int) -> int:
    """Count of trajectory points recorded in (grid, hour)."""
    return sum(1 for _, t, gid in trajectories
               if gid == grid_id and t == hour)


def flow_matrix(trajectories, n_grids: int, hours: int) -> np.ndarray:
    out = np.zeros((n_grids, hours))
    for _, t, gid in trajectories:
        if 0 <= t < hours:
            out[gid, t] += 1
    return out


def encode_timestamps(ts) -> np.ndarray:
    """[T, 2] integer columns: hour of day (0-23), day of week (Monday=0)."""
    idx = pd.DatetimeIndex(ts)
    return np.column_stack([idx.hour.to_numpy(), idx.dayofweek.to_numpy()])


def fill_missing(series) -> np.ndarray:
    """Fill NaN gaps: interior by linear interpolation in time, a leading
    gap by the first observed value, a trailing gap by the last observed
    value. Identity on complete series."""
    x = np.asarray(series, float).copy()
    obs = np.flatnonzero(~np.isnan(x))
    if obs.size == 0:
        raise InsufficientDataError("entirely-missing series is unrecoverable")
    if obs.size == len(x):
        return x
    xi = np.arange(len(x))
    x = np.interp(xi, obs, x[obs])
    return x


def rep_feature(bundle, g: GridGraph, target: str, p: float = 2.0) -> np.ndarray:
    """IDW field [N, T] of the most relevant co-pollutant, interpolated
    from standardized-station readings."""
    if target not in REP_MAPPING:
        raise InvalidInputError(f"unknown pollutant {target!r}")
    rep = REP_MAPPING[target]
    coords, values = station_series(bundle, rep, kind="standardized")
    field_ = idw(g.centroids(), coords, values, p=p)
    return field_


def station_series(bundle, pollutant: str, kind: str,
                   fill: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Per-station hourly series for one pollutant and station kind.

    Returns (coords [C,2] radians, values [C,T]); gaps filled unless
    fill=False (then NaN where missing).
    """
    df = bundle.readings[pollutant]
    wanted = [s for s in bundle.stations if s.kind == kind]
    coords = np.array([(s.lat, s.lon) for s in wanted])
    T = bundle.hours
    values = np.full((len(wanted), T), np.nan)
    by_station = {sid: grp for sid, grp in df.groupby("station_id")}
    for i, s in enumerate(wanted):
        grp = by_station.get(s.id)
        if grp is None:
            continue
        t = grp["t"].to_numpy(int)
        v = grp["value"].to_numpy(float)
        ok = (t >= 0) & (t < T)
        values[i, t[ok]] = v[ok]
    if fill:
        values = np.vstack([fill_missing(row) for row in values])
    return coords, values


def trend_feature(bundle, g: GridGraph, pollutant: str, p: float = 2.0,
                  period: int = 24) -> np.ndarray:
    """Normalized micro-station trend, IDW-spread to every grid. [N, T]."""
    coords, values = station_series(bundle, pollutant, kind="micro")
    if len(coords) == 0:
        raise InsufficientDataError("no micro stations in bundle")
    trends = []
    for row in values:
        dec = stl_decompose(row, period=period)
        z, _ = normalize_trend(dec.trend)
        trends.append(z)
    return idw(g.centroids(), coords, np.vstack(trends), p=p)


def context_labels(bundle, g: GridGraph, pollutant: str) -> np.ndarray:
    """[N, T] supervised labels: standardized-station readings on context
    grids (mean when a cell hosts several), NaN elsewhere."""
    coords, values = station_series(bundle, pollutant, kind="standardized")
    y = np.full((g.n_cells, bundle.hours), np.nan)
    counts = np.zeros(g.n_cells)
    sums = np.zeros((g.n_cells, bundle.hours))
    ss = [s for s in bundle.stations if s.kind == "standardized"]
    for i, s in enumerate(ss):
        gid = locate(g, s.lat, s.lon)
        sums[gid] += values[i]
        counts[gid] += 1
    ctx = counts > 0
    y[ctx] = sums[ctx] / counts[ctx, None]
    return y


@dataclass(frozen=True)
class FeatureConfig:
    idw_p: float = 2.0
    kmeans_k: int = 8
    kmeans_restarts: int = 20
    kmeans_seed: int = 0
    symmetrize_od: bool = False
    include_truck_flow: bool | None = None  # None: only for PM25
    stl_period: int = 24


def road_segments(bundle) -> list[RoadSegment]:
    cong = {rid: grp.sort_values("t")["index"].to_numpy(float)
            for rid, grp in bundle.congestion.groupby("road_id")}
    segs = []
    for r in bundle.roads.itertuples(index=False):
        c = cong.get(r.road_id, np.zeros(bundle.hours))
        segs.append(RoadSegment(road_id=str(r.road_id), grid_id=int(r.grid_id),
                                length_in_grid=float(r.length_km),
                                congestion=c))
    return segs


def trajectory_points(bundle, g: GridGraph):
    """(truck_id, t, grid_id) tuples, time-sorted within truck."""
    df = bundle.trajectories.sort_values(["truck_id", "t"])
    pts = []
    for r in df.itertuples(index=False):
        gid = locate(g, np.radians(r.lat_deg), np.radians(r.lon_deg))
        pts.append((r.truck_id, int(r.t), gid))
    return pts


def assemble_features(bundle, g: GridGraph, pollutant: str,
                      cfg: FeatureConfig = FeatureConfig(),
                      ) -> tuple[FeatureTensor, AdjacencyPair]:
    """Build the full feature tensor and both adjacencies for one target
    pollutant."""
    if pollutant not in REP_MAPPING:
        raise InvalidInputError(f"unknown pollutant {pollutant!r}")
    n, T = g.n_cells, bundle.hours

    names: list[str] = []
    cols: list[np.ndarray] = []

    cols.append(trend_feature(bundle, g, pollutant, p=cfg.idw_p,
                              period=cfg.stl_period))
    names.append("trend")

    cols.append(rep_feature(bundle, g, pollutant, p=cfg.idw_p))
    names.append(f"rep_{REP_MAPPING[pollutant]}")

    met_cols = [c for c in bundle.weather.columns if c != "t"]
    met = bundle.weather.sort_values("t")[met_cols].to_numpy(float)[:T]
    for j, name in enumerate(met_cols):
        cols.append(np.broadcast_to(met[:, j][None, :], (n, T)).copy())
        names.append(f"met_{name}")

    cols.append(congestion_matrix(road_segments(bundle), n, T))
    names.append("congestion_index")

    geo = bundle.geographic.sort_values("grid_id")
    if len(geo) != n:
        raise SchemaError(
            f"geographic file has {len(geo)} rows, expected {n}")
    ge_cols = [c for c in geo.columns if c != "grid_id"]
    x_ge = geo[ge_cols].to_numpy(float)
    for j, name in enumerate(ge_cols):
        cols.append(np.broadcast_to(x_ge[:, j][:, None], (n, T)).copy())
        names.append(f"ge_{name}")

    pts = trajectory_points(bundle, g)
    include_flow = (cfg.include_truck_flow if cfg.include_truck_flow is not None
                    else pollutant == "PM25")
    if include_flow:
        cols.append(flow_matrix(pts, n, T))
        names.append("truck_flow")

    x_num = np.stack(cols, axis=-1)  # [N, T, U]
    if not np.isfinite(x_num).all():
        raise SchemaError("non-finite values in assembled numeric features")

    tcols = encode_timestamps(bundle.timestamps())  # [T, 2]
    x_cat = np.broadcast_to(tcols[None, :, :], (n, T, 2)).copy().astype(int)

    schema = FeatureSchema(numeric_names=tuple(names))
    tensor = FeatureTensor(x_num=x_num, x_cat=x_cat, schema=schema)

    a_od = build_od_adjacency(pts, n, symmetrize=cfg.symmetrize_od)
    a_se = build_semantic_adjacency(x_ge, k=min(cfg.kmeans_k, n),
                                    seed=cfg.kmeans_seed,
                                    n_restarts=cfg.kmeans_restarts)
    return tensor, AdjacencyPair(a_od=a_od, a_se=a_se)
