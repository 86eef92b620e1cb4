"""Seeded synthetic city: ground-truth pollutant fields plus deliberately
degraded micro-station sensors, traffic, geography and weather streams.

The truth field for each pollutant is a sum of spatial Gaussian source
bumps (placed on high-traffic cells) modulated by a diurnal cycle, a slow
citywide trend, a mild meteorological response and noise, clamped at zero.
NO2 peaks nocturnally and O3 in the afternoon, so the two are negatively
correlated. Standardized stations read the truth with small noise;
micro-stations apply a nonlinear gain (truth^0.9), an offset, a slow drift
and larger noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.ndimage import gaussian_filter1d

from .dataio import DatasetBundle
from .errors import InvalidInputError
from .grid import GridGraph, Station, build_grid_graph

DEG = math.pi / 180.0


@dataclass(frozen=True)
class SynthConfig:
    n_rows: int = 20
    n_cols: int = 20
    hours: int = 504  # 21 days
    n_ss: int = 12
    n_ms: int = 60
    gain: float = 1.3
    offset: float = 5.0
    drift_per_day: float = 0.2
    noise_std: float = 2.0
    seed: int = 7
    cell_size_m: float = 500.0
    origin_lat_deg: float = 30.0
    origin_lon_deg: float = 104.0
    n_trucks: int = 15
    n_sources: int = 5
    start_time: str = "2022-03-01T00:00:00"

    def __post_init__(self):
        if self.n_ss < 5:
            raise InvalidInputError("need at least 5 standardized stations")
        if self.hours < 72:
            raise InvalidInputError("need at least 72 hours (3 daily cycles)")


def make_grid(cfg: SynthConfig) -> GridGraph:
    lat0 = cfg.origin_lat_deg * DEG
    lon0 = cfg.origin_lon_deg * DEG
    dlat = cfg.cell_size_m / 1000.0 / 6371.0
    dlon = cfg.cell_size_m / 1000.0 / (6371.0 * math.cos(lat0))
    bbox = (lat0, lon0,
            lat0 + cfg.n_rows * dlat - 1e-12,
            lon0 + cfg.n_cols * dlon - 1e-12)
    g = build_grid_graph(bbox, cfg.cell_size_m)
    assert g.n_rows == cfg.n_rows and g.n_cols == cfg.n_cols
    return g


def _smooth_walk(rng, hours: int, sigma_h: float = 24.0) -> np.ndarray:
    """Zero-mean unit-std slow random trend."""
    w = np.cumsum(rng.normal(size=hours))
    w = gaussian_filter1d(w, sigma=sigma_h)
    w -= w.mean()
    s = w.std()
    return w / s if s > 0 else w


def _source_field(rng, n_rows: int, n_cols: int, n_sources: int) -> np.ndarray:
    """[N] source-strength map in [0, 1], from Gaussian bumps."""
    rr, cc = np.meshgrid(np.arange(n_rows), np.arange(n_cols), indexing="ij")
    field = np.zeros((n_rows, n_cols))
    for _ in range(n_sources):
        r0 = rng.uniform(0, n_rows - 1)
        c0 = rng.uniform(0, n_cols - 1)
        amp = rng.uniform(0.5, 1.0)
        sig = rng.uniform(1.0, max(1.5, max(n_rows, n_cols) / 4.0))
        field += amp * np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2 * sig ** 2))
    field -= field.min()
    if field.max() > 0:
        field /= field.max()
    return field.ravel()


def generate(cfg: SynthConfig) -> DatasetBundle:
    """Generate the full dataset bundle. Deterministic for a fixed seed."""
    rng = np.random.default_rng(cfg.seed)
    g = make_grid(cfg)
    n = g.n_cells
    T = cfg.hours
    hours_of_day = np.arange(T) % 24
    days = np.arange(T) / 24.0

    source = _source_field(rng, cfg.n_rows, cfg.n_cols, cfg.n_sources)

    # weather (one citywide series per factor)
    temp = 15.0 + 8.0 * np.sin(2 * np.pi * (hours_of_day - 9) / 24.0) \
        + 2.0 * _smooth_walk(rng, T)
    blh = 400.0 + 300.0 * np.sin(2 * np.pi * (hours_of_day - 14) / 24.0) \
        + 50.0 * _smooth_walk(rng, T)
    hum = np.clip(60.0 - 1.5 * (temp - 15.0) + 5.0 * _smooth_walk(rng, T), 5, 100)
    pres = 950.0 + 5.0 * _smooth_walk(rng, T)
    wind = np.clip(2.0 + 1.0 * _smooth_walk(rng, T)
                   + 0.5 * np.abs(rng.normal(size=T)), 0.1, None)
    wdir = (180.0 + 120.0 * _smooth_walk(rng, T)) % 360.0
    solar = np.clip(np.sin(2 * np.pi * (hours_of_day - 6) / 24.0), 0, None) \
        * (600.0 + 100.0 * _smooth_walk(rng, T))
    weather = pd.DataFrame({
        "t": np.arange(T), "blh": blh, "temp": temp, "hum": hum,
        "pres": pres, "wind_speed": wind, "wind_dir": wdir, "solar": solar,
    })

    dispersion = 1.0 / (1.0 + 0.15 * wind)

    # pollutant truths
    diurnal = {
        "NO2": 1.0 + 0.6 * np.cos(2 * np.pi * (hours_of_day - 3) / 24.0),
        "O3": 1.0 + 0.6 * np.cos(2 * np.pi * (hours_of_day - 15) / 24.0),
        "PM25": 1.0 + 0.3 * np.cos(2 * np.pi * (hours_of_day - 8) / 24.0),
    }
    base = {"NO2": 25.0, "O3": 60.0, "PM25": 40.0}
    amp = {"NO2": 20.0, "O3": 30.0, "PM25": 25.0}
    trend_amp = {"NO2": 10.0, "O3": 14.0, "PM25": 12.0}
    met_coeff = {"NO2": -0.5, "O3": 1.2, "PM25": -0.3}
    truth: dict[str, np.ndarray] = {}
    for pol in ("NO2", "O3", "PM25"):
        trend = trend_amp[pol] * _smooth_walk(rng, T)
        met = met_coeff[pol] * (temp - temp.mean())
        fld = (base[pol]
               + amp[pol] * source[:, None] * (diurnal[pol] * dispersion)[None, :]
               + (trend + met)[None, :]
               + rng.normal(0.0, 0.5, size=(n, T)))
        truth[pol] = np.clip(fld, 0.0, None)

    # stations
    cell_ids = rng.permutation(n)
    ss_cells = cell_ids[:cfg.n_ss]
    ms_cells = cell_ids[cfg.n_ss:cfg.n_ss + cfg.n_ms]
    stations = []
    for i, cid in enumerate(ss_cells):
        lat, lon = g.cells[cid].centroid
        stations.append(Station(id=f"ss{i:03d}", kind="standardized",
                                lat=lat, lon=lon))
    for i, cid in enumerate(ms_cells):
        lat, lon = g.cells[cid].centroid
        stations.append(Station(id=f"ms{i:03d}", kind="micro",
                                lat=lat, lon=lon))

    readings: dict[str, pd.DataFrame] = {}
    for pol in ("NO2", "O3", "PM25"):
        rows = []
        for i, cid in enumerate(ss_cells):
            v = truth[pol][cid] + rng.normal(0.0, 0.3, size=T)
            rows.append(pd.DataFrame({"station_id": f"ss{i:03d}",
                                      "t": np.arange(T), "value": v}))
        for i, cid in enumerate(ms_cells):
            v = (cfg.gain * np.maximum(truth[pol][cid], 0.0) ** 0.9
                 + cfg.offset + cfg.drift_per_day * days
                 + rng.normal(0.0, cfg.noise_std, size=T))
            rows.append(pd.DataFrame({"station_id": f"ms{i:03d}",
                                      "t": np.arange(T), "value": v}))
        readings[pol] = pd.concat(rows, ignore_index=True)

    # roads and congestion on busier cells
    busy = np.argsort(-source)[:max(4, n // 3)]
    traffic_diurnal = (np.exp(-((hours_of_day - 8) % 24) ** 2 / 18.0)
                       + np.exp(-((hours_of_day - 18) % 24) ** 2 / 18.0))
    road_rows, cong_rows = [], []
    rid = 0
    for cid in busy:
        for _ in range(rng.integers(1, 3)):
            length = rng.uniform(0.2, 1.0)
            road_rows.append({"road_id": f"r{rid:04d}", "grid_id": int(cid),
                              "length_km": length})
            c = (1.0 + 3.0 * source[cid] * traffic_diurnal
                 + rng.normal(0.0, 0.1, size=T))
            cong_rows.append(pd.DataFrame({"road_id": f"r{rid:04d}",
                                           "t": np.arange(T),
                                           "index": np.clip(c, 0.5, None)}))
            rid += 1
    roads = pd.DataFrame(road_rows)
    congestion = pd.concat(cong_rows, ignore_index=True)

    # truck trajectories: random walks biased toward busy cells
    traj_rows = []
    prob = source + 0.05
    prob /= prob.sum()
    for k in range(cfg.n_trucks):
        cid = int(rng.choice(n, p=prob))
        for t in range(T):
            if rng.random() < 0.6:
                r, c = divmod(cid, g.n_cols)
                opts = [(r + dr, c + dc) for dr, dc in
                        ((0, 1), (0, -1), (1, 0), (-1, 0))
                        if 0 <= r + dr < g.n_rows and 0 <= c + dc < g.n_cols]
                weights = np.array([source[rr * g.n_cols + cc] + 0.05
                                    for rr, cc in opts])
                rr, cc = opts[int(rng.choice(len(opts),
                                             p=weights / weights.sum()))]
                cid = rr * g.n_cols + cc
            lat, lon = g.cells[cid].centroid
            jl = rng.uniform(-0.3, 0.3) * g.dlat
            jo = rng.uniform(-0.3, 0.3) * g.dlon
            traj_rows.append((f"truck{k:02d}", t,
                              math.degrees(lat + jl), math.degrees(lon + jo)))
    trajectories = pd.DataFrame(traj_rows,
                                columns=["truck_id", "t", "lat_deg", "lon_deg"])

    # geographic features: tied to the source map, plus one pure-noise column
    geo = pd.DataFrame({
        "grid_id": np.arange(n),
        "poi_commercial": 10.0 * source + rng.normal(0, 0.5, n),
        "poi_industrial": 6.0 * source ** 2 + rng.normal(0, 0.4, n),
        "road_length": 3.0 * source + rng.normal(0, 0.3, n),
        "tree_cover": 0.8 * (1.0 - source) + rng.normal(0, 0.05, n),
        "cropland": np.clip(1.0 - 1.4 * source + rng.normal(0, 0.1, n), 0, None),
        "buildings": 5.0 * source + rng.normal(0, 0.5, n),
        "noise": rng.normal(0.0, 1.0, n),
    })

    truth_frames = {
        pol: pd.DataFrame({
            "grid_id": np.repeat(np.arange(n), T),
            "t": np.tile(np.arange(T), n),
            "value": truth[pol].ravel(),
        }) for pol in truth
    }

    return DatasetBundle(
        stations=stations, readings=readings, trajectories=trajectories,
        roads=roads, congestion=congestion, geographic=geo, weather=weather,
        start_time=pd.Timestamp(cfg.start_time), hours=T, truth=truth_frames,
    )
