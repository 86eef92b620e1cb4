"""File formats and atomic I/O.

All tabular interfaces are plain CSV. The feature tensor and model
checkpoints use a documented flat binary layout: float64 arrays written
row-major back to back, with a text manifest (name, shape, offset) beside
them. Every writer goes through a temp-file + rename so outputs are
atomic.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import MissingArtifactError
from .grid import Station, read_stations, write_stations

POLLUTANTS = ("NO2", "O3", "PM25")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def atomic_write_csv(path, df: pd.DataFrame, float_format="%.10g") -> None:
    atomic_write_text(path, df.to_csv(index=False, float_format=float_format))


@dataclass
class DatasetBundle:
    """In-memory mirror of a dataset directory."""

    stations: list[Station]
    readings: dict[str, pd.DataFrame]  # pollutant -> station_id,t,value
    trajectories: pd.DataFrame  # truck_id,t,lat_deg,lon_deg
    roads: pd.DataFrame  # road_id,grid_id,length_km
    congestion: pd.DataFrame  # road_id,t,index
    geographic: pd.DataFrame  # grid_id,<feature columns>
    weather: pd.DataFrame  # t,<7 meteorological columns>
    start_time: pd.Timestamp
    hours: int
    truth: dict[str, pd.DataFrame] = field(default_factory=dict)

    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start_time, periods=self.hours, freq="h")


def write_bundle(dirpath, bundle: DatasetBundle) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    write_stations(d / "stations.csv", bundle.stations)
    for pol, df in bundle.readings.items():
        atomic_write_csv(d / f"readings_{pol}.csv", df)
    atomic_write_csv(d / "trajectories.csv", bundle.trajectories)
    atomic_write_csv(d / "roads.csv", bundle.roads)
    atomic_write_csv(d / "congestion.csv", bundle.congestion)
    atomic_write_csv(d / "geographic.csv", bundle.geographic)
    atomic_write_csv(d / "weather.csv", bundle.weather)
    for pol, df in bundle.truth.items():
        atomic_write_csv(d / f"truth_{pol}.csv", df)
    meta = {"start_time": bundle.start_time.isoformat(),
            "hours": int(bundle.hours),
            "pollutants": sorted(bundle.readings)}
    atomic_write_text(d / "meta.json", json.dumps(meta, indent=2))


def load_bundle(dirpath) -> DatasetBundle:
    d = Path(dirpath)
    meta_path = d / "meta.json"
    if not meta_path.exists():
        raise MissingArtifactError(f"no dataset at {d} (missing meta.json)")
    meta = json.loads(meta_path.read_text())
    readings = {pol: pd.read_csv(d / f"readings_{pol}.csv")
                for pol in meta["pollutants"]}
    truth = {}
    for pol in meta["pollutants"]:
        tp = d / f"truth_{pol}.csv"
        if tp.exists():
            truth[pol] = pd.read_csv(tp)
    return DatasetBundle(
        stations=read_stations(d / "stations.csv"),
        readings=readings,
        trajectories=pd.read_csv(d / "trajectories.csv"),
        roads=pd.read_csv(d / "roads.csv"),
        congestion=pd.read_csv(d / "congestion.csv"),
        geographic=pd.read_csv(d / "geographic.csv"),
        weather=pd.read_csv(d / "weather.csv"),
        start_time=pd.Timestamp(meta["start_time"]),
        hours=int(meta["hours"]),
        truth=truth,
    )


def save_arrays(path_bin, path_manifest, arrays: dict[str, np.ndarray],
                extra: dict | None = None) -> None:
    """Flat binary of float64 arrays plus a text manifest.

    Manifest lines: name<TAB>shape<TAB>byte offset. A JSON header line
    carries any extra metadata (config hash, dims).
    """
    blob = bytearray()
    lines = [json.dumps(extra or {}, sort_keys=True)]
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype=np.float64)
        lines.append(f"{name}\t{','.join(map(str, a.shape))}\t{len(blob)}")
        blob += a.tobytes()
    atomic_write_bytes(path_bin, bytes(blob))
    atomic_write_text(path_manifest, "\n".join(lines) + "\n")


def load_arrays(path_bin, path_manifest) -> tuple[dict[str, np.ndarray], dict]:
    pb, pm = Path(path_bin), Path(path_manifest)
    if not pb.exists() or not pm.exists():
        raise MissingArtifactError(f"missing checkpoint {pb} / {pm}")
    lines = pm.read_text().strip().split("\n")
    extra = json.loads(lines[0])
    blob = pb.read_bytes()
    out = {}
    for line in lines[1:]:
        name, shape_s, off_s = line.split("\t")
        shape = tuple(int(s) for s in shape_s.split(",") if s)
        n = int(np.prod(shape)) if shape else 1
        off = int(off_s)
        a = np.frombuffer(blob, dtype=np.float64, count=n, offset=off)
        out[name] = a.reshape(shape).copy()
    return out, extra


def config_hash(obj) -> str:
    """Stable short hash of a JSON-serializable config."""
    s = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(s.encode()).hexdigest()[:16]


def write_run_manifest(path, config_obj, seed: int) -> None:
    from . import __version__
    manifest = {"config_hash": config_hash(config_obj),
                "seed": int(seed),
                "version": __version__}
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
