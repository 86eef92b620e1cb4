"""Spatial mesh, station placement and evaluation split plan.

The study area is a regular row-major mesh of square cells. Cells hosting
at least one reference-grade station are "context" (labeled) grids; all
others are targets. The split plan carves the context set into
interpolation / test / 3-fold cross-validation pools.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .errors import InsufficientDataError, InvalidInputError

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class GridCell:
    id: int
    row: int
    col: int
    centroid: tuple[float, float]  # (lat rad, lon rad)
    is_context: bool = False


@dataclass(frozen=True)
class Station:
    id: str
    kind: str  # "standardized" | "micro"
    lat: float  # rad
    lon: float  # rad
    grid_id: int = -1


@dataclass(frozen=True)
class GridGraph:
    n_rows: int
    n_cols: int
    cell_size_m: float
    origin: tuple[float, float]  # (lat rad, lon rad) of the south-west corner
    dlat: float  # cell height, rad
    dlon: float  # cell width, rad
    cells: tuple[GridCell, ...]
    stations: tuple[Station, ...] = ()

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    def cell_at(self, row: int, col: int) -> GridCell:
        return self.cells[row * self.n_cols + col]

    def context_ids(self) -> list[int]:
        return [c.id for c in self.cells if c.is_context]

    def centroids(self) -> np.ndarray:
        """[N, 2] array of (lat, lon) in radians."""
        return np.array([c.centroid for c in self.cells])


@dataclass(frozen=True)
class SplitPlan:
    interpolation_ids: frozenset[int]
    test_ids: frozenset[int]
    folds: tuple[tuple[frozenset[int], frozenset[int]], ...]  # (train, validation)
    seed: int

    def cv_pool(self) -> frozenset[int]:
        pool: frozenset[int] = frozenset()
        for train, val in self.folds:
            pool = pool | train | val
        return pool


def _meters_to_dlat(meters: float) -> float:
    return meters / 1000.0 / EARTH_RADIUS_KM


def _meters_to_dlon(meters: float, lat: float) -> float:
    return meters / 1000.0 / (EARTH_RADIUS_KM * math.cos(lat))


def build_grid_graph(bbox: tuple[float, float, float, float],
                     cell_size_m: float) -> GridGraph:
    """Mesh a geographic bounding box into square cells.

    bbox is (lat_min, lon_min, lat_max, lon_max) in radians. Cells are
    indexed row-major (id = row * n_cols + col), rows increasing with
    latitude. The mesh fully covers the bbox, so the outermost cells may
    overhang it.
    """
    lat_min, lon_min, lat_max, lon_max = bbox
    if not (lat_max > lat_min and lon_max > lon_min):
        raise InvalidInputError(f"degenerate bbox {bbox}")
    if cell_size_m <= 0:
        raise InvalidInputError("cell_size_m must be positive")

    lat_mid = 0.5 * (lat_min + lat_max)
    dlat = _meters_to_dlat(cell_size_m)
    dlon = _meters_to_dlon(cell_size_m, lat_mid)
    n_rows = max(1, math.ceil((lat_max - lat_min) / dlat - 1e-9))
    n_cols = max(1, math.ceil((lon_max - lon_min) / dlon - 1e-9))

    cells = []
    for r in range(n_rows):
        for c in range(n_cols):
            centroid = (lat_min + (r + 0.5) * dlat, lon_min + (c + 0.5) * dlon)
            cells.append(GridCell(id=r * n_cols + c, row=r, col=c,
                                  centroid=centroid))
    return GridGraph(n_rows=n_rows, n_cols=n_cols, cell_size_m=cell_size_m,
                     origin=(lat_min, lon_min), dlat=dlat, dlon=dlon,
                     cells=tuple(cells))


def locate(g: GridGraph, lat: float, lon: float) -> int:
    """Grid id containing a point; boundary points go to the smaller id."""
    lat_min, lon_min = g.origin
    dlat, dlon = g.dlat, g.dlon

    def index(x: float, n: int) -> int:
        if x < 0 or x > n:
            raise InvalidInputError(
                f"point ({lat}, {lon}) outside the gridded area")
        i = math.floor(x)
        # A point exactly on a shared edge belongs to the lower-index cell.
        if i == x and i > 0:
            i -= 1
        return min(int(i), n - 1)

    ri = index((lat - lat_min) / dlat, g.n_rows)
    ci = index((lon - lon_min) / dlon, g.n_cols)
    return ri * g.n_cols + ci


def assign_stations(g: GridGraph, stations: list[Station]) -> GridGraph:
    """Attach stations to their grid cells and mark context cells.

    A cell is context iff it hosts at least one standardized station;
    micro-stations never create context cells. Idempotent.
    """
    located = []
    context: set[int] = set()
    for s in stations:
        gid = locate(g, s.lat, s.lon)
        located.append(replace(s, grid_id=gid))
        if s.kind == "standardized":
            context.add(gid)
    cells = tuple(replace(c, is_context=(c.id in context)) for c in g.cells)
    return replace(g, cells=cells, stations=tuple(located))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_grids(context_ids: set[int], seed: int) -> SplitPlan:
    """Partition context grids: 20% interpolation, 10% test, 70% 3-fold CV.

    Percentages round half up; leftover cells after the even fold division
    go to the earlier folds. Uniform random by seed, reproducible.
    """
    ids = sorted(context_ids)
    n = len(ids)
    if n < 10:
        raise InsufficientDataError(f"need >= 10 context grids, got {n}")
    rng = np.random.default_rng(seed)
    perm = [ids[i] for i in rng.permutation(n)]

    n_interp = _round_half_up(0.2 * n)
    n_test = _round_half_up(0.1 * n)
    interp = frozenset(perm[:n_interp])
    test = frozenset(perm[n_interp:n_interp + n_test])
    pool = perm[n_interp + n_test:]

    k = 3
    base, rem = divmod(len(pool), k)
    folds = []
    start = 0
    val_sets = []
    for i in range(k):
        size = base + (1 if i < rem else 0)
        val_sets.append(frozenset(pool[start:start + size]))
        start += size
    for i in range(k):
        train = frozenset(pool) - val_sets[i]
        folds.append((train, val_sets[i]))
    return SplitPlan(interpolation_ids=interp, test_ids=test,
                     folds=tuple(folds), seed=seed)


def read_stations(path) -> list[Station]:
    """Read a stations file (header id,kind,lat_deg,lon_deg; degrees)."""
    df = pd.read_csv(path)
    required = {"id", "kind", "lat_deg", "lon_deg"}
    if not required.issubset(df.columns):
        raise InvalidInputError(
            f"stations file must have columns {sorted(required)}")
    return [Station(id=str(r.id), kind=str(r.kind),
                    lat=math.radians(r.lat_deg), lon=math.radians(r.lon_deg))
            for r in df.itertuples(index=False)]


def write_stations(path, stations: list[Station]) -> None:
    df = pd.DataFrame({
        "id": [s.id for s in stations],
        "kind": [s.kind for s in stations],
        "lat_deg": [math.degrees(s.lat) for s in stations],
        "lon_deg": [math.degrees(s.lon) for s in stations],
    })
    df.to_csv(path, index=False)
