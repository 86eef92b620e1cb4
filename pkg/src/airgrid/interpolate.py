"""Great-circle distance, IDW / KNN spatial interpolation and the
pretext-task label fields.

Coordinates are (lat, lon) in radians throughout. Distances use the
haversine formula with an earth radius of 6371 km.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NoContextError
from .grid import EARTH_RADIUS_KM, GridGraph


@dataclass(frozen=True)
class InterpolationField:
    values: np.ndarray  # [N grids, T hours]
    method: str  # "idw" | "knn"
    p: float | None = None
    k: int | None = None


def haversine(a, b) -> float:
    """Great-circle distance in km between two (lat, lon) points in radians."""
    lat1, lon1 = a
    lat2, lon2 = b
    s = (np.sin((lat2 - lat1) / 2.0) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(s, 0.0, 1.0)))


def haversine_matrix(targets: np.ndarray, contexts: np.ndarray) -> np.ndarray:
    """Pairwise great-circle distances, km. targets [M,2], contexts [C,2]."""
    lat1 = targets[:, 0][:, None]
    lon1 = targets[:, 1][:, None]
    lat2 = contexts[:, 0][None, :]
    lon2 = contexts[:, 1][None, :]
    s = (np.sin((lat2 - lat1) / 2.0) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(s, 0.0, 1.0)))


def idw_weights(targets: np.ndarray, contexts: np.ndarray,
                p: float) -> np.ndarray:
    """Normalized inverse-distance weights [M targets, C contexts].

    A target coinciding with a context point (d = 0) takes that context's
    value exactly: its weight row is an indicator, matching the d -> 0
    limit of the weights.
    """
    if len(contexts) == 0:
        raise NoContextError("IDW requires at least one context point")
    if p <= 0:
        raise InvalidInputError("IDW exponent p must be positive")
    d = haversine_matrix(targets, contexts)
    w = np.zeros_like(d)
    zero = d <= 1e-12
    hit = zero.any(axis=1)
    if hit.any():
        rows = np.where(hit)[0]
        for r in rows:
            cols = np.where(zero[r])[0]
            w[r, cols[0]] = 1.0
    rest = ~hit
    if rest.any():
        inv = d[rest] ** (-p)
        w[rest] = inv / inv.sum(axis=1, keepdims=True)
    return w


def idw(targets: np.ndarray, contexts: np.ndarray, values: np.ndarray,
        p: float = 2.0) -> np.ndarray:
    """Inverse-distance-weighted interpolation.

    targets [M,2] and contexts [C,2] in radians; values [C] or [C,T].
    Returns [M] or [M,T].
    """
    w = idw_weights(np.asarray(targets, float), np.asarray(contexts, float), p)
    return w @ np.asarray(values, float)


def knn_interpolate(targets: np.ndarray, contexts: np.ndarray,
                    values: np.ndarray, k: int) -> np.ndarray:
    """Unweighted mean of the k nearest context values.

    Distance ties are broken by smaller context index (stable sort), which
    for grid-attached contexts means the smaller grid id.
    """
    contexts = np.asarray(contexts, float)
    if k < 1 or k > len(contexts):
        raise InvalidInputError(
            f"k={k} out of range for {len(contexts)} context points")
    d = haversine_matrix(np.asarray(targets, float), contexts)
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    vals = np.asarray(values, float)
    return vals[order].mean(axis=1)


def generate_ss_labels(g: GridGraph, context_coords: np.ndarray,
                       context_values: np.ndarray, p: float = 2.0,
                       method: str = "idw", k: int | None = None,
                       ) -> InterpolationField:
    """Interpolate context readings to every grid cell, per hour.

    context_values is [C, T]; the contexts must come from the split plan's
    interpolation grids only. Returns an InterpolationField over all N
    grids. With method="knn" the ablation's KNN labels are produced
    instead.
    """
    context_coords = np.asarray(context_coords, float)
    if context_coords.shape[0] == 0:
        raise NoContextError("interpolation grid set is empty")
    targets = g.centroids()
    if method == "idw":
        field = idw(targets, context_coords, context_values, p=p)
        return InterpolationField(values=field, method="idw", p=p)
    if method == "knn":
        kk = k if k is not None else min(3, context_coords.shape[0])
        field = knn_interpolate(targets, context_coords, context_values, k=kk)
        return InterpolationField(values=field, method="knn", k=kk)
    raise InvalidInputError(f"unknown interpolation method {method!r}")
