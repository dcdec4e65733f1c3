"""Centroidal Voronoi tessellation archive over a 2-D descriptor space.

One occupant per niche. Niches are the Voronoi cells of k centroids fitted
with Lloyd's algorithm to uniform samples of the unit square, so cells have
roughly equal mass under a uniform descriptor distribution.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable

import numpy as np

from .kdtree import KdTree

logger = logging.getLogger(__name__)

__all__ = [
    "ArchiveStats",
    "Cell",
    "CentroidSet",
    "CvtArchive",
    "Descriptor",
    "EmptyArchiveError",
    "InsertOutcome",
    "descriptor_distance",
    "generate_centroids",
]

LLOYD_MAX_ITERATIONS = 100
LLOYD_SHIFT_TOLERANCE = 1e-6
DEFAULT_CENTROID_SAMPLES = 25_000


@dataclass(frozen=True)
class Descriptor:
    """Point in the unit square; coordinates clamp into [0, 1] on construction."""

    x: float
    y: float

    def __post_init__(self) -> None:
        x = float(self.x)
        y = float(self.y)
        if math.isnan(x) or math.isnan(y):
            raise ValueError("descriptor coordinates must not be NaN")
        object.__setattr__(self, "x", min(1.0, max(0.0, x)))
        object.__setattr__(self, "y", min(1.0, max(0.0, y)))

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


def descriptor_distance(a: Descriptor, b: Descriptor) -> float:
    dx = a.x - b.x
    dy = a.y - b.y
    return math.sqrt(dx * dx + dy * dy)


class CentroidSet:
    """Fixed niche centroids plus the exact nearest-neighbor tree over them."""

    def __init__(self, points: np.ndarray, seed: int) -> None:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("centroids must have shape (k, 2)")
        if len(pts) == 0:
            raise ValueError("need at least one centroid")
        if len(pts) > 1:
            d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
            np.fill_diagonal(d2, np.inf)
            if d2.min() == 0.0:
                raise ValueError("centroids must be pairwise distinct")
        self.points = pts
        self.seed = int(seed)
        self._tree = KdTree(pts)

    @property
    def k(self) -> int:
        return len(self.points)

    def nearest(self, descriptor: Descriptor) -> int:
        """Index of the closest centroid; ties resolve to the lowest index."""
        return self._tree.nearest(descriptor.as_tuple())


_centroid_cache: dict[tuple[int, int, int], CentroidSet] = {}


def generate_centroids(
    k: int,
    n_samples: int = DEFAULT_CENTROID_SAMPLES,
    seed: int = 0,
) -> CentroidSet:
    """Fit k centroids to uniform unit-square samples with Lloyd's algorithm.

    The sample stream is exactly one ``rng.random((n_samples, 2))`` draw from
    ``np.random.default_rng(seed)``; the first k samples seed the centroids.
    Assignment ties go to the lowest centroid index, empty clusters keep
    their previous centroid, and iteration stops after
    ``LLOYD_MAX_ITERATIONS`` rounds or when the largest centroid shift drops
    below ``LLOYD_SHIFT_TOLERANCE``. Cluster means are accumulated in sample
    order, which keeps the result reproducible by a scalar re-implementation.
    Results are cached per (k, n_samples, seed); treat them as read-only.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if n_samples < k:
        raise ValueError("need at least k samples")
    key = (int(k), int(n_samples), int(seed))
    cached = _centroid_cache.get(key)
    if cached is not None:
        return cached

    rng = np.random.default_rng(seed)
    samples = rng.random((n_samples, 2))
    sx = np.ascontiguousarray(samples[:, 0])
    sy = np.ascontiguousarray(samples[:, 1])
    centroids = samples[:k].copy()
    dx = np.empty((n_samples, k))
    dy = np.empty((n_samples, k))
    for _ in range(LLOYD_MAX_ITERATIONS):
        np.subtract(sx[:, None], centroids[None, :, 0], out=dx)
        np.subtract(sy[:, None], centroids[None, :, 1], out=dy)
        np.multiply(dx, dx, out=dx)
        np.multiply(dy, dy, out=dy)
        np.add(dx, dy, out=dx)
        assign = dx.argmin(axis=1)
        counts = np.bincount(assign, minlength=k)
        sums_x = np.bincount(assign, weights=sx, minlength=k)
        sums_y = np.bincount(assign, weights=sy, minlength=k)
        new = centroids.copy()
        occupied = counts > 0
        new[occupied, 0] = sums_x[occupied] / counts[occupied]
        new[occupied, 1] = sums_y[occupied] / counts[occupied]
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < LLOYD_SHIFT_TOLERANCE:
            break

    result = CentroidSet(centroids, seed=seed)
    _centroid_cache[key] = result
    return result


class InsertOutcome(Enum):
    ADDED_TO_EMPTY = "added_to_empty"
    REPLACED = "replaced"
    REJECTED = "rejected"
    NOT_FINITE = "not_finite"

    @property
    def added(self) -> bool:
        return self in (InsertOutcome.ADDED_TO_EMPTY, InsertOutcome.REPLACED)


@dataclass
class Cell:
    centroid_index: int
    occupant: Any
    score: float
    descriptor: Descriptor


class EmptyArchiveError(RuntimeError):
    pass


@dataclass(frozen=True)
class ArchiveStats:
    filled: int
    best_score: float | None
    mean_score: float | None


class CvtArchive:
    """Single-writer elite map; challengers with equal scores are rejected."""

    def __init__(self, centroids: CentroidSet, lower_is_better: bool) -> None:
        self.centroids = centroids
        self.lower_is_better = lower_is_better
        self._cells: dict[int, Cell] = {}

    @property
    def cell_count(self) -> int:
        return len(self._cells)

    def filled(self) -> list[Cell]:
        return [self._cells[i] for i in sorted(self._cells)]

    def cell(self, centroid_index: int) -> Cell | None:
        return self._cells.get(centroid_index)

    def _beats(self, challenger: float, incumbent: float) -> bool:
        if self.lower_is_better:
            return challenger < incumbent
        return challenger > incumbent

    def try_insert(self, occupant: Any, descriptor: Descriptor, score: float) -> InsertOutcome:
        score = float(score)
        if not math.isfinite(score):
            return InsertOutcome.NOT_FINITE
        idx = self.centroids.nearest(descriptor)
        cell = self._cells.get(idx)
        if cell is None:
            self._cells[idx] = Cell(idx, occupant, score, descriptor)
            return InsertOutcome.ADDED_TO_EMPTY
        if self._beats(score, cell.score):
            cell.occupant = occupant
            cell.score = score
            cell.descriptor = descriptor
            return InsertOutcome.REPLACED
        return InsertOutcome.REJECTED

    def best_cell(self) -> Cell:
        """Cell with the best score; equal scores go to the lowest index."""
        if not self._cells:
            raise EmptyArchiveError("archive has no occupants")
        best: Cell | None = None
        for idx in sorted(self._cells):
            cell = self._cells[idx]
            if best is None or self._beats(cell.score, best.score):
                best = cell
        assert best is not None
        return best

    def best_occupant(self) -> Any:
        return self.best_cell().occupant

    def nearest_occupants(self, descriptor: Descriptor, m: int) -> list[Cell]:
        """Up to m filled cells closest to the query descriptor.

        Distance is measured to each cell's stored occupant descriptor, not
        its centroid. A cell at exactly zero distance is the query's own
        occupant (two occupants cannot share a descriptor without sharing a
        cell) and is excluded.
        """
        ranked: list[tuple[float, int, Cell]] = []
        for idx in sorted(self._cells):
            cell = self._cells[idx]
            dist = descriptor_distance(descriptor, cell.descriptor)
            if dist == 0.0:
                continue
            ranked.append((dist, idx, cell))
        ranked.sort(key=lambda item: (item[0], item[1]))
        return [cell for _, _, cell in ranked[:m]]

    def stats(self) -> ArchiveStats:
        if not self._cells:
            return ArchiveStats(filled=0, best_score=None, mean_score=None)
        scores = [c.score for c in self._cells.values()]
        best = min(scores) if self.lower_is_better else max(scores)
        return ArchiveStats(
            filled=len(scores),
            best_score=best,
            mean_score=sum(scores) / len(scores),
        )

    def to_payload(self, encode_occupant: Callable[[Any], Any]) -> dict:
        return {
            "seed": self.centroids.seed,
            "k": self.centroids.k,
            "centroids": [[float(x), float(y)] for x, y in self.centroids.points],
            "cells": [
                {
                    "centroid_index": cell.centroid_index,
                    "descriptor": [cell.descriptor.x, cell.descriptor.y],
                    "score": cell.score,
                    "occupant": encode_occupant(cell.occupant),
                }
                for cell in self.filled()
            ],
        }

    @classmethod
    def from_payload(
        cls,
        payload: dict,
        decode_occupant: Callable[[Any], Any],
        lower_is_better: bool,
    ) -> "CvtArchive":
        centroids = np.asarray(payload["centroids"], dtype=float)
        if len(centroids) != payload["k"]:
            raise ValueError("centroid count does not match k")
        archive = cls(CentroidSet(centroids, seed=payload["seed"]), lower_is_better)
        for raw in payload["cells"]:
            idx = int(raw["centroid_index"])
            descriptor = Descriptor(raw["descriptor"][0], raw["descriptor"][1])
            archive._cells[idx] = Cell(
                idx, decode_occupant(raw["occupant"]), float(raw["score"]), descriptor
            )
        return archive
