"""K-means clustering of radial profiles.

Lloyd iterations from k-means++ seeds, several seeded restarts, best inertia
kept. The number of clusters can be picked by the explained fraction of the
total sum of squares, 1 - inertia(K) / inertia(1).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import seeding
from .errors import ArgumentError, ShapeError, StateError

# inertia may tick up by rounding noise between iterations; anything beyond this is a bug
MONOTONE_SLACK = 1e-9


@dataclass(eq=False)
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, d)
    inertia: float
    assignments: np.ndarray  # (n,)
    seed: int
    history: list[float] = field(default_factory=list)  # inertia after each assignment step, best restart
    n_iter: int = 0

    def to_json(self) -> str:
        return json.dumps({"K": self.k, "centroids": self.centroids.tolist(),
                           "inertia": self.inertia, "seed": self.seed}, sort_keys=True)

    def assignments_csv(self, row_ids: Sequence[str] | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["map_id", "cluster"])
        ids = row_ids if row_ids is not None else [str(i) for i in range(len(self.assignments))]
        for rid, c in zip(ids, self.assignments):
            w.writerow([rid, int(c)])
        return buf.getvalue()


def _as_matrix(data) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"profile matrix must be 2-D with at least one row, got shape {x.shape}")
    return x


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def nearest(x: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid ids (ties -> lowest id) and squared distances."""
    d = _sq_dists(x, c)
    ids = np.argmin(d, axis=1)
    return ids, d[np.arange(len(x)), ids]


def kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # every point already coincides with a centre; fall back to uniform picks
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.uniform(0, total), side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float):
    k = len(centroids)
    history = []
    prev = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        ids, d2 = nearest(x, centroids)
        inertia = float(d2.sum())
        if inertia > prev + MONOTONE_SLACK * max(1.0, prev):
            raise StateError(f"k-means inertia increased from {prev} to {inertia} at iteration {it}")
        history.append(inertia)
        if prev - inertia < tol:
            break
        prev = inertia
        new = np.empty_like(centroids)
        taken = set()
        for j in range(k):
            members = x[ids == j]
            if len(members):
                new[j] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                order = np.argsort(-d2, kind="stable")
                pick = next(i for i in order if i not in taken)
                taken.add(pick)
                new[j] = x[pick]
                d2[pick] = 0.0
        centroids = new
    ids, d2 = nearest(x, centroids)
    return centroids, ids, float(d2.sum()), history, it


def kmeans_fit(data, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6,
               restarts: int = 8) -> ClusterModel:
    x = _as_matrix(data)
    if not 1 <= k <= len(x):
        raise ArgumentError(f"K must satisfy 1 <= K <= rows ({len(x)}), got {k}")
    if restarts < 1 or max_iter < 1:
        raise ArgumentError("restarts and max_iter must be >= 1")
    best = None
    for r in range(restarts):
        init = kmeans_pp(x, k, seeding.rng(seed, "kmeans++", k, r))
        result = _lloyd(x, init, max_iter, tol)
        if best is None or result[2] < best[2]:
            best = result
    centroids, ids, inertia, history, n_iter = best
    return ClusterModel(k, centroids, inertia, ids, seed, history, n_iter)


def total_sum_of_squares(data) -> float:
    x = _as_matrix(data)
    return float(((x - x.mean(axis=0)) ** 2).sum())


@dataclass
class SelectKResult:
    k: int
    explained: dict[int, float]
    inertia: dict[int, float]
    flagged: bool  # True when no k reached the threshold


def select_k(data, k_range: Sequence[int], explained_threshold: float = 0.9, seed: int = 0,
             **fit_kw) -> SelectKResult:
    """Smallest k whose explained sum-of-squares fraction reaches the threshold."""
    x = _as_matrix(data)
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 1 or ks[-1] > len(x):
        raise ArgumentError(f"k_range must be non-empty with 1 <= k <= {len(x)}")
    total = total_sum_of_squares(x)
    explained, inertia = {}, {}
    for k in ks:
        model = kmeans_fit(x, k, seed, **fit_kw)
        inertia[k] = model.inertia
        explained[k] = 0.0 if k == 1 or total == 0 else 1.0 - model.inertia / total
    for k in ks:
        if explained[k] >= explained_threshold:
            return SelectKResult(k, explained, inertia, False)
    k_best = max(ks, key=lambda k: (explained[k], -k))
    return SelectKResult(k_best, explained, inertia, True)


def assign(model: ClusterModel, profile) -> int:
    p = np.asarray(profile, dtype=np.float64).reshape(1, -1)
    if p.shape[1] != model.centroids.shape[1]:
        raise ShapeError(f"profile length {p.shape[1]} != centroid length {model.centroids.shape[1]}")
    return int(nearest(p, model.centroids)[0][0])


def assign_all(model: ClusterModel, data) -> np.ndarray:
    x = _as_matrix(data)
    if x.shape[1] != model.centroids.shape[1]:
        raise ShapeError(f"profile length {x.shape[1]} != centroid length {model.centroids.shape[1]}")
    return nearest(x, model.centroids)[0]
