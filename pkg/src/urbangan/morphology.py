"""Radial profiles and polycentricity peak search.

The radial profile x(d) is the mean built-up fraction over the ring of pixels
whose distance from the map centre falls in (d, d + ring_width]. Ring 0 is
closed at 0 so a pixel sitting exactly on the centre is counted. Rings stop at
the inscribed disk (radius = half the map side); corner pixels outside it are
ignored.

Peaks are local maxima of the profile that reach a fraction ``h`` of the
profile maximum and lie at least ``delta_km`` from every taller accepted peak.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DomainError
from .raster import CityMap

DEFAULT_H = 0.5
DEFAULT_DELTA_KM = 5.0


@dataclass(frozen=True, eq=False)
class RadialProfile:
    ring_width: float  # km
    values: np.ndarray
    counts: np.ndarray  # pixels per ring
    max_distance: float  # km
    center: tuple[float, float]
    pixel_size: float  # m

    @property
    def distances(self) -> np.ndarray:
        """Inner edge of each ring in km."""
        return np.arange(len(self.values)) * self.ring_width

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["distance_km", "value"])
        for d, v in zip(self.distances, self.values):
            w.writerow([repr(float(d)), repr(float(v))])
        return buf.getvalue()


@dataclass(frozen=True)
class PeakSet:
    peaks: tuple[tuple[float, float], ...]  # (distance_km, height), by distance
    h: float = DEFAULT_H
    delta_km: float = DEFAULT_DELTA_KM

    def __len__(self):
        return len(self.peaks)

    @property
    def distances(self) -> list[float]:
        return [d for d, _ in self.peaks]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["distance_km", "height"])
        for d, v in self.peaks:
            w.writerow([repr(float(d)), repr(float(v))])
        return buf.getvalue()


def ring_index(width: int, pixel_size: float, ring_width_km: float) -> tuple[np.ndarray, int]:
    """Per-pixel ring id (-1 outside the inscribed disk) and the number of rings."""
    c = (width - 1) / 2.0
    u, v = np.indices((width, width), dtype=np.float64)
    dist_km = np.sqrt((u - c) ** 2 + (v - c) ** 2) * (pixel_size / 1000.0)
    max_distance = width * pixel_size / 2000.0
    n_rings = int(math.ceil(round(max_distance / ring_width_km, 9)))
    k = np.ceil(dist_km / ring_width_km).astype(np.int64) - 1
    # the division can round across a ring edge; settle membership by direct comparison
    k[dist_km <= k * ring_width_km] -= 1
    k[dist_km > (k + 1) * ring_width_km] += 1
    k[dist_km == 0.0] = 0
    k[(dist_km > max_distance) | (k >= n_rings)] = -1
    return k, n_rings


def radial_profile(city: CityMap, ring_width_km: float | None = None, smooth: int = 0) -> RadialProfile:
    """Average built-up fraction per ring around the map centre.

    ``ring_width_km`` defaults to one pixel. ``smooth`` > 1 applies a centred
    moving average of that many rings (edges use the available neighbours).
    """
    if ring_width_km is None:
        ring_width_km = city.pixel_size / 1000.0
    if not ring_width_km > 0:
        raise ArgumentError(f"ring width must be positive, got {ring_width_km}")
    k, n_rings = ring_index(city.width, city.pixel_size, ring_width_km)
    inside = k >= 0
    counts = np.bincount(k[inside], minlength=n_rings)
    sums = np.bincount(k[inside], weights=city.values[inside], minlength=n_rings)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise ArgumentError(f"ring width {ring_width_km} km leaves ring {empty} without pixels")
    values = sums / counts
    # a ring of identical values has that value as its exact mean; the running sum can be an ulp off
    lo = np.full(n_rings, np.inf)
    hi = np.full(n_rings, -np.inf)
    np.minimum.at(lo, k[inside], city.values[inside])
    np.maximum.at(hi, k[inside], city.values[inside])
    values = np.where(lo == hi, lo, values)
    if smooth and smooth > 1:
        values = _moving_average(values, int(smooth))
    c = (city.width - 1) / 2.0
    return RadialProfile(float(ring_width_km), values, counts, city.width * city.pixel_size / 2000.0,
                         (c, c), city.pixel_size)


def _moving_average(values: np.ndarray, window: int) -> np.ndarray:
    half = window // 2
    out = np.empty_like(values)
    for i in range(len(values)):
        out[i] = values[max(0, i - half):i + half + 1].mean()
    return out


def peak_candidates(values) -> list[int]:
    """Indices of local maxima; a plateau contributes its leftmost index."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    out = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[j + 1] == values[i]:
            j += 1
        left_ok = i == 0 or values[i - 1] < values[i]
        right_ok = j == n - 1 or values[j + 1] < values[i]
        if left_ok and right_ok:
            out.append(i)
        i = j + 1
    return out


def find_peaks_array(values, distances, h: float = DEFAULT_H, delta_km: float = DEFAULT_DELTA_KM) -> list[int]:
    """Accepted peak indices for a profile given as plain arrays, sorted by distance."""
    if not 0 < h <= 1:
        raise ArgumentError(f"h must lie in (0, 1], got {h}")
    if not delta_km >= 0:
        raise ArgumentError(f"delta must be non-negative, got {delta_km}")
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        raise DomainError("cannot search peaks in an empty profile")
    top = values.max()
    if not top > 0:
        return []
    threshold = h * top
    order = sorted(peak_candidates(values), key=lambda i: (-values[i], distances[i]))
    accepted: list[int] = []
    for i in order:
        if values[i] < threshold:
            break
        if all(abs(distances[i] - distances[j]) >= delta_km for j in accepted):
            accepted.append(i)
    return sorted(accepted, key=lambda i: distances[i])


def find_peaks(profile: RadialProfile, h: float = DEFAULT_H, delta_km: float = DEFAULT_DELTA_KM) -> PeakSet:
    d = profile.distances
    idx = find_peaks_array(profile.values, d, h, delta_km)
    return PeakSet(tuple((float(d[i]), float(profile.values[i])) for i in idx), h, delta_km)


def count_peaks(city: CityMap, ring_width_km: float | None = None, h: float = DEFAULT_H,
                delta_km: float = DEFAULT_DELTA_KM, smooth: int = 0) -> int:
    return len(find_peaks(radial_profile(city, ring_width_km, smooth), h, delta_km))
