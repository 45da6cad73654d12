"""Training corpora: procedural toy cities and raster ingestion.

Toy cities are sums of isotropic Gaussian density bumps with optional speckle
noise and, for the coastal archetype, a half-plane of water. They stand in for
real footprint maps at desk scale and have analytically predictable radial
profiles.

Every corpus map is produced by the same chain: window of ``side_km`` ->
block mean to ``agg_px_size`` -> resample to ``final_width`` pixels.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import seeding
from .errors import ArgumentError, ParseError, UrbanGanError, with_context
from .raster import (CityMap, MapMeta, SourceRaster, block_aggregate, extract_window,
                     read_map, resize_to, window_side_px, write_map)

ARCHETYPES = ("monocentric", "polycentric", "coastal")
POLY_INNER_KM = 2.0


@dataclass(frozen=True)
class ToyCitySpec:
    archetype: str = "monocentric"
    n_centers: int = 1
    center_spread: float = 20.0  # km
    density_scale: float = 1.0
    noise_level: float = 0.0
    seed: int = 0
    core_radius_km: float = 2.5

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise ArgumentError(f"archetype must be one of {ARCHETYPES}, got {self.archetype!r}")
        if self.archetype == "monocentric" and self.n_centers != 1:
            object.__setattr__(self, "n_centers", 1)
        if self.archetype == "polycentric" and self.n_centers < 2:
            raise ArgumentError("polycentric cities need n_centers >= 2")
        if self.n_centers < 1:
            raise ArgumentError("n_centers must be >= 1")
        if not self.center_spread >= 0:
            raise ArgumentError("center_spread must be >= 0")
        if not self.density_scale > 0:
            raise ArgumentError("density_scale must be > 0")
        if not 0 <= self.noise_level <= 1:
            raise ArgumentError("noise_level must lie in [0, 1]")
        if not self.core_radius_km > 0:
            raise ArgumentError("core_radius_km must be > 0")


def _centers(spec: ToyCitySpec, rng: np.random.Generator) -> list[tuple[float, float, float, float]]:
    """(x_km, y_km, amplitude, sigma_km) per density bump, relative to the map centre."""
    bumps = []
    if spec.archetype == "polycentric":
        # No dominant core. Sub-centre i sits in radial band i so the ring
        # signatures land at separated distances; footprints widen with
        # distance to offset the dilution of averaging over a longer ring.
        n = spec.n_centers
        for i in range(n):
            r = POLY_INNER_KM + (spec.center_spread - POLY_INNER_KM) * (i + rng.uniform()) / n
            a = rng.uniform(0.0, 2 * math.pi)
            sigma = max(0.15 * r, 0.4 * spec.core_radius_km) * rng.uniform(0.85, 1.15)
            bumps.append((r * math.cos(a), r * math.sin(a),
                          spec.density_scale * rng.uniform(0.6, 0.95), sigma))
        return bumps
    bumps.append((0.0, 0.0, spec.density_scale * rng.uniform(0.6, 0.95),
                  spec.core_radius_km * rng.uniform(0.8, 1.25)))
    for _ in range(spec.n_centers - 1):
        r = spec.center_spread * rng.uniform(0.2, 1.0)
        a = rng.uniform(0.0, 2 * math.pi)
        bumps.append((r * math.cos(a), r * math.sin(a),
                      spec.density_scale * rng.uniform(0.3, 0.6),
                      spec.core_radius_km * rng.uniform(0.5, 1.0)))
    return bumps


def generate_toy_city(spec: ToyCitySpec, width: int, pixel_size: float) -> CityMap:
    """Deterministic toy city map; identical inputs give bit-identical output."""
    if width < 2:
        raise ArgumentError("width must be >= 2")
    if not pixel_size > 0:
        raise ArgumentError("pixel_size must be > 0")
    rng = np.random.default_rng(spec.seed)
    c = (width - 1) / 2.0
    rows, cols = np.indices((width, width), dtype=np.float64)
    y = (c - rows) * pixel_size / 1000.0
    x = (cols - c) * pixel_size / 1000.0
    field_ = np.zeros((width, width))
    for bx, by, amp, sigma in _centers(spec, rng):
        field_ += amp * np.exp(-((x - bx) ** 2 + (y - by) ** 2) / (2 * sigma ** 2))
    if spec.archetype == "coastal":
        angle = rng.uniform(0.0, 2 * math.pi)
        offset = rng.uniform(0.25, 0.6) * width * pixel_size / 2000.0
        field_[x * math.cos(angle) + y * math.sin(angle) > offset] = 0.0
    if spec.noise_level > 0:
        speckle = rng.uniform(-1.0, 1.0, size=field_.shape)
        field_ = field_ * (1.0 + spec.noise_level * speckle)
    meta = MapMeta(city_id=f"toy-{spec.archetype}-{spec.seed}", source="toy")
    return CityMap(np.clip(field_, 0.0, 1.0), pixel_size, meta)


def random_toy_specs(n: int, seed: int, archetypes: Sequence[str] = ARCHETYPES,
                     noise_level: float = 0.05, center_spread: float = 20.0,
                     max_centers: int = 4) -> list[ToyCitySpec]:
    """A reproducible mixed bag of toy city specs; spec i depends only on (seed, i)."""
    if n < 1:
        raise ArgumentError("n must be >= 1")
    specs = []
    for i in range(n):
        r = seeding.rng(seed, "toy-spec", i)
        arch = archetypes[int(r.integers(len(archetypes)))]
        if arch == "polycentric":
            n_centers = int(r.integers(2, max_centers + 1))
        elif arch == "coastal":
            n_centers = int(r.integers(1, 3))
        else:
            n_centers = 1
        specs.append(ToyCitySpec(arch, n_centers, center_spread, 1.0, noise_level,
                                 seeding.derive_seed(seed, "toy-city", i)))
    return specs


@dataclass(frozen=True)
class PipelineParams:
    side_km: float = 100.0
    agg_px_size: float = 750.0
    final_width: int = 128

    def __post_init__(self):
        if not self.side_km > 0:
            raise ArgumentError("side_km must be > 0")
        if not self.agg_px_size > 0:
            raise ArgumentError("agg_px_size must be > 0")
        if self.final_width < 2:
            raise ArgumentError("final_width must be >= 2")


# 32 px at 750 m: a 24 km window that trains in minutes
DESK_PIPELINE = PipelineParams(side_km=24.0, agg_px_size=750.0, final_width=32)
# 64 px at 750 m: wide enough (24 km radius) for several peaks 5 km apart
ANALYSIS_PIPELINE = PipelineParams(side_km=48.0, agg_px_size=750.0, final_width=64)


@dataclass(eq=False)
class Corpus:
    """An ordered stack of equally sized maps with provenance.

    ``values`` has shape (n, width, width); ``manifest[i]`` describes map i.
    """

    values: np.ndarray
    pixel_size: float
    manifest: list[dict] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[0] == 0:
            raise ArgumentError("a corpus needs at least one map")
        if self.values.shape[1] != self.values.shape[2]:
            raise ArgumentError("corpus maps must be square")
        if not np.all((self.values >= 0) & (self.values <= 1)):
            raise ArgumentError("corpus values must lie in [0, 1]")
        if not self.manifest:
            self.manifest = [{"index": i} for i in range(len(self))]
        if len(self.manifest) != len(self):
            raise ArgumentError("manifest length must match the number of maps")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __getitem__(self, i: int) -> CityMap:
        entry = self.manifest[i]
        meta = MapMeta(city_id=entry.get("city_id"), source=entry.get("source"))
        return CityMap(self.values[i], self.pixel_size, meta)

    def __iter__(self) -> Iterator[CityMap]:
        return (self[i] for i in range(len(self)))

    def digest(self) -> str:
        """Content hash over pixel size, maps and manifest."""
        h = hashlib.sha256()
        h.update(repr(float(self.pixel_size)).encode())
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        h.update(json.dumps(self.manifest, sort_keys=True).encode())
        return h.hexdigest()

    @classmethod
    def from_maps(cls, maps: Sequence[CityMap], manifest: list[dict] | None = None,
                  params: dict | None = None) -> "Corpus":
        if not maps:
            raise ArgumentError("a corpus needs at least one map")
        widths = {m.width for m in maps}
        sizes = {m.pixel_size for m in maps}
        if len(widths) != 1 or len(sizes) != 1:
            raise ArgumentError(f"corpus maps must share width and pixel size, got widths {sorted(widths)}"
                                f" and pixel sizes {sorted(sizes)}")
        return cls(np.stack([m.values for m in maps]), maps[0].pixel_size, manifest or [], params or {})


def _pipeline(city: CityMap, pipeline: PipelineParams) -> CityMap:
    if city.pixel_size != pipeline.agg_px_size:
        city = block_aggregate(city, pipeline.agg_px_size)
    return resize_to(city, pipeline.final_width)


def _toy_map(spec: ToyCitySpec, pipeline: PipelineParams) -> CityMap:
    # toy cities are drawn directly at the aggregation resolution over the full window
    native = window_side_px(pipeline.side_km, pipeline.agg_px_size)
    return _pipeline(generate_toy_city(spec, native, pipeline.agg_px_size), pipeline)


def _map_in_order(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def build_corpus(specs: Iterable[ToyCitySpec] | None = None, *,
                 raster: SourceRaster | None = None,
                 centers: Sequence[tuple] | None = None,
                 pipeline: PipelineParams = PipelineParams(),
                 jobs: int = 1) -> Corpus:
    """Run the window/aggregate/resize chain over toy specs or raster windows.

    ``centers`` entries are ``(row, col)`` or ``(row, col, city_id)`` in the
    raster's global coordinates. Errors are re-raised with the offending
    source identified.
    """
    params = asdict(pipeline)
    tasks: list[tuple[str, object]] = []
    if specs is not None:
        tasks += [("toy", s) for s in specs]
    if raster is not None:
        for i, c in enumerate(centers or []):
            tasks.append(("raster", (i, c)))
    if not tasks:
        raise ArgumentError("build_corpus needs at least one source")

    def run(task):
        kind, item = task
        if kind == "toy":
            label = f"toy spec seed={item.seed}"
            entry = {"source": "toy", **asdict(item)}
        else:
            i, c = item
            city_id = str(c[2]) if len(c) > 2 else f"city-{i}"
            label = f"center {city_id} at ({c[0]}, {c[1]})"
            entry = {"source": raster.source or "raster", "city_id": city_id,
                     "center_row": int(c[0]), "center_col": int(c[1])}
        try:
            if kind == "toy":
                m = _toy_map(item, pipeline)
            else:
                w = extract_window(raster, (c[0], c[1]), pipeline.side_km,
                                   MapMeta(city_id=city_id, source=raster.source))
                m = _pipeline(w, pipeline)
        except UrbanGanError as exc:
            raise with_context(exc, label) from exc
        return m, entry

    results = _map_in_order(run, tasks, jobs)
    manifest = []
    for i, (_, entry) in enumerate(results):
        entry = {"index": i, **entry}
        entry.setdefault("city_id", f"map-{i:05d}")
        manifest.append(entry)
    return Corpus.from_maps([m for m, _ in results], manifest, params)


def toy_corpus(n: int, seed: int, pipeline: PipelineParams = ANALYSIS_PIPELINE,
               archetypes: Sequence[str] = ARCHETYPES, jobs: int = 1, **spec_kw) -> Corpus:
    """``n`` random toy cities; the sub-centre spread defaults to 80% of the window radius."""
    spec_kw.setdefault("center_spread", 0.8 * pipeline.side_km / 2)
    return build_corpus(random_toy_specs(n, seed, archetypes, **spec_kw), pipeline=pipeline, jobs=jobs)


MANIFEST_NAME = "corpus.json"


def save_corpus(corpus: Corpus, directory) -> Path:
    """Write one PGM + sidecar per map and a ``corpus.json`` manifest array."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(len(corpus)):
        name = f"map_{i:05d}.pgm"
        m = corpus[i]
        write_map(m, directory / name)
        entries.append({"path": name, "pixel_size_m": corpus.pixel_size, "pipeline": corpus.params,
                        **corpus.manifest[i]})
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(entries, sort_keys=True, indent=1) + "\n")
    return path


def load_corpus(directory) -> Corpus:
    directory = Path(directory)
    path = directory / MANIFEST_NAME if directory.is_dir() else directory
    if not path.exists():
        raise ParseError(f"{path}: corpus manifest not found")
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(entries, list) or not entries:
        raise ParseError(f"{path}: manifest must list at least one map")
    maps, manifest = [], []
    for entry in entries:
        if "path" not in entry:
            raise ParseError(f"{path}: manifest entry without 'path'")
        maps.append(read_map(path.parent / entry["path"]))
        manifest.append({k: v for k, v in entry.items() if k not in ("path", "pixel_size_m", "pipeline")})
    params = entries[0].get("pipeline", {})
    return Corpus.from_maps(maps, manifest, params)
