"""City maps and the geometric preprocessing chain.

A city map is a square raster of built-up fractions in [0, 1] with a physical
pixel size. Maps are cut from a larger source raster (``extract_window``),
coarsened to a target resolution (``block_aggregate``) and resampled to a fixed
pixel count (``resize_to``). Both resampling steps are area-weighted so the
global built-up fraction is preserved.

On disk a map is a 16-bit binary PGM plus a JSON sidecar carrying the pixel
size and optional provenance.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DomainError, ParseError

PGM_MAXVAL = 65535
META_FIELDS = ("city_id", "center_lat", "center_lon", "source")


@dataclass(frozen=True)
class MapMeta:
    city_id: str | None = None
    center_lat: float | None = None
    center_lon: float | None = None
    source: str | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in META_FIELDS if getattr(self, k) is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "MapMeta":
        return cls(**{k: d[k] for k in META_FIELDS if k in d})


def _readonly(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CityMap:
    """Square map of built-up fractions.

    ``values`` is a (width, width) float64 array, row-major; it is copied and
    made read-only on construction.
    """

    values: np.ndarray
    pixel_size: float
    meta: MapMeta = field(default_factory=MapMeta)

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DomainError(f"city map must be square, got shape {values.shape}")
        if values.shape[0] < 2:
            raise DomainError(f"city map width must be >= 2, got {values.shape[0]}")
        if not (self.pixel_size > 0 and math.isfinite(self.pixel_size)):
            raise DomainError(f"pixel_size must be positive, got {self.pixel_size}")
        if not np.all((values >= 0.0) & (values <= 1.0)):
            bad = values[~((values >= 0.0) & (values <= 1.0))]
            raise DomainError(f"city map values must lie in [0, 1], found {bad.flat[0]!r}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "pixel_size", float(self.pixel_size))

    @property
    def width(self) -> int:
        return self.values.shape[0]

    @property
    def extent(self) -> float:
        """Physical side length in meters."""
        return self.width * self.pixel_size

    def mean(self) -> float:
        return float(self.values.mean())

    def replace(self, values=None, pixel_size=None, meta=None) -> "CityMap":
        return CityMap(
            self.values if values is None else values,
            self.pixel_size if pixel_size is None else pixel_size,
            self.meta if meta is None else meta,
        )


@dataclass(frozen=True, eq=False)
class SourceRaster:
    """A large (possibly non-square) raster that city windows are cut from.

    ``origin`` is the global (row, col) of pixel (0, 0); window centers passed
    to :func:`extract_window` are in the same global coordinates.
    """

    values: np.ndarray
    pixel_size: float
    origin: tuple[int, int] = (0, 0)
    source: str | None = None

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 2 or min(values.shape) < 1:
            raise DomainError(f"source raster must be a non-empty 2-D array, got shape {values.shape}")
        if not (self.pixel_size > 0 and math.isfinite(self.pixel_size)):
            raise DomainError(f"pixel_size must be positive, got {self.pixel_size}")
        if not np.all((values >= 0.0) & (values <= 1.0)):
            raise DomainError("source raster values must lie in [0, 1]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "pixel_size", float(self.pixel_size))
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _ceil_count(length: float) -> int:
    # round first so 24000/750 style ratios that land a hair above an integer do not gain a cell
    return int(math.ceil(round(length, 9)))


def window_side_px(side_km: float, pixel_size: float) -> int:
    return _ceil_count(side_km * 1000.0 / pixel_size)


def extract_window(raster: SourceRaster, center: tuple[int, int], side_km: float,
                   meta: MapMeta | None = None) -> CityMap:
    """Cut a square window of ``side_km`` centred on ``center``; cells off the raster are 0."""
    if not side_km > 0:
        raise ArgumentError(f"side_km must be positive, got {side_km}")
    row = int(center[0]) - raster.origin[0]
    col = int(center[1]) - raster.origin[1]
    if not (0 <= row < raster.height and 0 <= col < raster.width):
        raise DomainError(f"window center {tuple(center)} lies outside the raster")
    n = window_side_px(side_km, raster.pixel_size)
    if n < 2:
        raise ArgumentError(f"window of {side_km} km is narrower than 2 pixels")
    top, left = row - n // 2, col - n // 2
    out = np.zeros((n, n))
    r0, r1 = max(top, 0), min(top + n, raster.height)
    c0, c1 = max(left, 0), min(left + n, raster.width)
    if r0 < r1 and c0 < c1:
        out[r0 - top:r1 - top, c0 - left:c1 - left] = raster.values[r0:r1, c0:c1]
    if meta is None:
        meta = MapMeta(source=raster.source)
    return CityMap(out, raster.pixel_size, meta)


def overlap_weights(n_in: int, in_cell: Fraction, n_out: int, out_cell: Fraction) -> np.ndarray:
    """(n_out, n_in) area weights of input cells inside each output cell.

    Cell boundaries are exact rationals. Each row is normalised by the part of
    the output cell that overlaps the input extent, so a trailing output cell
    that sticks out past the input averages only what it covers.
    """
    extent = n_in * in_cell
    weights = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo = i * out_cell
        hi = min((i + 1) * out_cell, extent)
        covered = hi - lo
        j = int(lo // in_cell)
        while j < n_in and j * in_cell < hi:
            overlap = min(hi, (j + 1) * in_cell) - max(lo, j * in_cell)
            if overlap > 0:
                weights[i, j] = float(overlap / covered)
            j += 1
    return weights


def _resample(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    out = weights @ values @ weights.T
    # fp rounding of weighted means can leave values a few ulp outside [0, 1]
    return np.clip(out, 0.0, 1.0)


def block_aggregate(city: CityMap, target_pixel_size: float) -> CityMap:
    """Coarsen to ``target_pixel_size`` meters by area-weighted block means."""
    if not target_pixel_size >= city.pixel_size:
        raise ArgumentError(
            f"target pixel size {target_pixel_size} m is finer than the source {city.pixel_size} m")
    n_out = _ceil_count(city.extent / target_pixel_size)
    if n_out < 2:
        raise ArgumentError(f"aggregating to {target_pixel_size} m leaves fewer than 2 pixels")
    w = overlap_weights(city.width, Fraction(city.pixel_size), n_out, Fraction(target_pixel_size))
    return CityMap(_resample(city.values, w), target_pixel_size, city.meta)


def resize_to(city: CityMap, side_px: int) -> CityMap:
    """Area-weighted resample onto a ``side_px`` grid with the same physical extent."""
    if side_px < 2:
        raise ArgumentError(f"side_px must be >= 2, got {side_px}")
    if side_px == city.width:
        return city
    w = overlap_weights(city.width, Fraction(1), side_px, Fraction(city.width, side_px))
    return CityMap(_resample(city.values, w), city.extent / side_px, city.meta)


def binarize(city: CityMap, threshold: float = 0.5) -> CityMap:
    return city.replace(values=(city.values >= threshold).astype(np.float64))


# slack for generator outputs that overshoot [-1, 1] by rounding
SYMMETRIC_TOLERANCE = 1e-6


def to_symmetric_range(city: CityMap) -> np.ndarray:
    """Map fractions [0, 1] onto the generator's tanh range [-1, 1]."""
    return 2.0 * city.values - 1.0


def from_symmetric_range(t: np.ndarray, pixel_size: float, meta: MapMeta | None = None) -> CityMap:
    t = np.asarray(t, dtype=np.float64)
    while t.ndim > 2 and t.shape[0] == 1:
        t = t[0]
    lim = 1.0 + SYMMETRIC_TOLERANCE
    if not np.all((t >= -lim) & (t <= lim)):
        raise DomainError("tensor values must lie in [-1, 1]")
    return CityMap(np.clip((t + 1.0) / 2.0, 0.0, 1.0), pixel_size, meta or MapMeta())


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def encode_pgm(values: np.ndarray) -> bytes:
    h, w = values.shape
    samples = np.round(np.asarray(values) * PGM_MAXVAL).astype(">u2")
    return f"P5\n{w} {h}\n{PGM_MAXVAL}\n".encode("ascii") + samples.tobytes()


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode_pgm(data: bytes, name: str = "<pgm>") -> np.ndarray:
    """Parse a binary PGM into an array of fractions (sample / maxval)."""
    pos = 0
    tokens = []
    for label in ("magic", "width", "height", "maxval"):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ParseError(f"{name}: truncated header, missing {label}")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise ParseError(f"{name}: bad magic {tokens[0]!r}, expected b'P5'")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError(f"{name}: non-integer width/height/maxval in header") from None
    if width < 1 or height < 1:
        raise ParseError(f"{name}: width and height must be positive")
    if not 1 <= maxval <= PGM_MAXVAL:
        raise ParseError(f"{name}: maxval {maxval} outside 1..65535")
    if pos >= len(data) or data[pos:pos + 1] not in (b" ", b"\n", b"\r", b"\t"):
        raise ParseError(f"{name}: missing whitespace after maxval")
    pos += 1
    dtype = ">u2" if maxval > 255 else "u1"
    nbytes = width * height * np.dtype(dtype).itemsize
    if len(data) - pos != nbytes:
        raise ParseError(f"{name}: pixel data has {len(data) - pos} bytes, expected {nbytes}")
    samples = np.frombuffer(data, dtype=dtype, offset=pos).reshape(height, width)
    if samples.max() > maxval:
        raise ParseError(f"{name}: sample value {int(samples.max())} exceeds maxval {maxval}")
    return samples.astype(np.float64) / maxval


def _read_sidecar(path: Path) -> dict:
    side = sidecar_path(path)
    if not side.exists():
        raise ParseError(f"{path}: missing sidecar {side.name}")
    try:
        doc = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{side}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{side}: sidecar must be a JSON object")
    px = doc.get("pixel_size_m")
    if isinstance(px, bool) or not isinstance(px, (int, float)) or not px > 0 or not math.isfinite(px):
        raise ParseError(f"{side}: pixel_size_m must be a positive number, got {px!r}")
    return doc


def write_map(city: CityMap, path, extra: dict | None = None) -> None:
    path = Path(path)
    path.write_bytes(encode_pgm(city.values))
    doc = {"pixel_size_m": city.pixel_size, **city.meta.to_dict()}
    if extra:
        doc.update(extra)
    sidecar_path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_map(path) -> CityMap:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    doc = _read_sidecar(path)
    values = decode_pgm(path.read_bytes(), str(path))
    if values.shape[0] != values.shape[1]:
        raise ParseError(f"{path}: city map must be square, got {values.shape[1]}x{values.shape[0]}")
    if values.shape[0] < 2:
        raise ParseError(f"{path}: width must be >= 2")
    return CityMap(values, float(doc["pixel_size_m"]), MapMeta.from_dict(doc))


def read_raster(path) -> SourceRaster:
    """Read any-size PGM + sidecar as a source raster for ingestion."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    doc = _read_sidecar(path)
    values = decode_pgm(path.read_bytes(), str(path))
    origin = tuple(doc.get("origin", (0, 0)))
    return SourceRaster(values, float(doc["pixel_size_m"]), origin, doc.get("source", path.name))


def write_raster(raster: SourceRaster, path) -> None:
    path = Path(path)
    path.write_bytes(encode_pgm(raster.values))
    doc = {"pixel_size_m": raster.pixel_size, "origin": list(raster.origin)}
    if raster.source is not None:
        doc["source"] = raster.source
    sidecar_path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
