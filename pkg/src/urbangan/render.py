"""Deterministic figure output.

Charts are built as a small scene of primitives (rect, line, polyline, circle,
text) that is written out either as SVG text or rasterised into an RGB PNG.
Coordinates are formatted with fixed precision and PNGs are encoded with a
fixed zlib level, so identical inputs give identical bytes. Text is only
drawn in SVG output.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArgumentError
from .raster import CityMap

REAL_COLOR = "#1f4e79"
SYNTH_COLOR = "#c0504d"
PEAK_COLOR = "#d62728"


@dataclass
class Scene:
    width: int
    height: int
    items: list[tuple] = field(default_factory=list)
    background: str = "#ffffff"

    def rect(self, x, y, w, h, fill, cls=None):
        self.items.append(("rect", x, y, w, h, fill, cls))

    def line(self, x1, y1, x2, y2, stroke="#000000", width=1.0):
        self.items.append(("line", x1, y1, x2, y2, stroke, width))

    def polyline(self, points, stroke="#000000", width=1.5):
        self.items.append(("polyline", tuple(points), stroke, width))

    def circle(self, cx, cy, r, fill, cls=None):
        self.items.append(("circle", cx, cy, r, fill, cls))

    def text(self, x, y, s, size=11, anchor="start"):
        self.items.append(("text", x, y, str(s), size, anchor))


def _f(v: float) -> str:
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def to_svg(scene: Scene) -> str:
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{scene.width}" height="{scene.height}" '
           f'viewBox="0 0 {scene.width} {scene.height}">',
           f'<rect x="0" y="0" width="{scene.width}" height="{scene.height}" fill="{scene.background}"/>']
    for it in scene.items:
        kind = it[0]
        if kind == "rect":
            _, x, y, w, h, fill, cls = it
            c = f' class="{cls}"' if cls else ""
            out.append(f'<rect{c} x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" fill="{fill}"/>')
        elif kind == "line":
            _, x1, y1, x2, y2, stroke, w = it
            out.append(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
                       f'stroke="{stroke}" stroke-width="{_f(w)}"/>')
        elif kind == "polyline":
            _, pts, stroke, w = it
            p = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
            out.append(f'<polyline points="{p}" fill="none" stroke="{stroke}" stroke-width="{_f(w)}"/>')
        elif kind == "circle":
            _, cx, cy, r, fill, cls = it
            c = f' class="{cls}"' if cls else ""
            out.append(f'<circle{c} cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(r)}" fill="{fill}"/>')
        elif kind == "text":
            _, x, y, s, size, anchor = it
            out.append(f'<text x="{_f(x)}" y="{_f(y)}" font-family="sans-serif" font-size="{size}" '
                       f'text-anchor="{anchor}">{_esc(s)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _rgb(color: str) -> np.ndarray:
    c = color.lstrip("#")
    return np.array([int(c[i:i + 2], 16) for i in (0, 2, 4)], dtype=np.uint8)


def _stroke_segment(img, x1, y1, x2, y2, rgb, width):
    h, w = img.shape[:2]
    n = int(max(abs(x2 - x1), abs(y2 - y1)) * 2) + 1
    t = np.linspace(0.0, 1.0, n + 1)
    xs, ys = x1 + (x2 - x1) * t, y1 + (y2 - y1) * t
    r = max(width / 2.0, 0.5)
    for dx in np.arange(-r, r + 1e-9, 0.5):
        for dy in np.arange(-r, r + 1e-9, 0.5):
            if dx * dx + dy * dy > r * r:
                continue
            xi = np.floor(xs + dx).astype(int)
            yi = np.floor(ys + dy).astype(int)
            ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            img[yi[ok], xi[ok]] = rgb


def rasterize(scene: Scene) -> np.ndarray:
    """(H, W, 3) uint8 image of the scene; pixel centres are sampled at (i + 0.5)."""
    img = np.empty((scene.height, scene.width, 3), dtype=np.uint8)
    img[:] = _rgb(scene.background)
    yy, xx = np.mgrid[0:scene.height, 0:scene.width] + 0.5
    for it in scene.items:
        kind = it[0]
        if kind == "rect":
            _, x, y, w, h, fill, _ = it
            x0, x1 = int(round(max(x, 0))), int(round(min(x + w, scene.width)))
            y0, y1 = int(round(max(y, 0))), int(round(min(y + h, scene.height)))
            if x1 > x0 and y1 > y0:
                img[y0:y1, x0:x1] = _rgb(fill)
        elif kind == "line":
            _, x1, y1, x2, y2, stroke, w = it
            _stroke_segment(img, x1, y1, x2, y2, _rgb(stroke), w)
        elif kind == "polyline":
            _, pts, stroke, w = it
            for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
                _stroke_segment(img, ax, ay, bx, by, _rgb(stroke), w)
        elif kind == "circle":
            _, cx, cy, r, fill, _ = it
            img[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = _rgb(fill)
    return img


def encode_png(img: np.ndarray) -> bytes:
    """PNG bytes for an (H, W) uint8 grayscale or (H, W, 3) uint8 RGB array."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim == 2:
        color_type, rowbytes = 0, img.shape[1]
    elif img.ndim == 3 and img.shape[2] == 3:
        color_type, rowbytes = 2, img.shape[1] * 3
    else:
        raise ArgumentError(f"cannot encode image of shape {img.shape} as PNG")
    h, w = img.shape[:2]
    raw = b"".join(b"\x00" + img[i].tobytes()[:rowbytes] for i in range(h))

    def chunk(tag, data):
        body = tag + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(raw, 9))
            + chunk(b"IEND", b""))


# --- figure builders --------------------------------------------------------------

def map_image(city: CityMap, scale: int | None = None) -> np.ndarray:
    """Grayscale uint8 image, fraction 0 -> black, 1 -> white, nearest-neighbour upscaled."""
    scale = scale or max(1, 256 // city.width)
    g = np.round(city.values * 255.0).astype(np.uint8)
    return np.repeat(np.repeat(g, scale, axis=0), scale, axis=1)


def map_scene(city: CityMap, scale: int | None = None) -> Scene:
    scale = scale or max(1, 256 // city.width)
    n = city.width * scale
    scene = Scene(n, n, background="#000000")
    g = np.round(city.values * 255.0).astype(int)
    for r in range(city.width):
        for c in range(city.width):
            if g[r, c]:
                v = f"#{g[r, c]:02x}{g[r, c]:02x}{g[r, c]:02x}"
                scene.rect(c * scale, r * scale, scale, scale, v)
    return scene


def grid_image(maps: Sequence[CityMap], cols: int = 8, scale: int = 2, gap: int = 2) -> np.ndarray:
    if not maps:
        raise ArgumentError("nothing to render")
    w = maps[0].width * scale
    rows = (len(maps) + cols - 1) // cols
    ncols = min(cols, len(maps))
    img = np.full((rows * (w + gap) - gap, ncols * (w + gap) - gap), 128, dtype=np.uint8)
    for i, m in enumerate(maps):
        r, c = divmod(i, cols)
        img[r * (w + gap):r * (w + gap) + w, c * (w + gap):c * (w + gap) + w] = map_image(m, scale)
    return img


@dataclass
class _Axes:
    x0: float
    y0: float
    w: float
    h: float
    xmax: float
    ymax: float

    def px(self, x, y):
        return (self.x0 + self.w * x / self.xmax, self.y0 + self.h - self.h * y / self.ymax)


def _frame(scene: Scene, ax: _Axes, title: str, xlabel: str, ylabel: str, yticks: int = 4):
    scene.line(ax.x0, ax.y0 + ax.h, ax.x0 + ax.w, ax.y0 + ax.h)
    scene.line(ax.x0, ax.y0, ax.x0, ax.y0 + ax.h)
    for i in range(yticks + 1):
        v = ax.ymax * i / yticks
        _, y = ax.px(0, v)
        scene.line(ax.x0 - 4, y, ax.x0, y)
        scene.text(ax.x0 - 6, y + 4, f"{v:.2g}", 10, "end")
    scene.text(ax.x0 + ax.w / 2, ax.y0 - 8, title, 12, "middle")
    scene.text(ax.x0 + ax.w / 2, ax.y0 + ax.h + 30, xlabel, 11, "middle")
    scene.text(ax.x0 - 40, ax.y0 - 8, ylabel, 10, "start")


def profile_scene(distances, values, peaks: Sequence[tuple[float, float]] = (),
                  title: str = "radial profile") -> Scene:
    distances = np.asarray(distances, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    scene = Scene(480, 320)
    xmax = float(distances[-1]) if len(distances) > 1 and distances[-1] > 0 else 1.0
    ymax = max(float(values.max()) * 1.1, 1e-6)
    ax = _Axes(60, 30, 390, 240, xmax, ymax)
    _frame(scene, ax, title, "distance from centre (km)", "built-up fraction")
    scene.polyline([ax.px(d, v) for d, v in zip(distances, values)], REAL_COLOR, 2.0)
    for d, v in peaks:
        x, y = ax.px(d, v)
        scene.circle(x, y, 5, PEAK_COLOR, cls="peak")
    return scene


def _bars(scene: Scene, ax: _Axes, labels, real, synth):
    n = len(labels)
    slot = ax.w / max(n, 1)
    bw = slot * 0.38
    for i, lab in enumerate(labels):
        for j, (vals, color) in enumerate(((real, REAL_COLOR), (synth, SYNTH_COLOR))):
            x = ax.x0 + i * slot + slot * 0.1 + j * bw
            _, ytop = ax.px(0, vals[i])
            scene.rect(x, ytop, bw, ax.y0 + ax.h - ytop, color, cls="bar")
        scene.text(ax.x0 + (i + 0.5) * slot, ax.y0 + ax.h + 14, lab, 10, "middle")


def _shares(hist: dict) -> tuple[list, list]:
    labels, counts = hist["labels"], hist["counts"]
    total = sum(counts) or 1
    return labels, [c / total for c in counts]


def report_scene(report: dict) -> Scene:
    """Three panels: peak-count distribution, class-share distribution, class centroid profiles."""
    scene = Scene(1200, 360)
    lr, vr = _shares(report["peak_hist_real"])
    ls, vs = _shares(report["peak_hist_synth"])
    labels = sorted(set(lr) | set(ls))
    real = [dict(zip(lr, vr)).get(lab, 0.0) for lab in labels]
    synth = [dict(zip(ls, vs)).get(lab, 0.0) for lab in labels]
    ymax = max(real + synth + [1e-6]) * 1.1
    ax = _Axes(60, 40, 320, 250, 1, ymax)
    chi = report.get("peak_chi2", {})
    p = chi.get("p")
    _frame(scene, ax, "peak count" + (f" (chi2 p={p:.3g})" if p is not None else ""),
           "number of peaks", "share of maps")
    _bars(scene, ax, labels, real, synth)

    cl = report["cluster"]
    lr, vr = _shares(cl["shares_real"])
    ls, vs = _shares(cl["shares_synth"])
    ymax = max(vr + vs + [1e-6]) * 1.1
    ax = _Axes(460, 40, 320, 250, 1, ymax)
    _frame(scene, ax, "profile class shares", "class", "share of maps")
    _bars(scene, ax, lr, vr, vs)

    cents = np.array(cl["centroids"], dtype=np.float64)
    ring_km = report.get("params", {}).get("ring_width_km_effective")
    d = np.arange(cents.shape[1]) * (ring_km or 1.0)
    ymax = max(float(cents.max()) * 1.1, 1e-6)
    ax = _Axes(860, 40, 310, 250, float(d[-1]) if len(d) > 1 else 1.0, ymax)
    _frame(scene, ax, "class centroid profiles", "distance (km)" if ring_km else "ring",
           "built-up fraction")
    for j, row in enumerate(cents):
        scene.polyline([ax.px(x, y) for x, y in zip(d, row)], REAL_COLOR, 1.2)
        typ = cl.get("typical_synth", [None] * len(cents))[j]
        if typ is not None:
            scene.polyline([ax.px(x, y) for x, y in zip(d, typ)], SYNTH_COLOR, 1.0)
    scene.rect(870, 330, 12, 12, REAL_COLOR)
    scene.text(888, 340, "real", 11)
    scene.rect(940, 330, 12, 12, SYNTH_COLOR)
    scene.text(958, 340, "synthetic", 11)
    return scene


def write_scene(scene: Scene, path) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".svg":
        path.write_text(to_svg(scene))
    elif suffix == ".png":
        path.write_bytes(encode_png(rasterize(scene)))
    else:
        raise ArgumentError(f"unsupported image format {suffix!r} (use .png or .svg)")


def write_map_image(city: CityMap, path, scale: int | None = None) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        path.write_bytes(encode_png(map_image(city, scale)))
    elif suffix == ".svg":
        path.write_text(to_svg(map_scene(city, scale)))
    else:
        raise ArgumentError(f"unsupported image format {suffix!r} (use .png or .svg)")
