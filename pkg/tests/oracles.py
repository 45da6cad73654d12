"""Brute-force reference implementations used only by the tests.

Each one recomputes a quantity the slow, obvious way and shares no code with
the package.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate


def ring_profile(values, pixel_size, ring_km):
    """Per-pixel loop: returns (means, counts, disk_sum) over rings inside the inscribed disk."""
    w = values.shape[0]
    c = (w - 1) / 2.0
    rmax = w * pixel_size / 2000.0
    sums, counts = {}, {}
    disk_sum = 0.0
    km_per_px = pixel_size / 1000.0  # same unit conversion as the package, so ring edges agree to the ulp
    for u in range(w):
        for v in range(w):
            d = math.sqrt((u - c) ** 2 + (v - c) ** 2) * km_per_px
            if d > rmax:
                continue
            k = 0
            while not (d <= (k + 1) * ring_km):
                k += 1
            if k >= 1:
                assert k * ring_km < d
            sums[k] = sums.get(k, 0.0) + values[u, v]
            counts[k] = counts.get(k, 0) + 1
            disk_sum += values[u, v]
    n = max(counts) + 1
    cnt = np.array([counts.get(k, 0) for k in range(n)])
    return np.array([sums.get(k, 0.0) for k in range(n)]) / np.maximum(cnt, 1), cnt, disk_sum


def peak_reference(values, distances, h, delta):
    """Candidates by scanning runs, then repeated pick-the-best among eligible ones."""
    values = [float(v) for v in values]
    n = len(values)
    if max(values) <= 0:
        return []
    cands = []
    for i in range(n):
        if i > 0 and values[i - 1] == values[i]:
            continue  # not the leftmost index of its run
        left = next((values[j] for j in range(i - 1, -1, -1) if values[j] != values[i]), None)
        right = next((values[j] for j in range(i + 1, n) if values[j] != values[i]), None)
        if (left is None or left < values[i]) and (right is None or right < values[i]):
            cands.append(i)
    thr = h * max(values)
    accepted = []
    remaining = [i for i in cands if values[i] >= thr]
    while True:
        ok = [i for i in remaining if all(abs(distances[i] - distances[j]) >= delta for j in accepted)]
        if not ok:
            break
        best = max(ok, key=lambda i: (values[i], -distances[i]))
        accepted.append(best)
        remaining.remove(best)
    return sorted(accepted)


def block_mean(x, f):
    n = x.shape[0] // f
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            s = 0.0
            for a in range(f):
                for b in range(f):
                    s += x[i * f + a, j * f + b]
            out[i, j] = s / (f * f)
    return out


def overlap_resize(x, n_out):
    """Area-weighted resize over the same extent via explicit interval overlaps (float)."""
    n_in = x.shape[0]
    w = np.zeros((n_out, n_in))
    for o in range(n_out):
        lo, hi = o / n_out, (o + 1) / n_out
        for i in range(n_in):
            a, b = i / n_in, (i + 1) / n_in
            w[o, i] = max(0.0, min(hi, b) - max(lo, a)) * n_out
    out = np.zeros((n_out, n_out))
    for r in range(n_out):
        for c in range(n_out):
            out[r, c] = sum(w[r, i] * w[c, j] * x[i, j] for i in range(n_in) for j in range(n_in))
    return out


def conv2d(x, w, b, stride, pad):
    n, c, hh, ww = x.shape
    f, _, k, _ = w.shape
    oh = (hh + 2 * pad - k) // stride + 1
    ow = (ww + 2 * pad - k) // stride + 1
    out = np.zeros((n, f, oh, ow))
    for s in range(n):
        for o in range(f):
            for i in range(oh):
                for j in range(ow):
                    acc = b[o]
                    for ch in range(c):
                        for a in range(k):
                            for bb in range(k):
                                r, q = i * stride - pad + a, j * stride - pad + bb
                                if 0 <= r < hh and 0 <= q < ww:
                                    acc += x[s, ch, r, q] * w[o, ch, a, bb]
                    out[s, o, i, j] = acc
    return out


def conv_transpose2d(x, w, b, stride, pad):
    """Scatter form: every input cell adds kernel * value into the (uncropped) output."""
    n, c, hh, ww = x.shape
    _, f, k, _ = w.shape
    full = (hh - 1) * stride + k
    out = np.zeros((n, f, full, full))
    for s in range(n):
        for ch in range(c):
            for i in range(hh):
                for j in range(ww):
                    out[s, :, i * stride:i * stride + k, j * stride:j * stride + k] += x[s, ch, i, j] * w[ch]
    oh = full - 2 * pad
    return out[:, :, pad:pad + oh, pad:pad + oh] + b[None, :, None, None]


def chi2_sf(x, df):
    """Numerical integration of the chi-square density on (x, inf)."""
    k = df / 2.0
    logc = -k * math.log(2.0) - math.lgamma(k)

    def pdf(t):
        return math.exp(logc + (k - 1) * math.log(t) - t / 2.0) if t > 0 else 0.0

    if x == 0:
        return 1.0
    val, _ = integrate.quad(pdf, x, np.inf, epsabs=1e-14, epsrel=1e-12, limit=500)
    return val


def pooled_chi2(a, b):
    """Hand formula for the two-sample table statistic (no merging)."""
    ta, tb = sum(a), sum(b)
    stat = 0.0
    for ai, bi in zip(a, b):
        pool = (ai + bi) / (ta + tb)
        for obs, tot in ((ai, ta), (bi, tb)):
            e = tot * pool
            stat += (obs - e) ** 2 / e
    return stat


def best_partition(points, k):
    """Exhaustive search over all labelings; returns (inertia, sorted centroids)."""
    pts = np.asarray(points, dtype=np.float64).reshape(len(points), -1)
    best = (math.inf, None)
    for labels in itertools.product(range(k), repeat=len(pts)):
        if len(set(labels)) != k:
            continue
        lab = np.array(labels)
        cents = np.array([pts[lab == j].mean(axis=0) for j in range(k)])
        inertia = float(sum(((pts[lab == j] - cents[j]) ** 2).sum() for j in range(k)))
        if inertia < best[0]:
            best = (inertia, sorted(cents.ravel().tolist()))
    return best


def finite_difference(f, x, h=1e-5):
    """Central-difference gradient of scalar f at array x (x modified in place and restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def max_rel_error(a, n):
    a, n = np.asarray(a).ravel(), np.asarray(n).ravel()
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)))
