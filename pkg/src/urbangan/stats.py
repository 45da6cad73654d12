"""Real-vs-synthetic distribution comparison.

Histograms of peak counts and cluster shares are compared with a pooled
two-sample chi-square (homogeneity) test. Sparse tail bins are merged until
every expected count reaches ``min_expected``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import cluster as _cluster
from .corpus import Corpus
from .errors import ArgumentError, InsufficientSupportError
from .morphology import DEFAULT_DELTA_KM, DEFAULT_H, find_peaks, radial_profile


@dataclass(frozen=True)
class Histogram:
    labels: tuple
    counts: tuple

    def __post_init__(self):
        if len(self.labels) != len(self.counts):
            raise ArgumentError("histogram labels and counts differ in length")
        if len(set(self.labels)) != len(self.labels):
            raise ArgumentError("histogram labels must be unique")
        if any(c < 0 or int(c) != c for c in self.counts):
            raise ArgumentError("histogram counts must be non-negative integers")
        order = sorted(range(len(self.labels)), key=lambda i: self.labels[i])
        object.__setattr__(self, "labels", tuple(self.labels[i] for i in order))
        object.__setattr__(self, "counts", tuple(int(self.counts[i]) for i in order))

    @classmethod
    def from_values(cls, values: Iterable, labels: Iterable | None = None) -> "Histogram":
        tally: dict = {} if labels is None else {lab: 0 for lab in labels}
        for v in values:
            v = v.item() if hasattr(v, "item") else v
            tally[v] = tally.get(v, 0) + 1
        return cls(tuple(tally), tuple(tally.values()))

    @classmethod
    def from_dict(cls, d: dict) -> "Histogram":
        return cls(tuple(d), tuple(d.values()))

    @property
    def total(self) -> int:
        return sum(self.counts)

    def as_dict(self) -> dict:
        return dict(zip(self.labels, self.counts))

    def normalized(self) -> dict:
        t = self.total
        return {lab: c / t for lab, c in zip(self.labels, self.counts)} if t else {}

    def to_json_obj(self) -> dict:
        return {"labels": list(self.labels), "counts": list(self.counts)}

    def to_csv(self, label_name: str = "label") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([label_name, "count"])
        for lab, c in zip(self.labels, self.counts):
            w.writerow([lab, c])
        return buf.getvalue()


# --- chi-square survival function -------------------------------------------------

_EPS = 1e-16
_MAX_ITER = 10_000


def _gamma_series_p(a: float, x: float) -> float:
    """Regularised lower incomplete gamma P(a, x) by its power series (x < a + 1)."""
    term = total = 1.0 / a
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf_q(a: float, x: float) -> float:
    """Regularised upper incomplete gamma Q(a, x) by Lentz's continued fraction (x >= a + 1)."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def upper_gamma_q(a: float, x: float) -> float:
    if a <= 0:
        raise ArgumentError("shape parameter must be > 0")
    if x < 0:
        raise ArgumentError("x must be >= 0")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _gamma_series_p(a, x)))
    return min(1.0, max(0.0, _gamma_cf_q(a, x)))


def chi2_sf(x: float, df: int) -> float:
    """P(X >= x) for X ~ chi-square(df)."""
    if isinstance(df, bool) or int(df) != df or df < 1:
        raise ArgumentError(f"degrees of freedom must be a positive integer, got {df}")
    if not x >= 0:
        raise ArgumentError(f"chi-square statistic must be >= 0, got {x}")
    if df == 2:
        return math.exp(-x / 2.0)
    return upper_gamma_q(df / 2.0, x / 2.0)


# --- two-sample test --------------------------------------------------------------

@dataclass
class Chi2Result:
    statistic: float
    df: int
    p_value: float
    merged_bins: list[list] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {"stat": self.statistic, "df": self.df, "p": self.p_value, "bins": self.merged_bins}


def _merge_tail(a: np.ndarray, b: np.ndarray, min_expected: float) -> list[list[int]]:
    """Group bin indices from the tail until each group's pooled expected counts clear the bar."""
    ta, tb = a.sum(), b.sum()
    n = ta + tb

    def ok(idx):
        pooled = a[idx].sum() + b[idx].sum()
        return min(ta, tb) * pooled / n >= min_expected

    groups, cur = [], []
    for i in range(len(a) - 1, -1, -1):
        cur.insert(0, i)
        if ok(cur):
            groups.insert(0, cur)
            cur = []
    if cur:
        if groups:
            groups[0] = cur + groups[0]
        else:
            groups = [cur]
    return groups


def chi2_two_sample(a: Histogram, b: Histogram, min_expected: float = 5.0) -> Chi2Result:
    """Pooled chi-square homogeneity test between two count histograms."""
    if a.total <= 0 or b.total <= 0:
        raise ArgumentError("both histograms need a positive total")
    labels = sorted(set(a.labels) | set(b.labels))
    da, db = a.as_dict(), b.as_dict()
    ca = np.array([da.get(lab, 0) for lab in labels], dtype=np.float64)
    cb = np.array([db.get(lab, 0) for lab in labels], dtype=np.float64)
    groups = _merge_tail(ca, cb, min_expected)
    if len(groups) < 2:
        raise InsufficientSupportError("insufficient support: fewer than 2 bins after merging")
    oa = np.array([ca[g].sum() for g in groups])
    ob = np.array([cb[g].sum() for g in groups])
    ta, tb = oa.sum(), ob.sum()
    pooled = (oa + ob) / (ta + tb)
    stat = 0.0
    for obs, total in ((oa, ta), (ob, tb)):
        exp = total * pooled
        stat += float(np.sum((obs - exp) ** 2 / exp))
    df = len(groups) - 1
    return Chi2Result(stat, df, chi2_sf(stat, df), [[labels[i] for i in g] for g in groups])


# --- corpus-level statistics --------------------------------------------------------

@dataclass(frozen=True)
class MorphologyParams:
    ring_width_km: float | None = None  # None: one pixel
    h: float = DEFAULT_H
    delta_km: float = DEFAULT_DELTA_KM
    smooth: int = 0


def _map_ordered(fn, items, jobs):
    if jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def corpus_profiles(corpus: Corpus, params: MorphologyParams = MorphologyParams(), jobs: int = 1):
    return _map_ordered(lambda i: radial_profile(corpus[i], params.ring_width_km, params.smooth),
                        range(len(corpus)), jobs)


def peak_counts(corpus: Corpus, params: MorphologyParams = MorphologyParams(), jobs: int = 1) -> list[int]:
    profiles = corpus_profiles(corpus, params, jobs)
    return [len(find_peaks(p, params.h, params.delta_km)) for p in profiles]


def peak_count_histogram(corpus: Corpus, params: MorphologyParams = MorphologyParams(),
                         jobs: int = 1) -> Histogram:
    return Histogram.from_values(peak_counts(corpus, params, jobs))


def share_distribution(assignments: Sequence[int], k: int) -> Histogram:
    """Maps per cluster id 0..k-1 (empty classes kept with count 0)."""
    return Histogram.from_values(assignments, labels=range(k))


@dataclass(frozen=True)
class CompareConfig:
    morphology: MorphologyParams = MorphologyParams()
    k: int | None = 12
    k_range: tuple[int, ...] | None = None  # used when k is None
    explained_threshold: float = 0.9
    cluster_mode: str = "fit_real"  # or "joint"
    seed: int = 0
    min_expected: float = 5.0
    restarts: int = 8

    def __post_init__(self):
        if self.cluster_mode not in ("fit_real", "joint"):
            raise ArgumentError("cluster_mode must be 'fit_real' or 'joint'")
        if self.k is None and not self.k_range:
            raise ArgumentError("either k or k_range is required")


def _safe_chi2(a: Histogram, b: Histogram, min_expected: float) -> dict:
    try:
        return chi2_two_sample(a, b, min_expected).to_json_obj()
    except InsufficientSupportError as exc:
        return {"stat": None, "df": 0, "p": None, "bins": [], "error": str(exc)}


@dataclass
class ComparisonReport:
    peak_hist_real: Histogram
    peak_hist_synth: Histogram
    peak_chi2: dict
    cluster: dict
    params: dict

    def to_json_obj(self) -> dict:
        return {
            "peak_hist_real": self.peak_hist_real.to_json_obj(),
            "peak_hist_synth": self.peak_hist_synth.to_json_obj(),
            "peak_chi2": self.peak_chi2,
            "cluster": self.cluster,
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True, indent=1)


def compare_report(real: Corpus, synth: Corpus, config: CompareConfig = CompareConfig(),
                   jobs: int = 1) -> ComparisonReport:
    """Peak-count histograms + chi-square, and profile clustering with class shares."""
    if real.width != synth.width or real.pixel_size != synth.pixel_size:
        raise ArgumentError(f"corpora differ: width {real.width} vs {synth.width}, "
                            f"pixel size {real.pixel_size} vs {synth.pixel_size}")
    mp = config.morphology
    prof_r = corpus_profiles(real, mp, jobs)
    prof_s = corpus_profiles(synth, mp, jobs)
    hist_r = Histogram.from_values(len(find_peaks(p, mp.h, mp.delta_km)) for p in prof_r)
    hist_s = Histogram.from_values(len(find_peaks(p, mp.h, mp.delta_km)) for p in prof_s)
    xr = np.array([p.values for p in prof_r])
    xs = np.array([p.values for p in prof_s])
    fit_data = xr if config.cluster_mode == "fit_real" else np.vstack([xr, xs])
    selection = None
    k = config.k
    if k is None:
        ks = [kk for kk in config.k_range if kk <= len(fit_data)]
        sel = _cluster.select_k(fit_data, ks, config.explained_threshold, config.seed,
                                restarts=config.restarts)
        k = sel.k
        selection = {"explained": {str(kk): v for kk, v in sel.explained.items()}, "flagged": sel.flagged}
    if k > len(fit_data):
        raise ArgumentError(f"K={k} exceeds the {len(fit_data)} profiles available for clustering")
    model = _cluster.kmeans_fit(fit_data, k, config.seed, restarts=config.restarts)
    ar = _cluster.assign_all(model, xr)
    as_ = _cluster.assign_all(model, xs)
    shares_r = share_distribution(ar, k)
    shares_s = share_distribution(as_, k)
    # typical synthetic profile per class: mean of the synthetic members
    synth_typical = [xs[as_ == j].mean(axis=0).tolist() if np.any(as_ == j) else None for j in range(k)]
    cluster_block = {
        "K": k,
        "mode": config.cluster_mode,
        "centroids": model.centroids.tolist(),
        "inertia": model.inertia,
        "typical_synth": synth_typical,
        "shares_real": shares_r.to_json_obj(),
        "shares_synth": shares_s.to_json_obj(),
        "share_chi2": _safe_chi2(shares_r, shares_s, config.min_expected),
    }
    if selection is not None:
        cluster_block["selection"] = selection
    params = asdict(config)
    params["n_real"], params["n_synth"] = len(real), len(synth)
    params["ring_width_km_effective"] = prof_r[0].ring_width
    return ComparisonReport(hist_r, hist_s, _safe_chi2(hist_r, hist_s, config.min_expected),
                            cluster_block, params)
