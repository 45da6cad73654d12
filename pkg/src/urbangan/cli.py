"""urbangan command line.

Every subcommand reads its settings from (lowest to highest precedence) the
built-in defaults, the matching section of a JSON ``--config`` file, and
explicit flags. One ``--seed`` fans out to per-stage seeds. Failures print a
single JSON line on stderr and exit 2 (usage), 3 (data) or 4 (numeric).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import cluster as cl
from . import render
from .corpus import (ARCHETYPES, PipelineParams, build_corpus, load_corpus, random_toy_specs,
                     save_corpus)
from .errors import ArgumentError, ParseError, UrbanGanError
from .gan import GanConfig, build, load_checkpoint, sample, save_checkpoint, train
from .morphology import find_peaks, find_peaks_array, radial_profile
from .raster import read_map, read_raster
from .seeding import derive_seed
from .stats import CompareConfig, MorphologyParams, compare_report, corpus_profiles

GLOBAL_DEFAULTS = {"seed": 0, "jobs": 1}

_PIPE = {"side_km": 24.0, "agg_px_size": 750.0, "final_width": 32}
_MORPH = {"ring_width_km": None, "h": 0.5, "delta_km": 5.0, "smooth": 0}
_GAN_KEYS = ("z_dim", "base_channels", "loss_variant", "d_steps_per_g_step", "batch_size",
             "lr_g", "lr_d", "beta1", "beta2")

DEFAULTS: dict[str, dict] = {
    "synth-corpus": {"out": None, "n": 100, "archetypes": list(ARCHETYPES), "noise_level": 0.05,
                     "max_centers": 4, "center_spread": None, **_PIPE},
    "ingest": {"raster": None, "centers": None, "out": None, **_PIPE},
    "train": {"corpus": None, "out": None, "steps": 1000, "resume": None, "log": None,
              **{k: GanConfig.__dataclass_fields__[k].default for k in _GAN_KEYS}},
    "generate": {"checkpoint": None, "n": 100, "out": None},
    "profile": {"input": None, "out": None, "ring_width_km": None, "smooth": 0},
    "peaks": {"input": None, "out": None, **_MORPH},
    "cluster": {"corpus": None, "out": None, "k": 12, "k_range": None, "explained_threshold": 0.9,
                "restarts": 8, "ring_width_km": None, "smooth": 0},
    "compare": {"real": None, "synth": None, "out": None, "figure": None, "k": 12, "k_range": None,
                "explained_threshold": 0.9, "cluster_mode": "fit_real", "min_expected": 5.0,
                "restarts": 8, **_MORPH},
    "render": {"kind": None, "input": None, "out": None, "h": 0.5, "delta_km": 5.0, "scale": None,
               "cols": 8},
}
REQUIRED = {
    "synth-corpus": ("out",), "ingest": ("raster", "centers", "out"), "train": ("corpus", "out"),
    "generate": ("checkpoint", "out"), "profile": ("input", "out"), "peaks": ("input", "out"),
    "cluster": ("corpus", "out"), "compare": ("real", "synth", "out"),
    "render": ("kind", "input", "out"),
}
RENDER_KINDS = ("map", "corpus", "profile", "peaks", "report")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(message)


def _k_range(text):
    """'2-20' or '2,3,5' -> list of ints."""
    if isinstance(text, list):
        return [int(v) for v in text]
    text = str(text)
    try:
        if "-" in text:
            lo, hi = text.split("-", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise ArgumentError(f"bad k range {text!r}; use 'lo-hi' or a comma list") from None


def _csv_list(text):
    return text if isinstance(text, list) else [v for v in str(text).split(",") if v]


def _add(p, *names, **kw):
    p.add_argument(*names, default=None, **kw)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    _add(common, "--config", help="JSON config file with one section per subcommand")
    _add(common, "--seed", type=int, help="master seed (default 0)")
    _add(common, "--jobs", type=int, help="worker cap; results do not depend on it")
    common.add_argument("--print-config", action="store_true", help="echo the resolved config on stdout")

    parser = _Parser(prog="urbangan", description="Synthetic urban maps: corpora, GAN training, morphology.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def pipe(p):
        _add(p, "--side-km", dest="side_km", type=float)
        _add(p, "--agg-px-size", dest="agg_px_size", type=float, help="aggregation pixel size in metres")
        _add(p, "--final-width", dest="final_width", type=int)

    def morph(p, peaks=True):
        _add(p, "--ring-width-km", dest="ring_width_km", type=float)
        _add(p, "--smooth", type=int, help="moving-average window over rings (0 = off)")
        if peaks:
            _add(p, "--h", type=float, help="relative peak height threshold")
            _add(p, "--delta-km", dest="delta_km", type=float, help="minimum peak separation")

    p = sub.add_parser("synth-corpus", parents=[common], help="generate a toy-city corpus")
    _add(p, "--out", help="output corpus directory")
    _add(p, "--n", type=int)
    _add(p, "--archetypes", type=_csv_list, help="comma list of " + ",".join(ARCHETYPES))
    _add(p, "--noise-level", dest="noise_level", type=float)
    _add(p, "--max-centers", dest="max_centers", type=int)
    _add(p, "--center-spread", dest="center_spread", type=float)
    pipe(p)

    p = sub.add_parser("ingest", parents=[common], help="cut windows from a raster at listed centres")
    _add(p, "--raster", help="16-bit PGM with JSON sidecar")
    _add(p, "--centers", help="CSV with columns city_id,row,col")
    _add(p, "--out")
    pipe(p)

    p = sub.add_parser("train", parents=[common], help="train the GAN on a corpus")
    _add(p, "--corpus")
    _add(p, "--out", help="checkpoint path")
    _add(p, "--steps", type=int)
    _add(p, "--resume", help="continue from this checkpoint")
    _add(p, "--log", help="per-step loss CSV")
    _add(p, "--z-dim", dest="z_dim", type=int)
    _add(p, "--base-channels", dest="base_channels", type=int)
    _add(p, "--loss-variant", dest="loss_variant", choices=("paper_saturating", "non_saturating"))
    _add(p, "--d-steps", dest="d_steps_per_g_step", type=int)
    _add(p, "--batch-size", dest="batch_size", type=int)
    _add(p, "--lr-g", dest="lr_g", type=float)
    _add(p, "--lr-d", dest="lr_d", type=float)
    _add(p, "--beta1", type=float)
    _add(p, "--beta2", type=float)

    p = sub.add_parser("generate", parents=[common], help="sample maps from a checkpoint")
    _add(p, "--checkpoint")
    _add(p, "--n", type=int)
    _add(p, "--out", help="output corpus directory")

    p = sub.add_parser("profile", parents=[common], help="radial profiles of a map or corpus")
    _add(p, "--input", help="map PGM or corpus directory")
    _add(p, "--out", help="CSV path")
    morph(p, peaks=False)

    p = sub.add_parser("peaks", parents=[common], help="peak detection on a map or corpus")
    _add(p, "--input", help="map PGM or corpus directory")
    _add(p, "--out", help="CSV path")
    morph(p)

    p = sub.add_parser("cluster", parents=[common], help="k-means over corpus profiles")
    _add(p, "--corpus")
    _add(p, "--out", help="output directory (model.json, assignments.csv)")
    _add(p, "--k", type=int)
    _add(p, "--k-range", dest="k_range", type=_k_range, help="select K from e.g. 2-20 (overrides --k)")
    _add(p, "--explained-threshold", dest="explained_threshold", type=float)
    _add(p, "--restarts", type=int)
    morph(p, peaks=False)

    p = sub.add_parser("compare", parents=[common], help="compare real and synthetic corpora")
    _add(p, "--real")
    _add(p, "--synth")
    _add(p, "--out", help="report JSON path")
    _add(p, "--figure", help="also render the report (.png or .svg)")
    _add(p, "--k", type=int)
    _add(p, "--k-range", dest="k_range", type=_k_range)
    _add(p, "--explained-threshold", dest="explained_threshold", type=float)
    _add(p, "--cluster-mode", dest="cluster_mode", choices=("fit_real", "joint"))
    _add(p, "--min-expected", dest="min_expected", type=float)
    _add(p, "--restarts", type=int)
    morph(p)

    p = sub.add_parser("render", parents=[common], help="draw a map, corpus, profile or report")
    _add(p, "--kind", help="one of " + ", ".join(RENDER_KINDS))
    _add(p, "--input")
    _add(p, "--out", help=".png or .svg")
    _add(p, "--h", type=float)
    _add(p, "--delta-km", dest="delta_km", type=float)
    _add(p, "--scale", type=int, help="pixels per map cell")
    _add(p, "--cols", type=int, help="grid columns for corpus renders")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults <- config file section <- explicit flags, plus global seed/jobs."""
    cmd = args.command
    resolved = {**GLOBAL_DEFAULTS, **DEFAULTS[cmd]}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ArgumentError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as exc:
            raise ArgumentError(f"config file {args.config}: invalid JSON ({exc.msg})") from None
        if not isinstance(data, dict):
            raise ArgumentError("config file must hold a JSON object")
        unknown_top = set(data) - set(GLOBAL_DEFAULTS) - set(DEFAULTS)
        if unknown_top:
            raise ArgumentError(f"config file: unknown keys {sorted(unknown_top)}")
        resolved.update({k: data[k] for k in GLOBAL_DEFAULTS if k in data})
        section = data.get(cmd, {})
        if not isinstance(section, dict):
            raise ArgumentError(f"config section {cmd!r} must be an object")
        unknown = set(section) - set(DEFAULTS[cmd])
        if unknown:
            raise ArgumentError(f"config section {cmd!r}: unknown keys {sorted(unknown)}")
        resolved.update(section)
    for key in list(GLOBAL_DEFAULTS) + list(DEFAULTS[cmd]):
        v = getattr(args, key, None)
        if v is not None:
            resolved[key] = v
    for key in REQUIRED[cmd]:
        if resolved.get(key) in (None, ""):
            raise ArgumentError(f"{cmd}: missing required setting '{key}' (flag --{key.replace('_', '-')})")
    if not isinstance(resolved["seed"], int) or resolved["seed"] < 0:
        raise ArgumentError("seed must be a non-negative integer")
    if not isinstance(resolved["jobs"], int) or resolved["jobs"] < 1:
        raise ArgumentError("jobs must be >= 1")
    return resolved


def _need(path, what):
    if not Path(path).exists():
        raise ParseError(f"{what} {path} does not exist")
    return Path(path)


def _pipeline(c) -> PipelineParams:
    return PipelineParams(float(c["side_km"]), float(c["agg_px_size"]), int(c["final_width"]))


def _morph(c) -> MorphologyParams:
    mp = MorphologyParams(c.get("ring_width_km"), float(c.get("h", 0.5)), float(c.get("delta_km", 5.0)),
                          int(c.get("smooth", 0)))
    if mp.ring_width_km is not None and not mp.ring_width_km > 0:
        raise ArgumentError("ring_width_km must be > 0")
    if not 0 < mp.h <= 1:
        raise ArgumentError("h must lie in (0, 1]")
    if mp.delta_km < 0:
        raise ArgumentError("delta_km must be >= 0")
    if mp.smooth < 0:
        raise ArgumentError("smooth must be >= 0")
    return mp


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _is_corpus(path: Path) -> bool:
    return path.is_dir() or path.name.endswith(".json")


def _read_centers(path: Path) -> list[tuple[int, int, str]]:
    rows = list(csv.DictReader(io.StringIO(path.read_text())))
    out = []
    for i, r in enumerate(rows, start=2):
        try:
            out.append((int(r["row"]), int(r["col"]), r["city_id"]))
        except (KeyError, TypeError, ValueError):
            raise ParseError(f"{path} line {i}: need integer row,col and a city_id") from None
    if not out:
        raise ParseError(f"{path}: no centers listed")
    return out


# --- subcommands -------------------------------------------------------------------

def cmd_synth_corpus(c):
    archetypes = _csv_list(c["archetypes"])
    bad = [a for a in archetypes if a not in ARCHETYPES]
    if bad or not archetypes:
        raise ArgumentError(f"unknown archetypes {bad}; choose from {list(ARCHETYPES)}")
    if int(c["n"]) < 1:
        raise ArgumentError("n must be >= 1")
    pipe = _pipeline(c)
    spread = c["center_spread"] if c["center_spread"] is not None else 0.8 * pipe.side_km / 2
    specs = random_toy_specs(int(c["n"]), derive_seed(c["seed"], "synth-corpus"), archetypes,
                             float(c["noise_level"]), float(spread), int(c["max_centers"]))
    corpus = build_corpus(specs, pipeline=pipe, jobs=c["jobs"])
    return [str(save_corpus(corpus, c["out"]))]


def cmd_ingest(c):
    pipe = _pipeline(c)
    raster = read_raster(_need(c["raster"], "raster"))
    centers = _read_centers(_need(c["centers"], "centers file"))
    corpus = build_corpus(raster=raster, centers=centers, pipeline=pipe, jobs=c["jobs"])
    return [str(save_corpus(corpus, c["out"]))]


def cmd_train(c):
    corpus = load_corpus(_need(c["corpus"], "corpus"))
    steps = int(c["steps"])
    if steps < 0:
        raise ArgumentError("steps must be >= 0")
    if c["resume"]:
        model = load_checkpoint(_need(c["resume"], "checkpoint"))
    else:
        gan_kw = {k: c[k] for k in _GAN_KEYS}
        cfg = GanConfig(output_width=corpus.width, pixel_size=corpus.pixel_size,
                        seed=derive_seed(c["seed"], "train"), **gan_kw)
        model = build(cfg)
    log = train(model, corpus, steps)
    out = Path(c["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out)
    written = [str(out)]
    if c["log"]:
        _write_text(c["log"], log.to_csv())
        written.append(str(c["log"]))
    return written


def cmd_generate(c):
    model = load_checkpoint(_need(c["checkpoint"], "checkpoint"))
    synth = sample(model, int(c["n"]), derive_seed(c["seed"], "generate"))
    return [str(save_corpus(synth, c["out"]))]


def _map_ids(corpus):
    return [str(e.get("city_id", e.get("index", i))) for i, e in enumerate(corpus.manifest)]


def cmd_profile(c):
    mp = _morph({**c, "h": 0.5, "delta_km": 0.0})
    src = _need(c["input"], "input")
    if _is_corpus(src):
        corpus = load_corpus(src)
        profiles = corpus_profiles(corpus, mp, c["jobs"])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["map_id"] + [repr(float(d)) for d in profiles[0].distances])
        for mid, p in zip(_map_ids(corpus), profiles):
            w.writerow([mid] + [repr(float(v)) for v in p.values])
        text = buf.getvalue()
    else:
        text = radial_profile(read_map(src), mp.ring_width_km, mp.smooth).to_csv()
    _write_text(c["out"], text)
    return [str(c["out"])]


def cmd_peaks(c):
    mp = _morph(c)
    src = _need(c["input"], "input")
    if _is_corpus(src):
        corpus = load_corpus(src)
        profiles = corpus_profiles(corpus, mp, c["jobs"])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["map_id", "n_peaks"])
        for mid, p in zip(_map_ids(corpus), profiles):
            w.writerow([mid, len(find_peaks(p, mp.h, mp.delta_km))])
        text = buf.getvalue()
    else:
        prof = radial_profile(read_map(src), mp.ring_width_km, mp.smooth)
        text = find_peaks(prof, mp.h, mp.delta_km).to_csv()
    _write_text(c["out"], text)
    return [str(c["out"])]


def cmd_cluster(c):
    mp = _morph({**c, "h": 0.5, "delta_km": 0.0})
    corpus = load_corpus(_need(c["corpus"], "corpus"))
    x = np.array([p.values for p in corpus_profiles(corpus, mp, c["jobs"])])
    seed = derive_seed(c["seed"], "cluster")
    restarts = int(c["restarts"])
    extra = {}
    if c["k_range"]:
        sel = cl.select_k(x, _k_range(c["k_range"]), float(c["explained_threshold"]), seed, restarts=restarts)
        k = sel.k
        extra = {"explained": {str(kk): v for kk, v in sel.explained.items()}, "flagged": sel.flagged}
    else:
        k = int(c["k"])
    model = cl.kmeans_fit(x, k, seed, restarts=restarts)
    out = Path(c["out"])
    out.mkdir(parents=True, exist_ok=True)
    obj = json.loads(model.to_json())
    obj.update(extra)
    (out / "model.json").write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")
    (out / "assignments.csv").write_text(model.assignments_csv(_map_ids(corpus)))
    return [str(out / "model.json"), str(out / "assignments.csv")]


def cmd_compare(c):
    mp = _morph(c)
    real = load_corpus(_need(c["real"], "real corpus"))
    synth = load_corpus(_need(c["synth"], "synthetic corpus"))
    k_range = tuple(_k_range(c["k_range"])) if c["k_range"] else None
    cfg = CompareConfig(mp, None if k_range else int(c["k"]), k_range, float(c["explained_threshold"]),
                        c["cluster_mode"], derive_seed(c["seed"], "compare"), float(c["min_expected"]),
                        int(c["restarts"]))
    report = compare_report(real, synth, cfg, c["jobs"])
    _write_text(c["out"], report.to_json() + "\n")
    written = [str(c["out"])]
    if c["figure"]:
        render.write_scene(render.report_scene(json.loads(report.to_json())), c["figure"])
        written.append(str(c["figure"]))
    return written


def _read_profile_csv(path: Path):
    rows = list(csv.reader(io.StringIO(path.read_text())))
    if not rows or rows[0][:2] != ["distance_km", "value"]:
        raise ParseError(f"{path}: expected a profile CSV with header distance_km,value")
    try:
        arr = np.array([[float(a), float(b)] for a, b in rows[1:]], dtype=np.float64)
    except ValueError:
        raise ParseError(f"{path}: non-numeric profile row") from None
    if len(arr) == 0:
        raise ParseError(f"{path}: empty profile")
    return arr[:, 0], arr[:, 1]


def cmd_render(c):
    kind = c["kind"]
    if kind not in RENDER_KINDS:
        raise ArgumentError(f"unsupported render kind {kind!r}; choose from {list(RENDER_KINDS)}")
    src = _need(c["input"], "input")
    out = Path(c["out"])
    if out.suffix.lower() not in (".png", ".svg"):
        raise ArgumentError(f"unsupported image format {out.suffix!r} (use .png or .svg)")
    out.parent.mkdir(parents=True, exist_ok=True)
    scale = int(c["scale"]) if c["scale"] else None
    h, delta = float(c["h"]), float(c["delta_km"])
    if kind == "map":
        render.write_map_image(read_map(src), out, scale)
    elif kind == "corpus":
        corpus = load_corpus(src)
        maps = list(corpus)[:64]
        img = render.grid_image(maps, int(c["cols"]), scale or 2)
        if out.suffix.lower() != ".png":
            raise ArgumentError("corpus grids render to .png only")
        out.write_bytes(render.encode_png(img))
    elif kind == "profile":
        d, v = _read_profile_csv(src)
        idx = find_peaks_array(v, d, h, delta)
        render.write_scene(render.profile_scene(d, v, [(d[i], v[i]) for i in idx]), out)
    elif kind == "peaks":
        prof = radial_profile(read_map(src))
        ps = find_peaks(prof, h, delta)
        render.write_scene(render.profile_scene(prof.distances, prof.values, ps.peaks,
                                                title=f"radial profile, {len(ps)} peaks"), out)
    else:
        try:
            report = json.loads(src.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{src}: invalid JSON ({exc.msg})") from None
        if not isinstance(report, dict) or "cluster" not in report or "peak_hist_real" not in report:
            raise ParseError(f"{src}: not a comparison report")
        render.write_scene(render.report_scene(report), out)
    return [str(out)]


COMMANDS = {
    "synth-corpus": cmd_synth_corpus, "ingest": cmd_ingest, "train": cmd_train, "generate": cmd_generate,
    "profile": cmd_profile, "peaks": cmd_peaks, "cluster": cmd_cluster, "compare": cmd_compare,
    "render": cmd_render,
}


def _fail(kind: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = resolve_config(args)
        if args.print_config:
            print(json.dumps({"command": args.command, **config}, sort_keys=True), flush=True)
        written = COMMANDS[args.command](config)
        print(json.dumps({"command": args.command, "wrote": written}))
        return 0
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UrbanGanError as exc:
        kind = {2: "usage", 3: "data", 4: "numeric"}.get(exc.exit_code, "data")
        return _fail(kind, exc, exc.exit_code)
    except (OSError, UnicodeDecodeError) as exc:
        return _fail("data", exc, 3)
    except (FloatingPointError, OverflowError, ZeroDivisionError) as exc:
        return _fail("numeric", exc, 4)
    except KeyboardInterrupt as exc:
        return _fail("interrupted", exc, 130)
    except Exception as exc:  # last resort; keep the single-line contract
        return _fail("internal", exc, 1)


if __name__ == "__main__":
    sys.exit(main())
