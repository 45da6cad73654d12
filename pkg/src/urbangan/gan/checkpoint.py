"""Binary checkpoints.

Layout (little-endian)::

    b"CGAN" | u32 version (=1) | u64 header length | JSON header | float64 data

The header holds the config, step counter, both architectures, optimizer
hyperparameters/step counts and an ordered tensor table of (name, shape);
tensor data follows in table order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError, UrbanGanError
from ..nn import AdamState, LayerSpec, Network
from .model import GanConfig, GanModel

MAGIC = b"CGAN"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


def _tensors(model: GanModel) -> list[tuple[str, np.ndarray]]:
    out = []
    for tag, net in (("G", model.generator), ("D", model.discriminator)):
        out += [(f"{tag}.param.{k}", p.data) for k, p in net.named_parameters().items()]
        out += [(f"{tag}.buffer.{k}", b) for k, b in net.named_buffers().items()]
    for tag, opt in (("G", model.opt_g), ("D", model.opt_d)):
        for k in sorted(opt.m):
            out.append((f"{tag}.adam_m.{k}", opt.m[k]))
            out.append((f"{tag}.adam_v.{k}", opt.v[k]))
    return out


def to_bytes(model: GanModel) -> bytes:
    tensors = _tensors(model)
    header = {
        "config": model.config.to_dict(),
        "step": model.step,
        "architecture": {
            "G": [s.to_dict() for s in model.generator.specs()],
            "D": [s.to_dict() for s in model.discriminator.specs()],
        },
        "frozen": sorted(k for k, p in model.params().items() if p.frozen),
        "optim": {"G": {**model.opt_g.hyper(), "step": model.opt_g.step},
                  "D": {**model.opt_d.hyper(), "step": model.opt_d.step}},
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in tensors],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in tensors)
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + body


def save_checkpoint(model: GanModel, path) -> None:
    Path(path).write_bytes(to_bytes(model))


def _fail(field: str, msg: str):
    raise CheckpointError(f"checkpoint {field}: {msg}")


def from_bytes(data: bytes) -> GanModel:
    if len(data) < _PREFIX.size:
        _fail("magic", "file too short for the fixed prefix")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        _fail("magic", f"expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        _fail("version", f"unsupported version {version}")
    start = _PREFIX.size
    if len(data) < start + hlen:
        _fail("header", "truncated")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
        table = header["tensors"]
        config = GanConfig.from_dict(header["config"])
        step = int(header["step"])
        arch = header["architecture"]
        optim = header["optim"]
    except (ValueError, KeyError, TypeError, UrbanGanError) as exc:
        _fail("header", f"malformed ({exc})")
    offset = start + hlen
    need = sum(8 * int(np.prod(e["shape"], dtype=np.int64)) for e in table)
    if len(data) - offset != need:
        _fail("tensor table", f"expects {need} data bytes, file has {len(data) - offset}")
    try:
        gen = Network.from_specs(LayerSpec.from_dict(d) for d in arch["G"])
        disc = Network.from_specs(LayerSpec.from_dict(d) for d in arch["D"])
    except (UrbanGanError, TypeError, KeyError) as exc:
        _fail("architecture", str(exc))
    opts = {}
    for tag in ("G", "D"):
        o = optim[tag]
        opts[tag] = AdamState(o["lr"], o["beta1"], o["beta2"], o["eps"], int(o["step"]))
    nets = {"G": gen, "D": disc}
    targets = {}
    for tag, net in nets.items():
        targets.update({f"{tag}.param.{k}": p.data for k, p in net.named_parameters().items()})
        targets.update({f"{tag}.buffer.{k}": b for k, b in net.named_buffers().items()})
    for entry in table:
        name, shape = entry["name"], tuple(entry["shape"])
        arr = np.frombuffer(data, dtype="<f8", count=int(np.prod(shape, dtype=np.int64)),
                            offset=offset).reshape(shape)
        offset += arr.nbytes
        tag, kind, key = name.split(".", 2)
        if kind in ("adam_m", "adam_v"):
            if tag not in opts:
                _fail("tensor table", f"unknown optimizer tensor {name}")
            (opts[tag].m if kind == "adam_m" else opts[tag].v)[key] = arr.astype(np.float64)
            continue
        if name not in targets:
            _fail("tensor table", f"unknown tensor {name}")
        if targets[name].shape != shape:
            _fail("tensor table", f"{name} has shape {shape}, architecture expects {targets[name].shape}")
        targets[name][...] = arr
    missing = set(targets) - {e["name"] for e in table}
    if missing:
        _fail("tensor table", f"missing tensors {sorted(missing)}")
    model = GanModel(config, gen, disc, opts["G"], opts["D"], step)
    for name in header.get("frozen", []):
        model.params()[name].frozen = True
    return model


def load_checkpoint(path) -> GanModel:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path}: no such file")
    return from_bytes(path.read_bytes())
