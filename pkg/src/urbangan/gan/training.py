"""Alternating adversarial training.

Each iteration takes ``d_steps_per_g_step`` discriminator updates followed by
one generator update. All randomness for iteration ``t`` comes from a stream
keyed on (seed, t), and minibatches walk a per-epoch seeded permutation of the
corpus, so the trajectory depends only on (config, corpus, step) and a run
resumed from a checkpoint continues exactly as an uninterrupted one would.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from .. import seeding
from ..corpus import Corpus
from ..errors import ArgumentError, TrainingError
from ..nn import adam_step
from .model import GanModel, d_loss, g_loss


@dataclass(frozen=True)
class StepRecord:
    step: int
    loss_d: float
    loss_g: float
    d_real: float
    d_fake: float


@dataclass
class TrainingLog:
    records: list[StepRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "loss_d", "loss_g", "d_real", "d_fake"])
        for r in self.records:
            w.writerow([r.step, repr(r.loss_d), repr(r.loss_g), repr(r.d_real), repr(r.d_fake)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([asdict(r) for r in self.records])

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()


class _BatchStream:
    """Deterministic minibatch indices: draw k covers positions [k*B, (k+1)*B) of the epoch chain."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n, self.batch_size, self.seed = n, batch_size, seed
        self._perms: dict[int, np.ndarray] = {}

    def _perm(self, epoch: int) -> np.ndarray:
        if epoch not in self._perms:
            self._perms = {epoch: seeding.rng(self.seed, "shuffle", epoch).permutation(self.n)}
        return self._perms[epoch]

    def indices(self, draw: int) -> np.ndarray:
        pos = draw * self.batch_size + np.arange(self.batch_size)
        return np.array([self._perm(int(p // self.n))[p % self.n] for p in pos])


Callback = Callable[[GanModel, StepRecord], None]


def corpus_tensor(corpus: Corpus) -> np.ndarray:
    """(n, 1, W, W) array in the generator's [-1, 1] range."""
    return (2.0 * corpus.values - 1.0)[:, None, :, :]


def _snapshot(model: GanModel):
    arrays = [p.data for p in model.params().values()]
    arrays += list(model.generator.named_buffers().values()) + list(model.discriminator.named_buffers().values())
    opts = [(o, o.step, {k: v.copy() for k, v in o.m.items()}, {k: v.copy() for k, v in o.v.items()})
            for o in (model.opt_g, model.opt_d)]
    return [(a, a.copy()) for a in arrays], opts


def _restore(snapshot) -> None:
    arrays, opts = snapshot
    for a, saved in arrays:
        a[...] = saved
    for o, step, m, v in opts:
        o.step, o.m, o.v = step, m, v


def _fail(model: GanModel, snapshot, what: str, t: int, value: float):
    _restore(snapshot)
    return TrainingError(f"non-finite {what} loss at step {t}: {value}")


def train(model: GanModel, corpus: Corpus, steps: int,
          callbacks: Iterable[Callback] = ()) -> TrainingLog:
    cfg = model.config
    if steps < 0:
        raise ArgumentError("steps must be >= 0")
    if corpus.width != cfg.output_width:
        raise ArgumentError(f"corpus width {corpus.width} does not match model width {cfg.output_width}")
    data = corpus_tensor(corpus)
    stream = _BatchStream(len(corpus), cfg.batch_size, cfg.seed)
    callbacks = list(callbacks)
    log = TrainingLog()
    for _ in range(steps):
        t = model.step
        rng = seeding.rng(cfg.seed, "step", t)
        # an iteration either completes or leaves the model exactly as it was
        snap = _snapshot(model)
        for k in range(cfg.d_steps_per_g_step):
            real = data[stream.indices(t * cfg.d_steps_per_g_step + k)]
            z = rng.standard_normal((cfg.batch_size, cfg.z_dim))
            model.zero_grad()
            rd = d_loss(model, real, z)
            if not math.isfinite(rd.loss):
                raise _fail(model, snap, "discriminator", t, rd.loss)
            adam_step(model.d_params(), rd.grads, model.opt_d)
        z = rng.standard_normal((cfg.batch_size, cfg.z_dim))
        model.zero_grad()
        rg = g_loss(model, z)
        if not math.isfinite(rg.loss):
            raise _fail(model, snap, "generator", t, rg.loss)
        adam_step(model.g_params(), rg.grads, model.opt_g)
        model.step += 1
        rec = StepRecord(t, rd.loss, rg.loss, rd.d_real, rd.d_fake)
        log.records.append(rec)
        for cb in callbacks:
            cb(model, rec)
    return log
