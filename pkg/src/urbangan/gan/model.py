"""Generator/discriminator pair and the adversarial losses.

Generator: z -> linear projection to a 4x4 feature map -> ``n_blocks``
stride-2 transposed convolutions (batchnorm + ReLU between, tanh at the end),
doubling the side each time up to ``output_width``. The discriminator mirrors
it with stride-2 convolutions, leaky ReLU, and a linear + sigmoid head giving
P(real | x).

Sign convention: the discriminator objective E[log D(x)] + E[log(1 - D(G(z)))]
is something D maximises, so ``d_loss`` returns its negation and all training
is minimisation. Labels: real = 1, fake = 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .. import seeding
from ..corpus import Corpus
from ..errors import ArgumentError, ShapeError
from ..nn import (AdamState, BatchNorm, Conv2d, ConvTranspose2d, LeakyReLU, Linear, Network,
                  Parameter, ReLU, Reshape, Sigmoid, Tanh)
from ..raster import from_symmetric_range

LOG_CLAMP = 1e-12
LOSS_VARIANTS = ("paper_saturating", "non_saturating")


@dataclass(frozen=True)
class GanConfig:
    z_dim: int = 64
    output_width: int = 32
    base_channels: int = 64
    loss_variant: str = "non_saturating"
    d_steps_per_g_step: int = 1
    batch_size: int = 32
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    leaky_slope: float = 0.2
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    pixel_size: float = 750.0
    seed: int = 0

    def __post_init__(self):
        w = self.output_width
        if w < 8 or w & (w - 1):
            raise ArgumentError(f"output_width must be a power of two >= 8, got {w}")
        if self.z_dim < 1:
            raise ArgumentError("z_dim must be >= 1")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be >= 1")
        if self.d_steps_per_g_step < 1:
            raise ArgumentError("d_steps_per_g_step must be >= 1")
        if self.base_channels < 1:
            raise ArgumentError("base_channels must be >= 1")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ArgumentError(f"loss_variant must be one of {LOSS_VARIANTS}")
        if not self.pixel_size > 0:
            raise ArgumentError("pixel_size must be > 0")

    @property
    def n_blocks(self) -> int:
        return int(math.log2(self.output_width)) - 2

    def channels(self) -> list[int]:
        """Generator feature widths from the 4x4 stage outward (halving per block)."""
        return [max(1, self.base_channels >> i) for i in range(self.n_blocks)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GanConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ArgumentError(f"unknown GAN config keys: {sorted(unknown)}")
        return cls(**d)


def build_generator(cfg: GanConfig) -> Network:
    ch = cfg.channels()
    layers = [Linear(cfg.z_dim, ch[0] * 16), Reshape((ch[0], 4, 4)),
              BatchNorm(ch[0], cfg.bn_eps, cfg.bn_momentum), ReLU()]
    for i in range(cfg.n_blocks):
        last = i == cfg.n_blocks - 1
        c_out = 1 if last else ch[i + 1]
        layers.append(ConvTranspose2d(ch[i], c_out, 4, 2, 1))
        layers += [Tanh()] if last else [BatchNorm(c_out, cfg.bn_eps, cfg.bn_momentum), ReLU()]
    return Network(layers)


def build_discriminator(cfg: GanConfig) -> Network:
    ch = cfg.channels()[::-1]
    layers = [Conv2d(1, ch[0], 4, 2, 1), LeakyReLU(cfg.leaky_slope)]
    for i in range(1, cfg.n_blocks):
        layers += [Conv2d(ch[i - 1], ch[i], 4, 2, 1), BatchNorm(ch[i], cfg.bn_eps, cfg.bn_momentum),
                   LeakyReLU(cfg.leaky_slope)]
    layers += [Linear(ch[-1] * 16, 1), Sigmoid()]
    return Network(layers)


class GanModel:
    def __init__(self, config: GanConfig, generator: Network, discriminator: Network,
                 opt_g: AdamState | None = None, opt_d: AdamState | None = None, step: int = 0):
        self.config = config
        self.generator = generator
        self.discriminator = discriminator
        self.opt_g = opt_g or AdamState(config.lr_g, config.beta1, config.beta2, config.adam_eps)
        self.opt_d = opt_d or AdamState(config.lr_d, config.beta1, config.beta2, config.adam_eps)
        self.step = step

    def g_params(self) -> dict[str, Parameter]:
        return self.generator.named_parameters()

    def d_params(self) -> dict[str, Parameter]:
        return self.discriminator.named_parameters()

    def params(self) -> dict[str, Parameter]:
        """All parameters, prefixed ``G.`` / ``D.``."""
        out = {f"G.{k}": p for k, p in self.g_params().items()}
        out.update({f"D.{k}": p for k, p in self.d_params().items()})
        return out

    def zero_grad(self) -> None:
        for p in self.params().values():
            p.zero_grad()

    def generate(self, z: np.ndarray, train: bool = False) -> np.ndarray:
        return self.generator(z, train)

    def discriminate(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        return self.discriminator(x, train).reshape(-1)


def build(config: GanConfig, seed: int | None = None) -> GanModel:
    """Fresh model; weights ~ N(0, 0.02), biases 0, batchnorm scale 1."""
    seed = config.seed if seed is None else seed
    g, d = build_generator(config), build_discriminator(config)
    g.init_params(seeding.rng(seed, "init", "G"))
    d.init_params(seeding.rng(seed, "init", "D"))
    return GanModel(config, g, d)


@dataclass
class LossResult:
    loss: float
    grads: dict[str, np.ndarray]  # keyed by the owning network's parameter names
    d_real: float = float("nan")
    d_fake: float = float("nan")


def _log_clamped(p: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(p, LOG_CLAMP))


def _dlog(p: np.ndarray, n: int) -> np.ndarray:
    """d/dp of mean(log(max(p, clamp))) over a batch of n; zero where the clamp is active."""
    return np.where(p > LOG_CLAMP, 1.0 / (n * np.maximum(p, LOG_CLAMP)), 0.0)


def _accumulate(params: dict[str, Parameter], grads: dict[str, np.ndarray]) -> None:
    for name, g in grads.items():
        params[name].grad += g


def _check_batch(model: GanModel, x: np.ndarray, what: str) -> None:
    w = model.config.output_width
    if x.ndim != 4 or x.shape[1:] != (1, w, w) or x.shape[0] < 1:
        raise ShapeError(f"{what}: expected shape (N>=1, 1, {w}, {w}), got {x.shape}")


def _check_z(model: GanModel, z: np.ndarray) -> None:
    if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] != model.config.z_dim:
        raise ShapeError(f"z batch: expected shape (N>=1, {model.config.z_dim}), got {z.shape}")


def d_loss(model: GanModel, real: np.ndarray, z: np.ndarray) -> LossResult:
    """-(mean log D(x) + mean log(1 - D(G(z)))) and its gradient w.r.t. the discriminator only."""
    _check_batch(model, real, "real batch")
    _check_z(model, z)
    fake = model.generator(z, train=True)
    D = model.discriminator
    p_real, ctx_r = D.forward(real, train=True)
    p_fake, ctx_f = D.forward(fake, train=True)
    nr, nf = p_real.shape[0], p_fake.shape[0]
    loss = -(float(np.mean(_log_clamped(p_real))) + float(np.mean(_log_clamped(1.0 - p_fake))))
    _, g_real = D.backward(-_dlog(p_real, nr), ctx_r)
    _, g_fake = D.backward(_dlog(1.0 - p_fake, nf), ctx_f)
    grads = {k: g_real[k] + g_fake[k] for k in g_real}
    _accumulate(model.d_params(), grads)
    return LossResult(loss, grads, float(p_real.mean()), float(p_fake.mean()))


def g_loss(model: GanModel, z: np.ndarray) -> LossResult:
    """Generator loss and its gradient w.r.t. the generator only.

    ``paper_saturating``: mean log(1 - D(G(z))).
    ``non_saturating``: -mean log D(G(z)).
    """
    _check_z(model, z)
    fake, ctx_g = model.generator.forward(z, train=True)
    p, ctx_d = model.discriminator.forward(fake, train=True)
    n = p.shape[0]
    if model.config.loss_variant == "paper_saturating":
        loss = float(np.mean(_log_clamped(1.0 - p)))
        dp = -_dlog(1.0 - p, n)
    else:
        loss = -float(np.mean(_log_clamped(p)))
        dp = -_dlog(p, n)
    dfake, _ = model.discriminator.backward(dp, ctx_d)
    _, grads = model.generator.backward(dfake, ctx_g)
    _accumulate(model.g_params(), grads)
    return LossResult(loss, grads, d_fake=float(p.mean()))


SAMPLE_CHUNK = 1024


def sample(model: GanModel, n: int, seed: int) -> Corpus:
    """Draw ``n`` maps from the generator (eval mode), mapped back to [0, 1] fractions."""
    if n < 1:
        raise ArgumentError("sample size must be >= 1")
    cfg = model.config
    z = seeding.rng(seed, "sample").standard_normal((n, cfg.z_dim))
    out = np.empty((n, cfg.output_width, cfg.output_width))
    for lo in range(0, n, SAMPLE_CHUNK):
        x = model.generator(z[lo:lo + SAMPLE_CHUNK], train=False)
        out[lo:lo + SAMPLE_CHUNK] = np.clip((x[:, 0] + 1.0) / 2.0, 0.0, 1.0)
    manifest = [{"index": i, "source": "gan", "city_id": f"synth-{i:05d}"} for i in range(n)]
    return Corpus(out, cfg.pixel_size, manifest, {"sample_seed": seed, "model_step": model.step})


def sample_map(model: GanModel, z: np.ndarray):
    """A single generated map as a CityMap (via the symmetric-range inverse)."""
    x = model.generator(np.asarray(z, dtype=np.float64).reshape(1, -1), train=False)
    return from_symmetric_range(x[0, 0], model.config.pixel_size)
