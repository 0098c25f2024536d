"""Two generators and two discriminators learning the normal<->anomaly
translation over 32x32 trace images.

Generator topology: a 7x7 reflect-padded stem, two stride-2 downsampling
convs, a residual trunk, two stride-2 transposed convs, and a 7x7 tanh head.
Discriminators are patch critics: stacked 4x4 convs ending in a small map of
real/fake logits, trained with the least-squares objective. Generators carry
an L1 cycle-reconstruction penalty weighted by lambda_cycle, and the
discriminators see past fakes through bounded history pools.

The published topology targets 256x256x3 inputs; widths here default to
base_channels=32 with 6 residual blocks for 32x32x1, keeping the block
structure but not the 256-scale widths (whose receptive field would dwarf the
image).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .agck import read_container, write_container
from .data import Dataset, Label
from .errors import CheckpointError, DataError, NumericalError
from .imaging import TraceImage, denormalize, normalize, sequence_to_image
from .nn import (
    Adam,
    Conv2d,
    InstanceNorm,
    LeakyReLU,
    ReLU,
    ResidualBlock,
    Sequential,
    Tanh,
    TransposedConv2d,
)
from .seeding import derive_seed, make_rng

log = logging.getLogger(__name__)

LOSS_CSV_HEADER = "step,loss_G,loss_F,loss_Dx,loss_Dy,cycle_loss"


@dataclass(frozen=True)
class GanConfig:
    residual_blocks: int = 6
    base_channels: int = 32
    lambda_cycle: float = 10.0
    image_pool_size: int = 50
    total_steps: int = 330_000
    lr_plateau_steps: int = 150_000
    lr_decay_steps: int = 200_000
    lr_initial: float = 2e-6
    lr_final: float = 2e-7
    checkpoint_interval: int = 10_000
    log_interval: int = 10_000
    seed: int = 0

    def __post_init__(self):
        for name in ("residual_blocks", "base_channels", "total_steps",
                     "lr_plateau_steps", "lr_decay_steps", "checkpoint_interval",
                     "log_interval"):
            if getattr(self, name) < (0 if name == "total_steps" else 1):
                raise DataError(f"GanConfig.{name} must be positive")
        if self.lambda_cycle < 0 or self.image_pool_size < 0:
            raise DataError("GanConfig weights and pool size must be non-negative")
        if self.lr_initial <= 0 or self.lr_final <= 0 or self.lr_final > self.lr_initial:
            raise DataError("GanConfig needs 0 < lr_final <= lr_initial")


@dataclass(frozen=True)
class LossRecord:
    step: int
    loss_g: float
    loss_f: float
    loss_dx: float
    loss_dy: float
    cycle_loss: float

    def csv_row(self) -> str:
        return (f"{self.step},{self.loss_g!r},{self.loss_f!r},"
                f"{self.loss_dx!r},{self.loss_dy!r},{self.cycle_loss!r}")


class ImagePool:
    """Bounded history buffer of generated images. With capacity 0 it is a
    pass-through; otherwise each query either returns the fresh fake or swaps
    it against a random buffered one (probability one half once full)."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        self.capacity = capacity
        self.rng = rng
        self.buffer: list[np.ndarray] = []

    def query(self, image: np.ndarray) -> np.ndarray:
        if self.capacity == 0:
            return image
        if len(self.buffer) < self.capacity:
            self.buffer.append(image)
            return image
        if self.rng.random() < 0.5:
            i = int(self.rng.integers(self.capacity))
            out = self.buffer[i]
            self.buffer[i] = image
            return out
        return image


def build_generator(cfg: GanConfig, rng: np.random.Generator, dtype=np.float32) -> Sequential:
    b = cfg.base_channels
    layers = [
        Conv2d(1, b, 7, 1, 3, "reflect", rng, dtype), InstanceNorm(b, dtype=dtype), ReLU(),
        Conv2d(b, 2 * b, 3, 2, 1, "zero", rng, dtype), InstanceNorm(2 * b, dtype=dtype), ReLU(),
        Conv2d(2 * b, 4 * b, 3, 2, 1, "zero", rng, dtype), InstanceNorm(4 * b, dtype=dtype), ReLU(),
    ]
    layers += [ResidualBlock(4 * b, rng, dtype) for _ in range(cfg.residual_blocks)]
    layers += [
        TransposedConv2d(4 * b, 2 * b, 3, 2, 1, 1, rng, dtype), InstanceNorm(2 * b, dtype=dtype), ReLU(),
        TransposedConv2d(2 * b, b, 3, 2, 1, 1, rng, dtype), InstanceNorm(b, dtype=dtype), ReLU(),
        Conv2d(b, 1, 7, 1, 3, "reflect", rng, dtype), Tanh(),
    ]
    return Sequential(layers)


def build_discriminator(cfg: GanConfig, rng: np.random.Generator, dtype=np.float32) -> Sequential:
    b = cfg.base_channels
    return Sequential([
        Conv2d(1, 2 * b, 4, 2, 1, "zero", rng, dtype), LeakyReLU(0.2),
        Conv2d(2 * b, 4 * b, 4, 2, 1, "zero", rng, dtype), InstanceNorm(4 * b, dtype=dtype), LeakyReLU(0.2),
        Conv2d(4 * b, 8 * b, 4, 1, 1, "zero", rng, dtype), InstanceNorm(8 * b, dtype=dtype), LeakyReLU(0.2),
        Conv2d(8 * b, 1, 4, 1, 1, "zero", rng, dtype),
    ])


@dataclass
class CycleGanModel:
    cfg: GanConfig
    g: Sequential    # normal -> anomaly
    f: Sequential    # anomaly -> normal
    d_x: Sequential  # judges normal-domain images
    d_y: Sequential  # judges anomaly-domain images
    opt_g: Adam
    opt_f: Adam
    opt_dx: Adam
    opt_dy: Adam
    step: int = 0


def build_model(cfg: GanConfig, seed: int | None = None) -> CycleGanModel:
    rng = make_rng(derive_seed(cfg.seed if seed is None else seed, "init"))
    g = build_generator(cfg, rng)
    f = build_generator(cfg, rng)
    d_x = build_discriminator(cfg, rng)
    d_y = build_discriminator(cfg, rng)
    return CycleGanModel(
        cfg, g, f, d_x, d_y,
        Adam(g.params()), Adam(f.params()), Adam(d_x.params()), Adam(d_y.params()),
    )


def lr_at(step: int, cfg: GanConfig) -> float:
    """Flat at lr_initial through the plateau, then linear to lr_final over
    lr_decay_steps, then flat at lr_final."""
    if step < cfg.lr_plateau_steps:
        return cfg.lr_initial
    frac = min(1.0, (step - cfg.lr_plateau_steps) / cfg.lr_decay_steps)
    return cfg.lr_initial + (cfg.lr_final - cfg.lr_initial) * frac


def lsgan_generator_loss(fake_logits: np.ndarray) -> float:
    """Least-squares adversarial term driving fake patches toward 1."""
    return float(np.mean((fake_logits - 1.0) ** 2))


def lsgan_discriminator_loss(real_logits: np.ndarray, fake_logits: np.ndarray) -> float:
    """Half of (real toward 1) plus (fake toward 0), per patch."""
    return 0.5 * (float(np.mean((real_logits - 1.0) ** 2)) + float(np.mean(fake_logits ** 2)))


def l1_mean(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.abs(a - b)))


def train_step(model: CycleGanModel, x_batch: np.ndarray, y_batch: np.ndarray,
               pools: tuple[ImagePool, ImagePool], cfg: GanConfig | None = None) -> LossRecord:
    """One alternating update: generators jointly (adversarial + cycle), then
    each discriminator against real images and pooled fakes. Returns the
    losses measured before any parameter moved."""
    cfg = cfg or model.cfg
    lr = lr_at(model.step, cfg)
    g, f, d_x, d_y = model.g, model.f, model.d_x, model.d_y
    dt = x_batch.dtype

    fake_y, c_g1 = g.forward(x_batch)
    rec_x, c_f2 = f.forward(fake_y)
    fake_x, c_f1 = f.forward(y_batch)
    rec_y, c_g2 = g.forward(fake_x)
    gy_logits, c_dy = d_y.forward(fake_y)
    fx_logits, c_dx = d_x.forward(fake_x)

    loss_g = lsgan_generator_loss(gy_logits)
    loss_f = lsgan_generator_loss(fx_logits)
    cycle = l1_mean(rec_x, x_batch) + l1_mean(rec_y, y_batch)

    g.zero_grads()
    f.zero_grads()
    d_x.zero_grads()
    d_y.zero_grads()
    lam = cfg.lambda_cycle
    # adversarial heads, back through the (frozen) discriminators into the fakes
    d_fake_y = d_y.backward(c_dy, ((2.0 / gy_logits.size) * (gy_logits - 1.0)).astype(dt))
    d_fake_x = d_x.backward(c_dx, ((2.0 / fx_logits.size) * (fx_logits - 1.0)).astype(dt))
    # cycle heads; F(G(x)) accumulates F's grads and extends the fake_y grad
    d_fake_y = d_fake_y + f.backward(c_f2, ((lam / rec_x.size) * np.sign(rec_x - x_batch)).astype(dt))
    d_fake_x = d_fake_x + g.backward(c_g2, ((lam / rec_y.size) * np.sign(rec_y - y_batch)).astype(dt))
    g.backward(c_g1, d_fake_y)
    f.backward(c_f1, d_fake_x)
    d_x.zero_grads()  # discriminators were only conduits above
    d_y.zero_grads()
    model.opt_g.step(g.grads(), lr)
    model.opt_f.step(f.grads(), lr)

    pool_x, pool_y = pools
    fy = pool_y.query(fake_y)
    fx = pool_x.query(fake_x)

    ry_logits, c_ry = d_y.forward(y_batch)
    fy_logits, c_fy = d_y.forward(fy)
    loss_dy = lsgan_discriminator_loss(ry_logits, fy_logits)
    d_y.zero_grads()
    d_y.backward(c_ry, ((ry_logits - 1.0) / ry_logits.size).astype(dt))
    d_y.backward(c_fy, (fy_logits / fy_logits.size).astype(dt))
    model.opt_dy.step(d_y.grads(), lr)

    rx_logits, c_rx = d_x.forward(x_batch)
    fx2_logits, c_fx = d_x.forward(fx)
    loss_dx = lsgan_discriminator_loss(rx_logits, fx2_logits)
    d_x.zero_grads()
    d_x.backward(c_rx, ((rx_logits - 1.0) / rx_logits.size).astype(dt))
    d_x.backward(c_fx, (fx2_logits / fx2_logits.size).astype(dt))
    model.opt_dx.step(d_x.grads(), lr)

    model.step += 1
    losses = {"loss_G": loss_g, "loss_F": loss_f, "loss_Dx": loss_dx,
              "loss_Dy": loss_dy, "cycle_loss": cycle}
    bad = [k for k, v in losses.items() if not np.isfinite(v)]
    if bad:
        raise NumericalError(f"non-finite losses at step {model.step}: {', '.join(bad)}")
    return LossRecord(model.step, loss_g, loss_f, loss_dx, loss_dy, cycle)


def train(model: CycleGanModel, train_set: Dataset, cfg: GanConfig | None = None,
          on_loss=None, on_checkpoint=None) -> CycleGanModel:
    """Run cfg.total_steps batch-size-1 steps, sampling x uniformly from
    normal images and y from anomaly images (seeded). Emits a loss record
    every log_interval steps and a checkpoint at step 0, every
    checkpoint_interval, and at the final step."""
    cfg = cfg or model.cfg
    normals = train_set.by_label(Label.NORMAL)
    anomalies = train_set.by_label(Label.ANOMALY)
    if not normals or not anomalies:
        raise DataError(
            f"training needs both classes, got {len(normals)} normal / {len(anomalies)} anomaly"
        )
    x_bank = np.stack([normalize(sequence_to_image(t)) for t in normals])
    y_bank = np.stack([normalize(sequence_to_image(t)) for t in anomalies])
    sample_rng = make_rng(derive_seed(cfg.seed, "train.sample"))
    pools = (
        ImagePool(cfg.image_pool_size, make_rng(derive_seed(cfg.seed, "pool.x"))),
        ImagePool(cfg.image_pool_size, make_rng(derive_seed(cfg.seed, "pool.y"))),
    )
    if on_checkpoint is not None and model.step == 0:
        on_checkpoint(0, model)
    while model.step < cfg.total_steps:
        xb = x_bank[int(sample_rng.integers(len(normals)))][None]
        yb = y_bank[int(sample_rng.integers(len(anomalies)))][None]
        record = train_step(model, xb, yb, pools, cfg)
        if on_loss is not None and model.step % cfg.log_interval == 0:
            on_loss(record)
        if on_checkpoint is not None and (
            model.step % cfg.checkpoint_interval == 0 or model.step == cfg.total_steps
        ):
            on_checkpoint(model.step, model)
    return model


def generate(model: CycleGanModel, templates: list[TraceImage],
             batch_size: int = 64) -> list[TraceImage]:
    """Push normal templates through G and return anomaly-labeled byte images,
    source ids suffixed with the producing checkpoint step."""
    for img in templates:
        if img.label is not Label.NORMAL:
            raise DataError(f"template {img.source_id} is not normal-class")
    out: list[TraceImage] = []
    for start in range(0, len(templates), batch_size):
        chunk = templates[start : start + batch_size]
        x = np.stack([normalize(im) for im in chunk])
        y, _ = model.g.forward(x, keep=False)
        for im, t in zip(chunk, y):
            out.append(denormalize(t, Label.ANOMALY, f"{im.source_id}#gen{model.step}"))
    return out


_NETS = ("G", "F", "Dx", "Dy")


def _model_parts(model: CycleGanModel):
    return zip(_NETS, (model.g, model.f, model.d_x, model.d_y),
               (model.opt_g, model.opt_f, model.opt_dx, model.opt_dy))


def save_checkpoint(model: CycleGanModel, path: str | Path) -> None:
    config = {f.name: repr(getattr(model.cfg, f.name)) for f in fields(GanConfig)}
    config["step"] = str(model.step)
    tensors: dict[str, np.ndarray] = {}
    for tag, net, opt in _model_parts(model):
        config[f"adam_t_{tag}"] = str(opt.t)
        for name, p in net.params().items():
            tensors[f"{tag}.{name}"] = p
        for name, m in opt.m.items():
            tensors[f"adam.{tag}.m.{name}"] = m
        for name, v in opt.v.items():
            tensors[f"adam.{tag}.v.{name}"] = v
    write_container(path, config, tensors)


def _parse_gan_config(config: dict[str, str], path) -> GanConfig:
    kwargs = {}
    for f in fields(GanConfig):
        if f.name not in config:
            raise CheckpointError(f"{path}: config block missing field {f.name}")
        raw = config[f.name]
        kwargs[f.name] = float(raw) if f.type == "float" else int(raw)
    return GanConfig(**kwargs)


def load_checkpoint(path: str | Path, cfg: GanConfig | None = None) -> CycleGanModel:
    """Rebuild a model from disk. When ``cfg`` is given its architecture
    fields must match the stored ones; schedule fields are taken from the
    caller so training can resume under a new schedule."""
    config, tensors = read_container(path)
    stored = _parse_gan_config(config, path)
    if cfg is not None:
        for name in ("residual_blocks", "base_channels"):
            want, got = getattr(cfg, name), getattr(stored, name)
            if want != got:
                raise CheckpointError(
                    f"{path}: config mismatch on {name}: checkpoint={got} requested={want}"
                )
        effective = replace(cfg, seed=stored.seed)
    else:
        effective = stored
    model = build_model(effective, seed=stored.seed)
    for tag, net, opt in _model_parts(model):
        for name, p in net.params().items():
            _assign(tensors, f"{tag}.{name}", p, path)
        for name, m in opt.m.items():
            _assign(tensors, f"adam.{tag}.m.{name}", m, path)
        for name, v in opt.v.items():
            _assign(tensors, f"adam.{tag}.v.{name}", v, path)
        key = f"adam_t_{tag}"
        if key not in config:
            raise CheckpointError(f"{path}: config block missing field {key}")
        opt.t = int(config[key])
    if "step" not in config:
        raise CheckpointError(f"{path}: config block missing field step")
    model.step = int(config["step"])
    return model


def _assign(tensors: dict[str, np.ndarray], key: str, dest: np.ndarray, path) -> None:
    if key not in tensors:
        raise CheckpointError(f"{path}: missing tensor {key}")
    src = tensors[key]
    if src.shape != dest.shape:
        raise CheckpointError(f"{path}: tensor {key} has shape {src.shape}, expected {dest.shape}")
    dest[...] = src
