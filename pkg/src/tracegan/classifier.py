"""The decision engine: an MLP over flattened 32x32 images scoring anomalies.

Inputs are scaled to [0, 1] (p/255). Hidden layers are ReLU, the head is a
single sigmoid unit; training minimizes binary cross-entropy with Adam
(beta1=0.9) on seeded mini-batches, using the logits form of the loss for
stability. The sigmoid layer stays part of the persisted network, prediction
always goes through it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agck import read_container, write_container
from .data import Label
from .errors import CheckpointError, DataError
from .imaging import IMAGE_PIXELS, TraceImage
from .nn import Adam, Linear, ReLU, Sequential, Sigmoid, sigmoid
from .oversampling import BalancedSet
from .seeding import derive_seed, make_rng


@dataclass(frozen=True)
class MlpConfig:
    hidden_sizes: tuple[int, ...] = (100, 20)
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise DataError("hidden_sizes must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise DataError(f"threshold {self.threshold} outside (0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise DataError("bad MLP training hyper-parameters")


@dataclass
class TrainedMlp:
    net: Sequential
    cfg: MlpConfig
    training_log: list[float] = field(default_factory=list)


def build_mlp(cfg: MlpConfig, dtype=np.float32) -> Sequential:
    rng = make_rng(derive_seed(cfg.seed, "mlp.init"))
    sizes = [IMAGE_PIXELS, *cfg.hidden_sizes]
    layers = []
    for a, b in zip(sizes, sizes[1:]):
        layers += [Linear(a, b, rng, dtype), ReLU()]
    layers += [Linear(sizes[-1], 1, rng, dtype), Sigmoid()]
    return Sequential(layers)


def _image_matrix(images: list[TraceImage]) -> np.ndarray:
    return np.stack([im.pixels.ravel() for im in images]).astype(np.float32) / 255.0


def train_mlp(data: BalancedSet | list[TraceImage], cfg: MlpConfig) -> TrainedMlp:
    images = data.images if isinstance(data, BalancedSet) else list(data)
    if not images:
        raise DataError("cannot train on empty data")
    targets = np.array([1.0 if im.label is Label.ANOMALY else 0.0 for im in images], np.float32)
    if targets.min() == targets.max():
        raise DataError("training data contains a single class")
    x_all = _image_matrix(images)

    net = build_mlp(cfg)
    logits_net = Sequential(net.layers[:-1])  # shares layer objects with net
    opt = Adam(logits_net.params(), beta1=0.9, beta2=0.999)
    shuffle_rng = make_rng(derive_seed(cfg.seed, "mlp.shuffle"))
    n = len(images)
    epoch_losses: list[float] = []
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, tb = x_all[idx], targets[idx]
            z, caches = logits_net.forward(xb)
            z = z[:, 0]
            # BCE in logits form: softplus(z) - t*z
            total += float(np.sum(np.logaddexp(0.0, z.astype(np.float64)) - tb * z))
            dz = ((sigmoid(z) - tb) / len(idx)).astype(np.float32)[:, None]
            logits_net.zero_grads()
            logits_net.backward(caches, dz)
            opt.step(logits_net.grads(), cfg.lr)
        epoch_losses.append(total / n)
    return TrainedMlp(net, cfg, epoch_losses)


def predict_scores(model: TrainedMlp, images: list[TraceImage]) -> np.ndarray:
    if not images:
        return np.zeros(0, np.float64)
    scores, _ = model.net.forward(_image_matrix(images), keep=False)
    return scores[:, 0].astype(np.float64)


def predict_labels(model: TrainedMlp, images: list[TraceImage],
                   threshold: float | None = None) -> list[Label]:
    th = model.cfg.threshold if threshold is None else threshold
    return [Label.ANOMALY if s >= th else Label.NORMAL for s in predict_scores(model, images)]


def save_mlp(model: TrainedMlp, path: str | Path, approach: str = "") -> None:
    config = {
        "kind": "mlp",
        "hidden_sizes": ",".join(str(h) for h in model.cfg.hidden_sizes),
        "epochs": str(model.cfg.epochs),
        "batch_size": str(model.cfg.batch_size),
        "lr": repr(model.cfg.lr),
        "seed": str(model.cfg.seed),
        "threshold": repr(model.cfg.threshold),
        "approach": approach,
        "training_log": ",".join(repr(v) for v in model.training_log),
    }
    write_container(path, config, dict(model.net.params()))


def load_mlp(path: str | Path) -> tuple[TrainedMlp, str]:
    config, tensors = read_container(path)
    if config.get("kind") != "mlp":
        raise CheckpointError(f"{path}: not an MLP container (kind={config.get('kind')!r})")
    cfg = MlpConfig(
        hidden_sizes=tuple(int(h) for h in config["hidden_sizes"].split(",")),
        epochs=int(config["epochs"]),
        batch_size=int(config["batch_size"]),
        lr=float(config["lr"]),
        seed=int(config["seed"]),
        threshold=float(config["threshold"]),
    )
    net = build_mlp(cfg)
    for name, p in net.params().items():
        if name not in tensors:
            raise CheckpointError(f"{path}: missing tensor {name}")
        if tensors[name].shape != p.shape:
            raise CheckpointError(
                f"{path}: tensor {name} has shape {tensors[name].shape}, expected {p.shape}"
            )
        p[...] = tensors[name]
    log_txt = config.get("training_log", "")
    training_log = [float(v) for v in log_txt.split(",")] if log_txt else []
    return TrainedMlp(net, cfg, training_log), config.get("approach", "")
