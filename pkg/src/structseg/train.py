"""Loss, schedule, optimizer, and the training driver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, ShapeError, TrainingDivergedError
from .rng import Rng, mix
from .tensor import Tensor, accumulate_grad, backward, make_op_output
from . import tensor as T

IGNORE_LABEL = 255


def cross_entropy_loss(logits: Tensor, target: np.ndarray,
                       ignore_label: int = IGNORE_LABEL) -> Tensor:
    """Mean per-pixel negative log-likelihood over non-ignored pixels.

    logits: (K,h,w) or (B,K,h,w); target: matching (h,w) or (B,h,w) int
    class indices. Fused op with an analytic softmax-minus-onehot adjoint.
    """
    data = logits.data
    if data.ndim == 3:
        data = data[None]
        target = np.asarray(target)[None]
    else:
        target = np.asarray(target)
    b, k, h, w = data.shape
    if target.shape != (b, h, w):
        raise ShapeError(f"target shape {target.shape} != logits spatial {(b, h, w)}")

    valid = target != ignore_label
    labels = np.where(valid, target, 0).astype(np.int64)
    if labels.min() < 0 or labels[valid].max(initial=0) >= k:
        raise ValueError(f"class index out of range [0,{k}) in target")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("all pixels ignored: empty loss reduction")

    shifted = data - data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logprobs = shifted - logsumexp
    picked = np.take_along_axis(logprobs, labels[:, None], axis=1)[:, 0]
    loss = -(picked * valid).sum(dtype=np.float64) / n_valid

    def bw(g):
        probs = np.exp(logprobs)
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, labels[:, None], 1.0, axis=1)
        grad = (probs - onehot) * (valid[:, None] / n_valid) * g
        accumulate_grad(logits, grad.reshape(logits.shape).astype(logits.dtype))

    return make_op_output(np.asarray(loss, dtype=data.dtype), (logits,), bw)


def poly_lr(iteration: int, total: int, base_lr: float, power: float = 0.9) -> float:
    """Polynomial decay: base_lr * (1 - iter/total)^power, non-increasing."""
    if not 0 <= iteration <= total:
        raise ValueError(f"iteration {iteration} outside [0, {total}]")
    return base_lr * (1.0 - iteration / total) ** power


class AdamW:
    """Decoupled weight decay plus bias-corrected Adam."""

    def __init__(self, named_params: list[tuple[str, Tensor]], *,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = list(named_params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}

    def step(self, lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ShapeError(f"grad shape {g.shape} != param shape {p.data.shape} ({name})")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= lr * (update + self.weight_decay * p.data)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()


@dataclass
class TrainConfig:
    total_iters: int = 2000
    base_lr: float = 1e-3
    poly_power: float = 0.9
    batch_size: int = 8
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    ignore_label: int = IGNORE_LABEL
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.total_iters < 1:
            raise ConfigError("total_iters must be >= 1")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        return self


@dataclass
class TrainRecord:
    iteration: int
    lr: float
    loss: float

    def format(self) -> str:
        return f"iter={self.iteration} lr={self.lr:.8g} loss={self.loss:.8g}"


def train(model, images: np.ndarray, masks: np.ndarray, cfg: TrainConfig,
          log_fn: Callable[[str], None] | None = None) -> list[TrainRecord]:
    """Seeded SGD loop: batch, forward, upsampled loss, backward, AdamW step.

    images: (N,3,h,w) float32; masks: (N,h,w) int. Returns one record per
    iteration; aborts with a diagnostic if the loss goes non-finite.
    """
    if cfg.total_iters == 0:
        return []
    cfg.validate()
    if len(images) == 0:
        raise ConfigError("empty training set")
    sampler = Rng(mix(cfg.seed, 0xBA7C4))
    optim = AdamW(list(model.named_parameters()),
                  beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
                  weight_decay=cfg.weight_decay)
    records: list[TrainRecord] = []
    for it in range(cfg.total_iters):
        idx = [sampler.randint(len(images)) for _ in range(cfg.batch_size)]
        batch = Tensor(images[idx])
        labels = masks[idx]
        logits = model.segment_logits(batch)
        loss = cross_entropy_loss(logits, labels, cfg.ignore_label)
        loss_val = loss.item()
        if not math.isfinite(loss_val):
            raise TrainingDivergedError(f"non-finite loss at iteration {it}")
        optim.zero_grad()
        backward(loss)
        optim.step(poly_lr(it, cfg.total_iters, cfg.base_lr, cfg.poly_power))
        rec = TrainRecord(it, poly_lr(it, cfg.total_iters, cfg.base_lr, cfg.poly_power), loss_val)
        records.append(rec)
        if log_fn is not None:
            log_fn(rec.format())
    return records
