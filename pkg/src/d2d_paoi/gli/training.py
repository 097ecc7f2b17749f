"""Unsupervised minibatch training over random layouts."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..model import ChannelParams, TrafficParams
from .net import LinkBatch, NetConfig, NetParams, batch_loss, loss_and_gradients, prepare_batch, subset

log = logging.getLogger(__name__)


@dataclass
class TrainingCurve:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    learning_rate: list[float] = field(default_factory=list)
    wall_s: list[float] = field(default_factory=list)

    def append(self, epoch, train, val, lr, wall):
        self.epoch.append(epoch)
        self.train_loss.append(train)
        self.val_loss.append(val)
        self.learning_rate.append(lr)
        self.wall_s.append(wall)

    def rows(self):
        return [
            {"epoch": e, "train_loss": t, "val_loss": v, "learning_rate": lr, "wall_s": w}
            for e, t, v, lr, w in zip(self.epoch, self.train_loss, self.val_loss, self.learning_rate, self.wall_s)
        ]


def evaluate(batch: LinkBatch, params: NetParams, cfg: NetConfig, tr: TrafficParams, chunk: int = 64) -> float:
    """Mean loss over every layout of a prepared batch."""
    total = 0.0
    for start in range(0, batch.n_layouts, chunk):
        idx = np.arange(start, min(start + chunk, batch.n_layouts))
        total += batch_loss(subset(batch, idx), params, cfg, tr) * len(idx)
    return total / batch.n_layouts


def train(train_layouts, params0: NetParams, cfg: NetConfig, ch: ChannelParams, tr: TrafficParams,
          val_layouts=None, val_fraction: float = 0.1, grad_clip: float | None = 10.0,
          patience: int = 5, max_lr_halvings: int = 6) -> tuple[NetParams, TrainingCurve]:
    """Momentum SGD on the batch-mean peak AoI; returns the best-validation parameters.

    ``grad_clip`` rescales any minibatch gradient whose global norm exceeds it.
    If the training loss rises for ``patience`` consecutive epochs the
    learning rate is halved and training resumes from the best parameters.
    """
    train_layouts = list(train_layouts)
    if not train_layouts:
        raise ValueError("empty training set")
    if val_layouts is None:
        n_val = max(1, int(round(val_fraction * len(train_layouts)))) if len(train_layouts) > 1 else 0
        val_layouts = train_layouts[len(train_layouts) - n_val:]
        train_layouts = train_layouts[: len(train_layouts) - n_val]
    params0.check(cfg)
    t0 = time.perf_counter()
    tb = prepare_batch(train_layouts, cfg, ch)
    vb = prepare_batch(val_layouts, cfg, ch) if val_layouts else None
    rng = np.random.default_rng(cfg.seed)

    params = params0.copy()
    vel = params.zeros_like()
    lr = cfg.learning_rate
    curve = TrainingCurve()

    def val_of(p):
        return evaluate(vb, p, cfg, tr) if vb is not None else evaluate(tb, p, cfg, tr)

    best_val = val_of(params)
    best = params.copy()
    curve.append(0, evaluate(tb, params, cfg, tr), best_val, lr, time.perf_counter() - t0)
    rises, halvings = 0, 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(tb.n_layouts)
        epoch_losses = []
        for start in range(0, tb.n_layouts, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads, _ = loss_and_gradients(subset(tb, idx), params, cfg, tr)
            gt = grads.tensors()
            if grad_clip is not None:
                norm = np.sqrt(sum(float(np.sum(g * g)) for g in gt))
                if norm > grad_clip:
                    gt = [g * (grad_clip / norm) for g in gt]
            for v, w, g in zip(vel.tensors(), params.tensors(), gt):
                v *= cfg.momentum
                v -= lr * g
                w += v
            epoch_losses.append(loss * len(idx))
        train_loss = float(np.sum(epoch_losses) / tb.n_layouts)
        if not np.isfinite(train_loss) or not all(np.all(np.isfinite(t)) for t in params.tensors()):
            train_loss = float("inf")
        val = val_of(params) if np.isfinite(train_loss) else float("inf")
        curve.append(epoch, train_loss, val, lr, time.perf_counter() - t0)
        log.info("epoch %d train %.5f val %.5f lr %.3g", epoch, train_loss, val, lr)
        if val < best_val:
            best_val, best = val, params.copy()
        if np.isfinite(train_loss) and train_loss < curve.train_loss[-2]:
            rises = 0
        else:
            rises += 1
        if rises >= patience or not np.isfinite(train_loss):
            if halvings >= max_lr_halvings:
                break
            lr *= 0.5
            halvings += 1
            rises = 0
            params = best.copy()
            vel = params.zeros_like()
    return best, curve
