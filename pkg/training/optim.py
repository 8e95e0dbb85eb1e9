from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from training.losses import ema_update

logger = logging.getLogger(__name__)


class Adam:
    """Adam with bias correction; updates arrays in place."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, grad in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(grad)
                self.v[name] = np.zeros_like(grad)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            params[name] -= lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"adam.m.{name}": a for name, a in self.m.items()}
        out.update({f"adam.v.{name}": a for name, a in self.v.items()})
        return out

    @classmethod
    def from_arrays(cls, t: int, arrays: dict[str, np.ndarray]) -> Adam:
        adam = cls()
        adam.t = t
        for key, array in arrays.items():
            if key.startswith("adam.m."):
                adam.m[key[len("adam.m.") :]] = np.array(array)
            elif key.startswith("adam.v."):
                adam.v[key[len("adam.v.") :]] = np.array(array)
        return adam


@dataclass
class TrainerState:
    """Step counters, learning-rate schedule and early-stopping bookkeeping.

    ``lr`` is the plateau-adjusted rate; during warmup the optimizer uses
    ``lr * step / lr_warmup_steps``.
    """

    lr: float
    lr_warmup_steps: int = 0
    lr_factor: float = 0.8
    lr_patience: int = 15
    lr_min: float = 1e-7
    early_stopping_patience: int = 150
    ema_alpha_y: float = 1.0
    ema_alpha_neg_dy: float = 1.0
    step: int = 0
    epoch: int = 0
    ema_train_y: float | None = None
    ema_y: float | None = None
    ema_neg_dy: float | None = None
    best_val: float | None = None
    best_epoch: int | None = None
    epochs_since_best: int = 0
    bad_epochs: int = 0
    lr_decay_epochs: list[int] = field(default_factory=list)

    @classmethod
    def from_run_config(cls, config) -> TrainerState:
        return cls(
            lr=config.lr,
            lr_warmup_steps=config.lr_warmup_steps,
            lr_factor=config.lr_factor,
            lr_patience=config.lr_patience,
            lr_min=config.lr_min,
            early_stopping_patience=config.early_stopping_patience,
            ema_alpha_y=config.ema_alpha_y,
            ema_alpha_neg_dy=config.ema_alpha_neg_dy,
        )

    def step_lr(self) -> float:
        """Learning rate of the next optimizer step, and advance the step counter."""
        self.step += 1
        if self.lr_warmup_steps and self.step < self.lr_warmup_steps:
            return self.lr * self.step / self.lr_warmup_steps
        return self.lr

    def record_train_loss(self, value: float) -> float:
        self.ema_train_y = ema_update(self.ema_train_y, value, self.ema_alpha_y)
        return self.ema_train_y

    def end_epoch(
        self,
        val_y: float,
        val_neg_dy: float | None = None,
        y_weight: float = 1.0,
        neg_dy_weight: float = 0.0,
    ) -> bool:
        """Feed one epoch of validation losses; returns whether it improved."""
        self.epoch += 1
        self.ema_y = ema_update(self.ema_y, val_y, self.ema_alpha_y)
        monitored = y_weight * self.ema_y
        if val_neg_dy is not None:
            self.ema_neg_dy = ema_update(self.ema_neg_dy, val_neg_dy, self.ema_alpha_neg_dy)
            monitored += neg_dy_weight * self.ema_neg_dy

        if self.best_val is None or monitored < self.best_val:
            self.best_val = monitored
            self.best_epoch = self.epoch
            self.epochs_since_best = 0
            self.bad_epochs = 0
            return True

        self.epochs_since_best += 1
        self.bad_epochs += 1
        if self.bad_epochs >= self.lr_patience:
            self.bad_epochs = 0
            if self.lr > self.lr_min:
                self.lr = max(self.lr * self.lr_factor, self.lr_min)
                self.lr_decay_epochs.append(self.epoch)
                logger.info("epoch %d: learning rate reduced to %.3g", self.epoch, self.lr)
        return False

    @property
    def should_stop(self) -> bool:
        return self.epochs_since_best >= self.early_stopping_patience

    def as_dict(self) -> dict:
        values = asdict(self)
        for key, value in values.items():
            if isinstance(value, float) and not math.isfinite(value):
                values[key] = None
        return values
