from __future__ import annotations

import numpy as np
from django.db import models
from django.utils.translation import gettext_lazy as _

from common.exceptions import ConfigError, DataError
from structure.energy import EnergyForces


class Mode(models.TextChoices):
    TRAIN = "train", _("TRAIN")
    VAL = "val", _("VALIDATION")
    TEST = "test", _("TEST")


def _mse(pred, target) -> float:
    return float(np.mean((pred - target) ** 2))


def _l1(pred, target) -> float:
    return float(np.mean(np.abs(pred - target)))


def loss_and_metrics(
    pred: EnergyForces,
    target: EnergyForces,
    y_weight: float = 1.0,
    neg_dy_weight: float = 0.0,
    mode: Mode = Mode.TRAIN,
) -> dict[str, float]:
    """Weighted MSE for training, L1 and MSE for validation, L1 for testing.

    Force terms are averaged over every Cartesian component.
    """
    mode = Mode(mode)
    if np.shape(pred.energy) != np.shape(target.energy):
        raise DataError(
            f"shape mismatch: {np.shape(pred.energy)} predicted vs "
            f"{np.shape(target.energy)} target energies"
        )
    use_forces = target.forces is not None and pred.forces is not None
    if use_forces and np.shape(pred.forces) != np.shape(target.forces):
        raise DataError(
            f"shape mismatch: {np.shape(pred.forces)} predicted vs "
            f"{np.shape(target.forces)} target forces"
        )
    if neg_dy_weight > 0 and not use_forces:
        raise ConfigError("neg_dy_weight > 0 needs force targets and predicted forces")

    metrics = {}
    if mode == Mode.TEST:
        metrics["y_l1"] = _l1(pred.energy, target.energy)
        if use_forces:
            metrics["neg_dy_l1"] = _l1(pred.forces, target.forces)
        return metrics

    metrics["y_mse"] = _mse(pred.energy, target.energy)
    loss = y_weight * metrics["y_mse"]
    if use_forces:
        metrics["neg_dy_mse"] = _mse(pred.forces, target.forces)
        loss += neg_dy_weight * metrics["neg_dy_mse"]
    if mode == Mode.VAL:
        metrics["y_l1"] = _l1(pred.energy, target.energy)
        if use_forces:
            metrics["neg_dy_l1"] = _l1(pred.forces, target.forces)
    metrics["loss"] = loss
    return metrics


def energy_loss_gradient(pred_energy, target_energy, y_weight: float) -> np.ndarray:
    """d(y_weight * MSE(E)) / dE_s, the upstream of the parameter backward pass."""
    pred_energy = np.asarray(pred_energy, dtype=np.float64)
    return y_weight * 2.0 * (pred_energy - target_energy) / len(pred_energy)


def ema_update(prev: float | None, value: float, alpha: float) -> float:
    if prev is None:
        return value
    return alpha * value + (1.0 - alpha) * prev
