"""Mini-batch training of a graph network on top of a prior stack."""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from common.exceptions import ConfigError, TrainingDivergedError
from neighbors.engine import build_with_retry
from neighbors.types import NeighborSpec, capacity_for
from potential.config import GNConfig
from potential.network import GraphPotential
from potential.params import trainable_names
from priors.stack import PriorStack, build_prior_stack
from priors.terms import Atomref
from structure.composition import ComposedPotential
from structure.energy import EnergyForces
from training.checkpoint import Checkpoint
from training.datasets import Dataset, batch_frames, split
from training.losses import Mode, energy_loss_gradient, loss_and_metrics
from training.optim import Adam, TrainerState

logger = logging.getLogger(__name__)

ATOMREF_PARAM = "atomref"

DOUBLE_BACKPROP_MESSAGE = (
    "neg_dy_weight > 0 would need parameter gradients of the force term "
    "(double backpropagation), which training does not compute; set neg_dy_weight: 0"
)


def fit_atomref(dataset: Dataset, indices) -> dict[int, float]:
    """Least-squares per-element energies over the given frames."""
    elements = np.unique(np.concatenate([dataset[i].species for i in indices]))
    counts = np.zeros((len(indices), len(elements)))
    energies = np.zeros(len(indices))
    for row, index in enumerate(indices):
        frame = dataset[index]
        counts[row] = [(frame.species == z).sum() for z in elements]
        energies[row] = frame.energy
    values, *_ = np.linalg.lstsq(counts, energies, rcond=None)
    return {int(z): float(v) for z, v in zip(elements, values)}


def prepare_priors(config, dataset: Dataset, train_indices) -> PriorStack:
    names = [n.strip().lower() for n in config.prior_model.split(",") if n.strip()]
    table = config.atomref
    if Atomref.name in names and not table:
        table = fit_atomref(dataset, train_indices)
        logger.info("fitted atomref on %d frames: %s", len(train_indices), table)
    return build_prior_stack(
        names,
        atomref=table,
        atomref_learnable=config.atomref_learnable,
        coulomb_switch=config.coulomb_switch,
        d2_s6=config.d2_s6,
        d2_steep=config.d2_steep,
    )


class Batches:
    """Batched systems and full neighbor lists of dataset frames."""

    def __init__(self, config, dataset: Dataset, threads: int | None = None):
        self.config = config
        self.dataset = dataset
        self.threads = threads
        self.static_capacity = None
        if config.static_shapes:
            largest = np.sort(dataset.atom_counts())[::-1][: config.batch_size].sum()
            self.static_capacity = capacity_for(int(largest), config.max_num_neighbors)

    def __call__(self, indices):
        frames = [self.dataset[i] for i in indices]
        system, energy, forces = batch_frames(frames)
        spec = NeighborSpec.from_run_config(self.config, system.n_atoms, full_list=True)
        if self.static_capacity is not None:
            spec = spec.with_capacity(self.static_capacity)
        neighbors, _ = build_with_retry(system, spec, threads=self.threads)
        return system, neighbors, EnergyForces(energy, forces)

    def chunks(self, indices):
        size = self.config.batch_size
        for start in range(0, len(indices), size):
            yield self(indices[start : start + size])


def standardization(batches: Batches, indices, priors: PriorStack) -> tuple[float, float]:
    """Mean and spread of per-atom residual energies (after the priors)."""
    per_atom = []
    for system, neighbors, target in batches.chunks(indices):
        residual = target.energy
        if len(priors):
            residual = residual - priors.evaluate(system, neighbors, derivative=False).energy
        per_atom.append(residual / system.sample_sizes)
    per_atom = np.concatenate(per_atom)
    std = float(per_atom.std())
    return float(per_atom.mean()), std if std > 0 else 1.0


def evaluate_split(potential: ComposedPotential, batches: Batches, indices, config, mode):
    energies, forces, target_energies, target_forces = [], [], [], []
    for system, neighbors, target in batches.chunks(indices):
        pred = potential.evaluate(system, neighbors)
        energies.append(pred.energy)
        target_energies.append(target.energy)
        if pred.forces is not None and target.forces is not None:
            forces.append(pred.forces)
            target_forces.append(target.forces)
    pred = EnergyForces(
        np.concatenate(energies), np.concatenate(forces) if forces else None
    )
    target = EnergyForces(
        np.concatenate(target_energies),
        np.concatenate(target_forces) if target_forces else None,
    )
    return loss_and_metrics(pred, target, config.y_weight, 0.0, mode)


def train(
    config,
    dataset: Dataset,
    stack: PriorStack | None = None,
    threads: int | None = None,
    progress: Callable[[dict], None] | None = None,
) -> Checkpoint:
    """Fit a graph network; returns the checkpoint of the best validation epoch."""
    if config.neg_dy_weight > 0:
        raise ConfigError(DOUBLE_BACKPROP_MESSAGE)
    indices = split(dataset, config.train_size, config.val_size, config.seed)
    if len(indices.train) == 0 or len(indices.val) == 0:
        raise ConfigError("train_size and val_size must each select at least one frame")

    priors = prepare_priors(config, dataset, indices.train) if stack is None else stack
    batches = Batches(config, dataset, threads)
    mean, std = 0.0, 1.0
    if config.standardize:
        mean, std = standardization(batches, indices.train, priors)
        logger.info("standardization: mean %.6g eV/atom, std %.6g eV/atom", mean, std)

    gn_config = GNConfig.from_run_config(config, mean=mean, std=std)
    network = GraphPotential(gn_config, seed=config.seed)
    params = network.params
    names = trainable_names(gn_config)
    atomref = priors.learnable_atomref
    potential = ComposedPotential(
        network=network,
        priors=priors,
        derivative=config.derivative and dataset.has_forces,
    )

    state = TrainerState.from_run_config(config)
    adam = Adam()
    rng = np.random.default_rng(config.seed)
    best_params = params.copy()
    best_atomref = None if atomref is None else atomref.values.copy()

    initial = evaluate_split(potential, batches, indices.val, config, Mode.VAL)
    history = [{"epoch": 0, "lr": state.lr, **{f"val_{k}": v for k, v in initial.items()}}]
    logger.info(
        "training %d parameters on %d frames (%d validation)",
        params.n_parameters,
        len(indices.train),
        len(indices.val),
    )

    for epoch in range(1, config.num_epochs + 1):
        order = rng.permutation(indices.train)
        losses = []
        for system, neighbors, target in batches.chunks(order):
            graph_system, graph_neighbors = system, neighbors
            if gn_config.static_shapes:
                graph_system, graph_neighbors = network.pad_static(system, neighbors)
            network_out, cache = network.forward(graph_system, graph_neighbors)
            energy = network_out.energy
            if len(priors):
                energy = energy + priors.evaluate(system, neighbors, derivative=False).energy
            loss = loss_and_metrics(
                EnergyForces(energy), EnergyForces(target.energy), config.y_weight
            )["loss"]
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}, step {state.step + 1} "
                    f"(lr {state.lr:.3g})"
                )
            losses.append(loss)

            upstream = energy_loss_gradient(energy, target.energy, config.y_weight)
            gradients = network.backward_params(graph_system, graph_neighbors, upstream, cache)
            gradients = {name: gradients[name] for name in names}
            arrays = params.arrays
            if atomref is not None:
                gradients[ATOMREF_PARAM] = atomref.parameter_gradient(system, upstream)
                arrays = {**arrays, ATOMREF_PARAM: atomref.values}
            adam.step(arrays, gradients, state.step_lr())
            params.touch()

        train_loss = float(np.mean(losses))
        state.record_train_loss(train_loss)
        val = evaluate_split(potential, batches, indices.val, config, Mode.VAL)
        improved = state.end_epoch(
            val["y_mse"], val.get("neg_dy_mse"), config.y_weight, config.neg_dy_weight
        )
        if improved:
            best_params = params.copy()
            if atomref is not None:
                best_atomref = atomref.values.copy()
            logger.debug("epoch %d: new best validation loss %.6g", epoch, state.best_val)

        record = {
            "epoch": epoch,
            "lr": state.lr,
            "train_loss": train_loss,
            "ema_train_loss": state.ema_train_y,
            **{f"val_{k}": v for k, v in val.items()},
        }
        history.append(record)
        if progress is not None:
            progress(record)
        if state.should_stop:
            logger.info(
                "early stopping at epoch %d, best epoch %d", epoch, state.best_epoch
            )
            break

    params.arrays.update(best_params.copy().arrays)
    params.touch()
    if atomref is not None:
        atomref.values[:] = best_atomref

    metrics = {
        "n_parameters": params.n_parameters,
        "best_epoch": state.best_epoch,
        "history": history,
    }
    if len(indices.test):
        metrics["test"] = evaluate_split(potential, batches, indices.test, config, Mode.TEST)

    return Checkpoint(
        gn_config=gn_config,
        params=params,
        priors=priors,
        state=state,
        adam=adam,
        split=indices,
        split_seed=config.seed,
        run_config=config.as_dict(),
        metrics=metrics,
    )
