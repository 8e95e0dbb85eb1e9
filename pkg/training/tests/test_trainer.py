import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from common.config import config_from_mapping
from common.exceptions import CheckpointError, ConfigError
from common.testing import random_cluster
from neighbors.engine import build_neighbor_list
from potential.config import GNConfig
from potential.params import GNParams
from priors.scan import dimer_scan
from priors.stack import PriorStack
from priors.terms import ZBL, Atomref
from training.checkpoint import (
    Checkpoint,
    load_checkpoint,
    potential_for_run,
    save_checkpoint,
)
from training.datasets import Dataset, Frame, split
from training.trainer import fit_atomref, train

TINY_MODEL = {
    "embedding_dimension": 4,
    "num_layers": 1,
    "num_rbf": 4,
    "cutoff_upper": 3.0,
    "max_z": 10,
}


def toy_dataset(n_frames=12, seed=0):
    """Small hydrogen/oxygen clusters with a pairwise toy energy."""
    rng = np.random.default_rng(seed)
    frames = []
    for _ in range(n_frames):
        system = random_cluster(rng, int(rng.integers(2, 5)), species=(1, 8))
        d = np.linalg.norm(system.positions[:, None] - system.positions[None], axis=-1)
        energy = -0.5 * len(system.species) + np.exp(-d[np.triu_indices(len(d), 1)]).sum()
        frames.append(Frame(system.positions, system.species, float(energy)))
    return Dataset.from_frames(frames)


def zbl_dimer_dataset(n_frames=48, seed=0):
    """Randomly oriented H2 dimers labelled with the screened nuclear repulsion."""
    rng = np.random.default_rng(seed)
    distances = np.sort(rng.uniform(0.8, 2.5, size=n_frames))
    profile = dimer_scan(ZBL(), 1, 1, distances, cutoff_upper=3.0)
    frames = []
    for d, energy in zip(profile.distances, profile.energies):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        positions = np.stack([np.zeros(3), d * direction])
        frames.append(Frame(positions, np.array([1, 1]), float(energy)))
    return Dataset.from_frames(frames)


class TrainTests(SimpleTestCase):
    def config(self, **changes):
        values = {
            **TINY_MODEL,
            "num_epochs": 3,
            "batch_size": 4,
            "train_size": 8,
            "val_size": 2,
            "lr": 1e-3,
            "seed": 3,
        }
        values.update(changes)
        return config_from_mapping(values)

    def test_same_seed_same_parameters(self):
        dataset = toy_dataset()
        first = train(self.config(), dataset)
        second = train(self.config(), dataset)
        for name, array in first.params.items():
            np.testing.assert_array_equal(array, second.params[name])
        self.assertEqual(first.metrics["history"], second.metrics["history"])

    def test_checkpoint_contents(self):
        dataset = toy_dataset()
        checkpoint = train(self.config(), dataset)
        history = checkpoint.metrics["history"]
        self.assertEqual([row["epoch"] for row in history], [0, 1, 2, 3])
        self.assertIn("test", checkpoint.metrics)
        expected = split(dataset, 8, 2, seed=3)
        np.testing.assert_array_equal(checkpoint.split.train, expected.train)
        best = min(range(1, 4), key=lambda e: history[e]["val_y_mse"])
        self.assertEqual(checkpoint.state.best_epoch, best)

    def test_progress_callback(self):
        seen = []
        train(self.config(num_epochs=2), toy_dataset(), progress=seen.append)
        self.assertEqual([row["epoch"] for row in seen], [1, 2])

    def test_learnable_atomref(self):
        config = self.config(prior_model="atomref", atomref_learnable=True, num_epochs=2)
        checkpoint = train(config, toy_dataset())
        (atomref,) = checkpoint.priors.terms
        self.assertTrue(atomref.learnable)
        self.assertEqual(sorted(atomref.table), [1, 8])

    def test_static_shapes(self):
        checkpoint = train(self.config(static_shapes=True, num_epochs=1), toy_dataset())
        self.assertTrue(checkpoint.gn_config.static_shapes)

    def test_force_weight_is_rejected(self):
        with self.assertRaisesMessage(ConfigError, "double backpropagation"):
            train(self.config(neg_dy_weight=1.0), toy_dataset())

    def test_fit_atomref_recovers_element_energies(self):
        frames = []
        for n_h, n_o in ((2, 1), (1, 1), (4, 2)):
            species = np.array([1] * n_h + [8] * n_o)
            frames.append(Frame(np.zeros((len(species), 3)), species, -0.5 * n_h - 75.0 * n_o))
        table = fit_atomref(Dataset.from_frames(frames), [0, 1, 2])
        self.assertAlmostEqual(table[1], -0.5)
        self.assertAlmostEqual(table[8], -75.0)


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        self.path = Path(directory.name) / "model.ckpt"
        config = GNConfig(**TINY_MODEL)
        self.checkpoint = Checkpoint(
            gn_config=config,
            params=GNParams.initialize(config, seed=5),
            priors=PriorStack([Atomref({1: -0.5, 8: -75.0}), ZBL()]),
            split_seed=5,
        )
        self.system = random_cluster(np.random.default_rng(6), 4, species=(1, 8))

    def energy(self, checkpoint):
        potential = checkpoint.potential()
        spec = potential.neighbor_spec(self.system.n_atoms)
        return potential.evaluate(self.system, build_neighbor_list(self.system, spec)).energy

    def test_round_trip(self):
        save_checkpoint(self.checkpoint, self.path)
        loaded = load_checkpoint(self.path)
        np.testing.assert_array_equal(self.energy(loaded), self.energy(self.checkpoint))
        self.assertEqual(loaded.priors.describe(), self.checkpoint.priors.describe())

    def test_truncated_file(self):
        save_checkpoint(self.checkpoint, self.path)
        data = self.path.read_bytes()
        self.path.write_bytes(data[: len(data) - 16])
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_unsupported_version(self):
        save_checkpoint(self.checkpoint, self.path)
        data = bytearray(self.path.read_bytes())
        data[4] = 2
        self.path.write_bytes(bytes(data))
        with self.assertRaisesMessage(CheckpointError, "unsupported version 2"):
            load_checkpoint(self.path)

    def test_not_a_checkpoint(self):
        self.path.write_bytes(b"hello world, not a model")
        with self.assertRaisesMessage(CheckpointError, "corrupt payload"):
            load_checkpoint(self.path)

    def test_missing_file(self):
        with self.assertRaisesMessage(CheckpointError, "not found"):
            load_checkpoint(self.path)


class PotentialForRunTests(SimpleTestCase):
    def test_priors_only(self):
        config = config_from_mapping({"prior_model": "zbl", "cutoff_upper": 4.0})
        potential = potential_for_run(config)
        self.assertIsNone(potential.network)
        self.assertEqual(potential.neighbor_spec(3).cutoff_upper, 4.0)

    def test_nothing_to_evaluate(self):
        with self.assertRaisesMessage(ConfigError, "prior_model is empty"):
            potential_for_run(config_from_mapping())


class ConvergenceTests(SimpleTestCase):
    def test_dimer_curve_is_learned(self):
        config = config_from_mapping(
            {
                "embedding_dimension": 16,
                "num_layers": 1,
                "num_rbf": 16,
                "cutoff_upper": 3.0,
                "max_z": 10,
                "num_epochs": 300,
                "batch_size": 8,
                "train_size": 32,
                "val_size": 8,
                "lr": 5e-3,
                "standardize": True,
                "ema_alpha_y": 0.1,
                "seed": 1,
            }
        )
        checkpoint = train(config, zbl_dimer_dataset())
        history = checkpoint.metrics["history"]
        best = history[checkpoint.state.best_epoch]
        self.assertLessEqual(best["val_y_mse"], 1e-2 * history[0]["val_y_mse"])
        self.assertLess(history[-1]["ema_train_loss"], history[1]["ema_train_loss"])
