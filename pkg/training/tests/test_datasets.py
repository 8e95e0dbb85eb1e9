import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from common.exceptions import ConfigError, DatasetFormatError
from training.container import write_container
from training.datasets import (
    Dataset,
    Frame,
    Source,
    batch_frames,
    load_binary_container,
    load_dataset,
    load_extxyz,
    load_systems,
    split,
    write_binary_container,
)

H2 = "2\nenergy=-1.0\nH 0 0 0\nH 0.74 0 0\n"


class DatasetFileTestCase(SimpleTestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)

    def path(self, name, content=None):
        path = Path(self.directory.name) / name
        if content is not None:
            path.write_text(content, encoding="utf-8")
        return path


class ExtxyzTests(DatasetFileTestCase):
    def test_single_frame(self):
        dataset = load_extxyz(self.path("h2.xyz", H2))
        self.assertEqual(len(dataset), 1)
        self.assertEqual(dataset[0].n_atoms, 2)
        self.assertEqual(dataset[0].energy, -1.0)
        self.assertFalse(dataset.has_forces)
        self.assertEqual(dataset.source, Source.EXTXYZ)

    def test_missing_energy(self):
        with self.assertRaisesMessage(DatasetFormatError, "line 2: missing energy key"):
            load_extxyz(self.path("bad.xyz", "2\nname=x\nH 0 0 0\nH 1 0 0\n"))

    def test_forces(self):
        text = "2\nenergy=-1.0\nH 0 0 0 0.5 0 0\nH 0.74 0 0 -0.5 0 0\n"
        dataset = load_extxyz(self.path("f.xyz", text))
        self.assertTrue(dataset.has_forces)
        self.assertTrue(np.all(np.isfinite(dataset[0].forces)))

    def test_load_dataset_detects_the_format(self):
        self.assertEqual(load_dataset(self.path("h2.xyz", H2)).source, Source.EXTXYZ)
        with self.assertRaisesMessage(DatasetFormatError, "not found"):
            load_dataset(self.path("missing.xyz"))

    def test_load_systems_without_energies(self):
        systems = load_systems(self.path("s.xyz", "1\n\nO 0 0 0\n" * 3))
        self.assertEqual(len(systems), 3)
        self.assertEqual(systems[0].species.tolist(), [8])


class ContainerTests(DatasetFileTestCase):
    def frames(self):
        rng = np.random.default_rng(0)
        return [
            Frame(rng.uniform(0, 3, size=(n, 3)), np.ones(n, dtype=int), -float(n))
            for n in (2, 3, 5)
        ]

    def test_ragged_round_trip(self):
        dataset = Dataset.from_frames(self.frames())
        path = self.path("ragged.bin")
        write_binary_container(path, dataset)
        loaded = load_dataset(path)
        self.assertEqual(loaded.source, Source.CONTAINER)
        self.assertEqual([f.n_atoms for f in loaded], [2, 3, 5])
        np.testing.assert_array_equal(loaded[2].positions, dataset[2].positions)
        self.assertIsInstance(loaded.positions, np.memmap)

    def test_dense_layout_with_shared_species(self):
        path = self.path("dense.bin")
        write_container(
            path,
            {
                "pos": np.zeros((4, 3, 3)),
                "z": np.array([8, 1, 1]),
                "energy": np.arange(4.0),
                "forces": np.ones((4, 3, 3)),
            },
        )
        dataset = load_binary_container(path)
        self.assertEqual(len(dataset), 4)
        self.assertEqual(dataset[3].species.tolist(), [8, 1, 1])
        self.assertEqual(dataset[3].energy, 3.0)

    def test_wrong_magic(self):
        path = self.path("text.bin", "not binary at all")
        with self.assertRaisesMessage(DatasetFormatError, "not a dataset container"):
            load_binary_container(path)

    def test_energy_count_mismatch(self):
        path = self.path("mismatch.bin")
        write_container(path, {"pos": np.zeros((2, 3, 3)), "z": np.ones(3), "energy": np.zeros(3)})
        with self.assertRaisesMessage(DatasetFormatError, "shape error"):
            load_binary_container(path)

    def test_missing_array(self):
        path = self.path("partial.bin")
        write_container(path, {"pos": np.zeros((2, 3, 3)), "energy": np.zeros(2)})
        with self.assertRaisesMessage(DatasetFormatError, "'z'"):
            load_binary_container(path)

    def test_mixed_forces(self):
        frames = self.frames()
        frames[0] = Frame(frames[0].positions, frames[0].species, -2.0, np.zeros((2, 3)))
        with self.assertRaisesMessage(DatasetFormatError, "every frame or none"):
            Dataset.from_frames(frames)

    def test_batch_frames(self):
        system, energy, forces = batch_frames(self.frames())
        self.assertEqual(system.n_samples, 3)
        np.testing.assert_array_equal(energy, [-2.0, -3.0, -5.0])
        self.assertIsNone(forces)


class SplitTests(SimpleTestCase):
    def test_counts(self):
        indices = split(10, 8, 1, seed=0)
        self.assertEqual([len(part) for part in indices], [8, 1, 1])
        joined = np.concatenate(indices)
        self.assertEqual(sorted(joined.tolist()), list(range(10)))

    def test_fractions(self):
        indices = split(100, 0.9, 0.1, seed=0)
        self.assertEqual([len(part) for part in indices], [90, 10, 0])

    def test_same_seed_same_split(self):
        first, second = split(50, 30, 10, seed=4), split(50, 30, 10, seed=4)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    def test_infeasible(self):
        with self.assertRaisesMessage(ConfigError, "infeasible split"):
            split(10, 8, 5, seed=0)

    def test_fractions_outside_the_unit_interval(self):
        with self.assertRaisesMessage(ConfigError, "train_size as a fraction"):
            split(10, -0.2, 0.1, seed=0)
        with self.assertRaisesMessage(ConfigError, "val_size as a fraction"):
            split(10, 0.5, 1.5, seed=0)
