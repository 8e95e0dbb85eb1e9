import itertools

import numpy as np
from django.test import SimpleTestCase

from common.exceptions import ConfigError, NeighborListError, SystemValidationError
from common.testing import random_cluster, random_reduced_box, random_rotation
from neighbors.engine import build_neighbor_list
from neighbors.types import NeighborSpec
from potential.config import GNConfig
from potential.network import GraphPotential
from priors.stack import PriorStack
from priors.terms import ZBL
from structure.composition import ComposedPotential, evaluate
from structure.elements import atomic_mass, atomic_number, element_symbol
from structure.system import Box, BoxKind, System, build_system, minimum_image, permute_system


class BuildSystemTests(SimpleTestCase):
    def test_batch_defaults_to_single_sample(self):
        system = build_system([[0, 0, 0], [1, 0, 0]], [1, 1])
        np.testing.assert_array_equal(system.batch, [0, 0])
        self.assertEqual(system.n_samples, 1)

    def test_gap_in_batch_codes(self):
        with self.assertRaisesMessage(SystemValidationError, "non-contiguous batch"):
            build_system([[0, 0, 0], [1, 0, 0]], [1, 1], batch=[0, 2])

    def test_length_mismatch(self):
        with self.assertRaisesMessage(SystemValidationError, "length mismatch"):
            build_system([[0, 0, 0], [1, 0, 0]], [1])

    def test_non_finite_positions(self):
        with self.assertRaises(SystemValidationError):
            build_system([[0, 0, np.nan]], [1])

    def test_unreduced_triclinic_box(self):
        with self.assertRaisesMessage(SystemValidationError, "box not reduced"):
            Box.triclinic([[10, 0, 0], [6, 9, 0], [0, 0, 8]])

    def test_orthorhombic_off_diagonal(self):
        with self.assertRaisesMessage(SystemValidationError, "malformed box"):
            Box(BoxKind.ORTHORHOMBIC, [[10, 1, 0], [0, 10, 0], [0, 0, 10]])

    def test_arrays_are_read_only(self):
        system = build_system([[0, 0, 0]], [1])
        with self.assertRaises(ValueError):
            system.positions[0, 0] = 1.0

    def test_concatenate_renumbers_samples(self):
        a = build_system([[0, 0, 0], [1, 0, 0]], [1, 1])
        b = build_system([[0, 0, 0]], [8])
        joined = System.concatenate([a, b, a])
        np.testing.assert_array_equal(joined.batch, [0, 0, 1, 2, 2])
        np.testing.assert_array_equal(joined.sample_sizes, [2, 1, 2])
        np.testing.assert_array_equal(joined.sample(1).species, [8])


class MinimumImageTests(SimpleTestCase):
    def test_orthorhombic_wrap(self):
        result = minimum_image([9.8, 0, 0], Box.orthorhombic(10.0))
        np.testing.assert_allclose(result, [-0.2, 0, 0], atol=1e-12)

    def test_no_box_is_identity(self):
        np.testing.assert_array_equal(minimum_image([5, 5, 5], None), [5, 5, 5])
        np.testing.assert_array_equal(minimum_image([5, 5, 5], Box()), [5, 5, 5])

    def _exhaustive(self, delta, box):
        a, b, c = box.vectors
        images = [
            delta + i * a + j * b + k * c
            for i, j, k in itertools.product((-1, 0, 1), repeat=3)
        ]
        return min(images, key=np.linalg.norm)

    def test_triclinic_matches_exhaustive_search(self):
        box = Box.triclinic([[10, 0, 0], [5, 9, 0], [0, 0, 8]])
        delta = np.array([-4.7, 8.5, 0.0])
        expected = self._exhaustive(delta, box)
        np.testing.assert_allclose(minimum_image(delta, box), expected, atol=1e-12)

    def test_minimum_image_is_optimal(self):
        rng = np.random.default_rng(7)
        shifts = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.float64)
        checked = 0
        for _ in range(10_000):
            box = random_reduced_box(rng)
            # displacements between atoms of the primary cell
            delta = rng.uniform(-0.5, 0.5, size=3) @ box.vectors
            reduced = minimum_image(delta, box)
            best = np.linalg.norm(delta + shifts @ box.vectors, axis=1).min()
            if best < box.max_cutoff():
                checked += 1
                self.assertAlmostEqual(np.linalg.norm(reduced), best, places=12)
        self.assertGreater(checked, 1000)

    def test_wrap_maps_into_the_primary_cell(self):
        box = Box.orthorhombic(4.0, 5.0, 6.0)
        wrapped = box.wrap(np.array([[-1.0, 11.0, 6.5]]))
        np.testing.assert_allclose(wrapped, [[3.0, 1.0, 0.5]])


class ElementTests(SimpleTestCase):
    def test_symbols_round_trip(self):
        for symbol in ("H", "C", "N", "O", "S", "Cl"):
            self.assertEqual(element_symbol(atomic_number(symbol)), symbol)

    def test_symbols_are_case_insensitive(self):
        self.assertEqual(atomic_number("cl"), 17)

    def test_masses(self):
        self.assertAlmostEqual(atomic_mass(1), 1.008, places=3)
        self.assertAlmostEqual(atomic_mass(8), 15.999, places=3)


class ComposedPotentialTests(SimpleTestCase):
    def setUp(self):
        self.system = build_system([[0, 0, 0], [0.74, 0, 0]], [1, 1])
        self.config = GNConfig(embedding_dimension=8, num_layers=1, num_rbf=4, cutoff_upper=3.0)
        self.network = GraphPotential(self.config, seed=3)
        spec = NeighborSpec(cutoff_upper=3.0, capacity=4, full_list=True)
        self.neighbors = build_neighbor_list(self.system, spec)

    def test_empty_potential(self):
        with self.assertRaisesMessage(ConfigError, "empty potential"):
            ComposedPotential(priors=PriorStack())

    def test_priors_only_equals_stack(self):
        stack = PriorStack([ZBL()])
        potential = ComposedPotential(priors=stack, cutoff_upper=3.0)
        result = evaluate(potential, self.system, self.neighbors)
        expected = stack.evaluate(self.system, self.neighbors)
        np.testing.assert_array_equal(result.energy, expected.energy)
        np.testing.assert_array_equal(result.forces, expected.forces)

    def test_network_plus_zbl_is_additive(self):
        combined = ComposedPotential(network=self.network, priors=PriorStack([ZBL()]))
        network_only = ComposedPotential(network=self.network)
        priors_only = ComposedPotential(priors=PriorStack([ZBL()]), cutoff_upper=3.0)
        total = combined.evaluate(self.system, self.neighbors)
        parts = network_only.evaluate(self.system, self.neighbors) + priors_only.evaluate(
            self.system, self.neighbors
        )
        np.testing.assert_allclose(total.energy, parts.energy, atol=1e-12)
        np.testing.assert_allclose(total.forces, parts.forces, atol=1e-12)

    def test_cutoff_mismatch(self):
        potential = ComposedPotential(priors=PriorStack([ZBL()]), cutoff_upper=2.0)
        with self.assertRaisesMessage(NeighborListError, "cutoff mismatch"):
            potential.evaluate(self.system, self.neighbors)

    def test_derivative_false_omits_forces(self):
        potential = ComposedPotential(network=self.network, derivative=False)
        self.assertIsNone(potential.evaluate(self.system, self.neighbors).forces)

    def test_neighbor_spec_follows_the_network(self):
        potential = ComposedPotential(network=self.network)
        spec = potential.neighbor_spec(2, max_num_neighbors=8)
        self.assertTrue(spec.full_list)
        self.assertEqual(spec.cutoff_upper, 3.0)
        self.assertEqual(spec.capacity, 16)

    def test_permutation_consistency(self):
        rng = np.random.default_rng(1)
        system = random_cluster(rng, 6, batch=[0, 0, 0, 1, 1, 1])
        order = [2, 0, 1, 5, 3, 4]
        permuted = permute_system(system, order)
        spec = NeighborSpec(cutoff_upper=3.0, capacity=64, full_list=True)
        potential = ComposedPotential(network=self.network, priors=PriorStack([ZBL()]))
        result = potential.evaluate(system, build_neighbor_list(system, spec))
        moved = potential.evaluate(permuted, build_neighbor_list(permuted, spec))
        np.testing.assert_allclose(moved.energy, result.energy, atol=1e-10)
        np.testing.assert_allclose(moved.forces, result.forces[order], atol=1e-10)
        np.testing.assert_allclose(
            moved.per_atom_energy, result.per_atom_energy[order], atol=1e-10
        )

    def test_per_atom_energies_sum_to_sample_energies(self):
        rng = np.random.default_rng(2)
        system = random_cluster(rng, 5, batch=[0, 0, 1, 1, 1])
        rotated = system.with_positions(system.positions @ random_rotation(rng).T)
        spec = NeighborSpec(cutoff_upper=3.0, capacity=64, full_list=True)
        potential = ComposedPotential(network=self.network, priors=PriorStack([ZBL()]))
        result = potential.evaluate(rotated, build_neighbor_list(rotated, spec))
        sums = np.bincount(rotated.batch, weights=result.per_atom_energy)
        np.testing.assert_allclose(sums, result.energy, atol=1e-10)
