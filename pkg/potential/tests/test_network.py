import math

import numpy as np
from django.test import SimpleTestCase

from common.exceptions import (
    ElementError,
    NeighborListError,
    NeighborOverflowError,
    StaleCacheError,
)
from common.testing import central_difference, random_cluster, random_rotation, relative_error
from neighbors.engine import build_neighbor_list
from neighbors.types import NeighborSpec
from potential import params as P
from potential.config import GNConfig
from potential.functional import cosine_cutoff, expnorm_init, rbf_expnorm, silu
from potential.network import (
    GraphPotential,
    backward_forces,
    backward_params,
    edge_features,
    forward,
    pad_static,
)
from potential.params import GNParams, layer_key, trainable_names
from structure.system import build_system


def graph_neighbors(system, config, capacity=128):
    spec = NeighborSpec(
        cutoff_upper=config.cutoff_upper,
        cutoff_lower=config.cutoff_lower,
        capacity=capacity,
        full_list=True,
    )
    return build_neighbor_list(system, spec)


def randomized_params(config, seed):
    """Initial parameters with every bias and rbf entry perturbed away from zero."""
    params = GNParams.initialize(config, seed)
    rng = np.random.default_rng(seed + 100)
    for name, array in params.items():
        if name in (P.RBF_MEANS, P.RBF_BETAS):
            array *= rng.uniform(0.9, 1.1, size=array.shape)
        elif array.ndim == 1:
            array += rng.normal(0.0, 0.1, size=array.shape)
    return params


class FunctionalTests(SimpleTestCase):
    def test_cosine_cutoff_values(self):
        np.testing.assert_allclose(cosine_cutoff([0.0, 2.5, 5.0, 6.0], 0.0, 5.0), [1, 0.5, 0, 0])

    def test_cosine_cutoff_with_lower_bound(self):
        values = cosine_cutoff([1.0, 3.0, 5.0], 1.0, 5.0)
        np.testing.assert_allclose(values, [0.0, 1.0, 0.0], atol=1e-15)

    def test_rbf_peaks_at_its_mean(self):
        value = rbf_expnorm(0.0, np.array([1.0, 0.5]), np.array([3.0, 3.0]), 0.0)
        self.assertEqual(value[0], 1.0)

    def test_rbf_range(self):
        means, betas = expnorm_init(16, 0.0, 5.0)
        values = rbf_expnorm(np.linspace(0.0, 5.0, 50), means, betas, 0.0)
        self.assertTrue(np.all((values > 0) & (values <= 1)))

    def test_rbf_scalar_formula(self):
        means, betas = expnorm_init(8, 0.0, 5.0)
        start = math.exp(-5.0)
        beta = (2.0 / 8 * (1.0 - start)) ** -2
        expected = [
            math.exp(-beta * (math.exp(-2.5) - (start + k * (1.0 - start) / 7)) ** 2)
            for k in range(8)
        ]
        np.testing.assert_allclose(rbf_expnorm(2.5, means, betas, 0.0), expected, rtol=1e-12)


class ForwardTests(SimpleTestCase):
    def setUp(self):
        self.config = GNConfig(
            embedding_dimension=4,
            num_layers=1,
            num_rbf=4,
            cutoff_upper=5.0,
            max_z=10,
            mean=0.3,
            std=2.0,
        )
        self.params = randomized_params(self.config, 1)

    def scripted_energy(self, positions, species):
        """Atom-by-atom evaluation of the same network."""
        params, config = self.params, self.config
        x = [params[P.EMBED][z].copy() for z in species]
        for layer in range(config.num_layers):
            key = lambda name: params[layer_key(layer, name)]  # noqa: E731
            updated = []
            for i in range(len(x)):
                message = np.zeros(config.embedding_dimension)
                for j in range(len(x)):
                    d = float(np.linalg.norm(positions[i] - positions[j]))
                    if i == j or d > config.cutoff_upper:
                        continue
                    basis = np.array(
                        [
                            math.exp(-b * (math.exp(-d) - mu) ** 2)
                            for mu, b in zip(params[P.RBF_MEANS], params[P.RBF_BETAS])
                        ]
                    )
                    envelope = 0.5 * (math.cos(math.pi * d / config.cutoff_upper) + 1.0)
                    hidden = silu(basis @ key("filter.w1") + key("filter.b1"))
                    weight = (hidden @ key("filter.w2") + key("filter.b2")) * envelope
                    message += (x[j] @ key("premix.w")) * weight
                inner = silu(message @ key("postmix.w1") + key("postmix.b1"))
                updated.append(x[i] + inner @ key("postmix.w2") + key("postmix.b2"))
            x = updated
        energy = 0.0
        for features in x:
            head = silu(features @ params[P.HEAD_W1] + params[P.HEAD_B1])
            energy += (head @ params[P.HEAD_W2] + params[P.HEAD_B2]).item() * config.std
            energy += config.mean
        return energy

    def test_matches_scripted_evaluation(self):
        system = build_system([[0, 0, 0], [1.3, 0.4, 0]], [1, 8])
        result, _ = forward(self.params, self.config, system, graph_neighbors(system, self.config))
        expected = self.scripted_energy(system.positions, system.species)
        self.assertAlmostEqual(result.energy[0], expected, places=10)

    def test_without_layers_positions_do_not_matter(self):
        config = GNConfig(embedding_dimension=4, num_layers=0, num_rbf=4, cutoff_upper=3.0)
        potential = GraphPotential(config, seed=2)
        rng = np.random.default_rng(3)
        a = random_cluster(rng, 5)
        b = a.with_positions(rng.uniform(0, 3, size=(5, 3)))
        first = potential.evaluate(a, graph_neighbors(a, config))
        second = potential.evaluate(b, graph_neighbors(b, config))
        np.testing.assert_allclose(first.energy, second.energy, rtol=1e-14)
        np.testing.assert_array_equal(first.forces, 0.0)

    def test_isolated_atom_has_no_force(self):
        system = build_system([[0, 0, 0], [9, 0, 0]], [1, 6])
        potential = GraphPotential(self.config, self.params)
        forces = potential.evaluate(system, graph_neighbors(system, self.config)).forces
        np.testing.assert_array_equal(forces, 0.0)

    def test_two_atoms_feel_opposite_forces(self):
        system = build_system([[0, 0, 0], [1.1, 0.3, -0.2]], [1, 6])
        potential = GraphPotential(self.config, self.params)
        forces = potential.evaluate(system, graph_neighbors(system, self.config)).forces
        np.testing.assert_array_equal(forces[0], -forces[1])

    def test_species_beyond_max_z(self):
        system = build_system([[0, 0, 0], [1, 0, 0]], [1, 17])
        with self.assertRaises(ElementError):
            forward(self.params, self.config, system, graph_neighbors(system, self.config))

    def test_half_list_is_rejected(self):
        system = build_system([[0, 0, 0], [1, 0, 0]], [1, 1])
        half = build_neighbor_list(system, NeighborSpec(cutoff_upper=5.0, capacity=4))
        with self.assertRaisesMessage(NeighborListError, "full neighbor list"):
            forward(self.params, self.config, system, half)

    def test_cutoff_mismatch(self):
        system = build_system([[0, 0, 0], [1, 0, 0]], [1, 1])
        other = build_neighbor_list(
            system, NeighborSpec(cutoff_upper=4.0, capacity=4, full_list=True)
        )
        with self.assertRaisesMessage(NeighborListError, "cutoff mismatch"):
            forward(self.params, self.config, system, other)

    def test_rotation_and_translation(self):
        rng = np.random.default_rng(4)
        system = random_cluster(rng, 6)
        rotation = random_rotation(rng)
        moved = system.with_positions(system.positions @ rotation.T + [1.0, -2.0, 0.5])
        potential = GraphPotential(self.config, self.params)
        before = potential.evaluate(system, graph_neighbors(system, self.config))
        after = potential.evaluate(moved, graph_neighbors(moved, self.config))
        np.testing.assert_allclose(after.energy, before.energy, rtol=1e-10)
        np.testing.assert_allclose(after.forces, before.forces @ rotation.T, atol=1e-10)

    def test_edge_features_zero_on_sentinels(self):
        system = build_system([[0, 0, 0], [1, 0, 0]], [1, 1])
        neighbors = graph_neighbors(system, self.config, capacity=6)
        features = edge_features(self.params, self.config, neighbors)
        np.testing.assert_array_equal(features.rbf[neighbors.count :], 0.0)
        np.testing.assert_array_equal(features.envelope[neighbors.count :], 0.0)


class GradientTests(SimpleTestCase):
    def energy_at(self, params, config, system, flat=None):
        if flat is not None:
            system = system.with_positions(flat.reshape(-1, 3))
        return forward(params, config, system, graph_neighbors(system, config))[0].energy

    def test_forces_match_finite_differences(self):
        rng = np.random.default_rng(5)
        for num_layers, cutoff_lower in ((0, 0.0), (1, 0.0), (2, 0.5)):
            with self.subTest(num_layers=num_layers, cutoff_lower=cutoff_lower):
                config = GNConfig(
                    embedding_dimension=6,
                    num_layers=num_layers,
                    num_rbf=5,
                    cutoff_lower=cutoff_lower,
                    cutoff_upper=3.0,
                    max_z=10,
                )
                params = randomized_params(config, num_layers)
                system = random_cluster(rng, 6)
                neighbors = graph_neighbors(system, config)
                _, cache = forward(params, config, system, neighbors)
                forces = backward_forces(params, config, system, neighbors, cache)
                numeric = -central_difference(
                    lambda flat: self.energy_at(params, config, system, flat).sum(),
                    system.positions.ravel(),
                    1e-4,
                )
                if num_layers == 0:
                    np.testing.assert_array_equal(forces, 0.0)
                else:
                    self.assertLess(relative_error(forces.ravel(), numeric), 1e-6)

    def test_parameter_gradients_match_finite_differences(self):
        config = GNConfig(
            embedding_dimension=4,
            num_layers=2,
            num_rbf=3,
            cutoff_upper=3.0,
            max_z=10,
            trainable_rbf=True,
            mean=0.1,
            std=1.5,
        )
        params = randomized_params(config, 7)
        rng = np.random.default_rng(8)
        system = random_cluster(rng, 6, batch=[0, 0, 0, 1, 1, 1])
        neighbors = graph_neighbors(system, config)
        upstream = np.array([0.7, -1.3])
        _, cache = forward(params, config, system, neighbors)
        grads = backward_params(params, config, system, neighbors, upstream, cache)
        self.assertEqual(sorted(grads), sorted(trainable_names(config)))

        h = 1e-5
        for name in trainable_names(config):
            array = params[name]
            numeric = np.zeros_like(array)
            for index in np.ndindex(array.shape):
                original = array[index]
                array[index] = original + h
                plus = upstream @ self.energy_at(params, config, system)
                array[index] = original - h
                minus = upstream @ self.energy_at(params, config, system)
                array[index] = original
                numeric[index] = (plus - minus) / (2 * h)
            with self.subTest(parameter=name):
                np.testing.assert_allclose(grads[name], numeric, rtol=1e-5, atol=1e-8)

    def test_zero_upstream(self):
        config = GNConfig(embedding_dimension=4, num_layers=1, num_rbf=3, cutoff_upper=3.0)
        params = GNParams.initialize(config, 1)
        system = random_cluster(np.random.default_rng(9), 4)
        neighbors = graph_neighbors(system, config)
        _, cache = forward(params, config, system, neighbors)
        grads = backward_params(params, config, system, neighbors, [0.0], cache)
        for name, gradient in grads.items():
            with self.subTest(parameter=name):
                np.testing.assert_array_equal(gradient, 0.0)

    def test_head_bias_gradient(self):
        config = GNConfig(
            embedding_dimension=4, num_layers=1, num_rbf=3, cutoff_upper=3.0, std=2.5
        )
        params = GNParams.initialize(config, 1)
        system = random_cluster(np.random.default_rng(10), 5, batch=[0, 0, 1, 1, 1])
        neighbors = graph_neighbors(system, config)
        _, cache = forward(params, config, system, neighbors)
        grads = backward_params(params, config, system, neighbors, [2.0, -1.0], cache)
        np.testing.assert_allclose(grads[P.HEAD_B2], [(2.0 * 2 - 1.0 * 3) * 2.5])

    def test_stale_cache(self):
        config = GNConfig(embedding_dimension=4, num_layers=1, num_rbf=3, cutoff_upper=3.0)
        params = GNParams.initialize(config, 1)
        system = random_cluster(np.random.default_rng(11), 4)
        neighbors = graph_neighbors(system, config)
        _, cache = forward(params, config, system, neighbors)
        params.touch()
        with self.assertRaises(StaleCacheError):
            backward_forces(params, config, system, neighbors, cache)

        _, cache = forward(params, config, system, neighbors)
        moved = system.with_positions(system.positions + 0.01)
        with self.assertRaises(StaleCacheError):
            backward_forces(params, config, moved, neighbors, cache)


class StaticShapeTests(SimpleTestCase):
    def setUp(self):
        self.config = GNConfig(
            embedding_dimension=6, num_layers=2, num_rbf=5, cutoff_upper=3.0, max_z=10
        )
        self.static = GNConfig(
            embedding_dimension=6,
            num_layers=2,
            num_rbf=5,
            cutoff_upper=3.0,
            max_z=10,
            static_shapes=True,
        )
        self.params = randomized_params(self.config, 12)
        self.system = random_cluster(np.random.default_rng(13), 7, batch=[0, 0, 0, 0, 1, 1, 1])

    def test_padding_leaves_results_unchanged(self):
        plain_potential = GraphPotential(self.config, self.params)
        static_potential = GraphPotential(self.static, self.params)
        rng = np.random.default_rng(19)
        for index in range(100):
            n_atoms = int(rng.integers(2, 9))
            batch = np.arange(n_atoms) * int(rng.integers(1, 3)) // n_atoms
            system = random_cluster(rng, n_atoms, spread=2.5, min_distance=0.7, batch=batch)
            count = graph_neighbors(system, self.config, capacity=n_atoms**2).count
            if count == 0:
                continue
            exact = graph_neighbors(system, self.config, capacity=count)
            padded_list = graph_neighbors(system, self.config, capacity=4 * count)
            plain = plain_potential.evaluate(system, exact)
            padded = static_potential.evaluate(system, padded_list)
            with self.subTest(system=index):
                np.testing.assert_allclose(padded.energy, plain.energy, rtol=0, atol=1e-12)
                np.testing.assert_allclose(padded.forces, plain.forces, rtol=0, atol=1e-12)

    def test_exact_capacity(self):
        sized = graph_neighbors(self.system, self.config, capacity=200)
        neighbors = graph_neighbors(self.system, self.config, capacity=sized.count)
        plain = GraphPotential(self.config, self.params).evaluate(self.system, neighbors)
        padded = GraphPotential(self.static, self.params).evaluate(self.system, neighbors)
        np.testing.assert_allclose(padded.energy, plain.energy, atol=1e-12)

    def test_ghost_receives_no_force(self):
        neighbors = graph_neighbors(self.system, self.config, capacity=200)
        padded, padded_neighbors = pad_static(self.system, neighbors, self.static)
        _, cache = forward(self.params, self.static, padded, padded_neighbors)
        forces = backward_forces(self.params, self.static, padded, padded_neighbors, cache)
        np.testing.assert_array_equal(forces[padded.ghost], 0.0)
        np.testing.assert_array_equal(padded_neighbors.pairs[neighbors.count :], padded.ghost)

    def test_requires_static_shapes(self):
        neighbors = graph_neighbors(self.system, self.config)
        with self.assertRaisesMessage(NeighborListError, "static_shapes"):
            pad_static(self.system, neighbors, self.config)

    def test_capacity_below_count(self):
        neighbors = graph_neighbors(self.system, self.config)
        with self.assertRaises(NeighborOverflowError):
            pad_static(self.system, neighbors, self.static, capacity=1)


class CutoffContinuityTests(SimpleTestCase):
    def test_energy_and_forces_are_continuous_at_the_cutoff(self):
        config = GNConfig(
            embedding_dimension=4, num_layers=2, num_rbf=4, cutoff_upper=3.0, max_z=10
        )
        potential = GraphPotential(config, randomized_params(config, 14))

        def evaluate(d):
            system = build_system([[0, 0, 0], [d, 0, 0]], [1, 8])
            return potential.evaluate(system, graph_neighbors(system, config))

        energy_jumps, force_jumps = [], []
        for eps in (1e-3, 1e-4, 1e-5):
            inside, outside = evaluate(3.0 - eps), evaluate(3.0 + eps)
            energy_jumps.append(abs(inside.energy[0] - outside.energy[0]))
            force_jumps.append(np.abs(inside.forces - outside.forces).max())
            with self.subTest(eps=eps):
                self.assertLess(energy_jumps[-1], eps)
                self.assertLess(force_jumps[-1], 10 * eps)
        self.assertEqual(energy_jumps, sorted(energy_jumps, reverse=True))
        self.assertEqual(force_jumps, sorted(force_jumps, reverse=True))


class ConservativityTests(SimpleTestCase):
    def test_work_around_a_closed_loop_vanishes(self):
        config = GNConfig(
            embedding_dimension=6, num_layers=2, num_rbf=5, cutoff_upper=5.0, max_z=10
        )
        potential = GraphPotential(config, randomized_params(config, 15))
        rng = np.random.default_rng(16)
        start = random_cluster(rng, 5, spread=2.0, min_distance=0.9)
        a, b = rng.normal(0.0, 0.05, size=(2, 5, 3))
        phases = np.linspace(0.0, 2.0 * np.pi, 101)
        path = [start.positions + a * (np.cos(t) - 1.0) + b * np.sin(t) for t in phases]

        def evaluate(positions):
            system = start.with_positions(positions)
            return potential.evaluate(system, graph_neighbors(system, config))

        # Simpson's rule along every straight segment of the polygon
        work = [0.0]
        for p, q in zip(path[:-1], path[1:]):
            forces = [evaluate(x).forces for x in (p, 0.5 * (p + q), q)]
            step = q - p
            segment = (forces[0] + 4.0 * forces[1] + forces[2]) / 6.0
            work.append(work[-1] + float(np.sum(segment * step)))

        self.assertLess(abs(work[-1]), 1e-8)
        half = len(phases) // 2
        gained = evaluate(path[0]).energy[0] - evaluate(path[half]).energy[0]
        self.assertAlmostEqual(work[half], gained, delta=1e-8)


class LocalityTests(SimpleTestCase):
    def test_distant_atom_does_not_change_other_forces(self):
        config = GNConfig(
            embedding_dimension=4, num_layers=2, num_rbf=4, cutoff_upper=3.0, max_z=10
        )
        potential = GraphPotential(config, randomized_params(config, 17))
        rng = np.random.default_rng(18)
        cluster = random_cluster(rng, 4, spread=2.0, species=(1, 8))
        # (L + 1) * r_u away from every atom of the cluster
        far = cluster.positions.max(axis=0) + [9.5, 0.0, 0.0]

        def forces(extra):
            system = build_system(
                np.vstack([cluster.positions, extra]), np.append(cluster.species, 6)
            )
            return potential.evaluate(system, graph_neighbors(system, config)).forces

        before = forces(far)
        after = forces(far + rng.normal(0.0, 0.3, size=3))
        np.testing.assert_allclose(after[:4], before[:4], rtol=0, atol=1e-14)
