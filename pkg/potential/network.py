"""Invariant continuous-filter graph network with a hand-written adjoint.

Per layer, with edges e = (i, j) carrying messages j -> i::

    W_e = filter(rbf(d_e)) * φ(d_e)
    m_i = Σ_e premix(x_j) * W_e
    x_i <- x_i + postmix2(silu(postmix1(m_i)))

Per-atom energies are head(x_i) * std + mean. Geometry enters only through
the pair distances, so forces are the distance pullback of dE/dd_e.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from common.exceptions import (
    ElementError,
    NeighborListError,
    NeighborOverflowError,
    StaleCacheError,
)
from neighbors.pullback import distance_pullback
from neighbors.types import NeighborList
from potential import params as P
from potential.config import GNConfig
from potential.functional import (
    cosine_cutoff_with_grad,
    rbf_expnorm_with_grads,
    silu,
    silu_grad,
)
from potential.params import GNParams, layer_key
from structure.energy import EnergyForces, segment_sum
from structure.system import System


@dataclass(frozen=True, eq=False)
class PaddedSystem:
    """A system plus one ghost atom that absorbs placeholder edges."""

    system: System

    @property
    def ghost(self) -> int:
        return self.system.n_atoms

    @property
    def n_atoms(self) -> int:
        return self.system.n_atoms + 1

    @property
    def positions(self) -> np.ndarray:
        return np.vstack([self.system.positions, np.zeros((1, 3))])

    @property
    def species(self) -> np.ndarray:
        return np.append(self.system.species, 0)

    @property
    def batch(self) -> np.ndarray:
        return np.append(self.system.batch, self.system.batch[-1])

    @property
    def real_mask(self) -> np.ndarray:
        mask = np.ones(self.n_atoms, dtype=bool)
        mask[self.ghost] = False
        return mask


@dataclass(frozen=True, eq=False)
class EdgeFeatures:
    """Basis and envelope per neighbor-list slot; sentinel rows are zero."""

    rbf: np.ndarray
    envelope: np.ndarray


@dataclass(eq=False)
class _Graph:
    system: System
    species: np.ndarray
    batch: np.ndarray
    real: np.ndarray
    n_nodes: int
    slots: np.ndarray
    receivers: np.ndarray
    senders: np.ndarray
    distances: np.ndarray


@dataclass(eq=False)
class _LayerCache:
    x: np.ndarray
    s: np.ndarray
    a: np.ndarray
    h: np.ndarray
    w: np.ndarray
    p: np.ndarray
    m: np.ndarray
    u: np.ndarray
    v: np.ndarray


@dataclass(eq=False)
class ForwardCache:
    graph: _Graph
    neighbors: NeighborList
    positions: np.ndarray
    version: int
    params_id: int
    rbf: np.ndarray
    rbf_dd: np.ndarray
    rbf_dmeans: np.ndarray
    rbf_dbetas: np.ndarray
    envelope: np.ndarray
    envelope_dd: np.ndarray
    layers: list[_LayerCache] = field(default_factory=list)
    x_final: np.ndarray | None = None
    head_g: np.ndarray | None = None
    head_z: np.ndarray | None = None


def _graph(config: GNConfig, system, neighbors: NeighborList) -> _Graph:
    if (
        neighbors.cutoff_upper != config.cutoff_upper
        or neighbors.cutoff_lower != config.cutoff_lower
    ):
        raise NeighborListError(
            f"cutoff mismatch: network uses ({config.cutoff_lower}, "
            f"{config.cutoff_upper}], neighbor list ({neighbors.cutoff_lower}, "
            f"{neighbors.cutoff_upper}]"
        )
    if not neighbors.full_list:
        raise NeighborListError("the graph network needs a full neighbor list")
    if isinstance(system, PaddedSystem):
        base, species, batch, real = system.system, system.species, system.batch, system.real_mask
    else:
        base, species, batch = system, system.species, system.batch
        real = np.ones(system.n_atoms, dtype=bool)
    if np.any(base.species >= config.max_z):
        raise ElementError(
            f"species code {int(base.species.max())} is not below max_z={config.max_z}"
        )
    if neighbors.n_atoms != len(species):
        raise NeighborListError("neighbor list was built for a different system")
    slots = np.flatnonzero(neighbors.valid)
    return _Graph(
        system=base,
        species=species,
        batch=batch,
        real=real,
        n_nodes=len(species),
        slots=slots,
        receivers=neighbors.pairs[slots, 0],
        senders=neighbors.pairs[slots, 1],
        distances=neighbors.distances[slots],
    )


def edge_features(params: GNParams, config: GNConfig, neighbors: NeighborList) -> EdgeFeatures:
    slots = np.flatnonzero(neighbors.valid)
    rbf = np.zeros((neighbors.capacity, config.num_rbf))
    envelope = np.zeros(neighbors.capacity)
    d = neighbors.distances[slots]
    rbf[slots] = rbf_expnorm_with_grads(
        d, params[P.RBF_MEANS], params[P.RBF_BETAS], config.cutoff_lower
    )[0]
    envelope[slots] = cosine_cutoff_with_grad(d, config.cutoff_lower, config.cutoff_upper)[0]
    return EdgeFeatures(rbf=rbf, envelope=envelope)


def forward(params: GNParams, config: GNConfig, system, neighbors: NeighborList):
    """Energies of every sample; returns (EnergyForces without forces, cache)."""
    graph = _graph(config, system, neighbors)
    d = graph.distances
    rbf, rbf_dd, rbf_dmeans, rbf_dbetas = rbf_expnorm_with_grads(
        d, params[P.RBF_MEANS], params[P.RBF_BETAS], config.cutoff_lower
    )
    envelope, envelope_dd = cosine_cutoff_with_grad(
        d, config.cutoff_lower, config.cutoff_upper
    )
    positions = system.positions
    cache = ForwardCache(
        graph=graph,
        neighbors=neighbors,
        positions=np.array(positions, copy=True),
        version=params.version,
        params_id=id(params),
        rbf=rbf,
        rbf_dd=rbf_dd,
        rbf_dmeans=rbf_dmeans,
        rbf_dbetas=rbf_dbetas,
        envelope=envelope,
        envelope_dd=envelope_dd,
    )

    # ghost rows get a zero embedding
    x = params[P.EMBED][graph.species] * graph.real[:, None]
    for layer in range(config.num_layers):
        s = rbf @ params[layer_key(layer, "filter.w1")] + params[layer_key(layer, "filter.b1")]
        a = silu(s)
        h = a @ params[layer_key(layer, "filter.w2")] + params[layer_key(layer, "filter.b2")]
        w = h * envelope[:, None]
        p = x @ params[layer_key(layer, "premix.w")]
        m = segment_sum(p[graph.senders] * w, graph.receivers, graph.n_nodes)
        u = m @ params[layer_key(layer, "postmix.w1")] + params[layer_key(layer, "postmix.b1")]
        v = silu(u)
        o = v @ params[layer_key(layer, "postmix.w2")] + params[layer_key(layer, "postmix.b2")]
        cache.layers.append(_LayerCache(x=x, s=s, a=a, h=h, w=w, p=p, m=m, u=u, v=v))
        x = x + o

    g = x @ params[P.HEAD_W1] + params[P.HEAD_B1]
    z = silu(g)
    y = (z @ params[P.HEAD_W2] + params[P.HEAD_B2])[:, 0]
    cache.x_final, cache.head_g, cache.head_z = x, g, z

    real = graph.real
    per_atom = y[real] * config.std + config.mean
    energy = segment_sum(per_atom, graph.system.batch, graph.system.n_samples)
    return EnergyForces(energy=energy, forces=None, per_atom_energy=per_atom), cache


def _check_cache(params: GNParams, system, neighbors: NeighborList, cache: ForwardCache):
    if (
        cache.version != params.version
        or cache.params_id != id(params)
        or cache.neighbors is not neighbors
        or not np.array_equal(cache.positions, system.positions)
    ):
        raise StaleCacheError("forward cache does not match the current system or parameters")


def _reverse(params: GNParams, config: GNConfig, cache: ForwardCache, upstream, with_params):
    """Reverse pass of Σ_s upstream_s E_s.

    Returns (dE/dd per cached edge, parameter gradients or None).
    """
    graph = cache.graph
    upstream = np.asarray(upstream, dtype=np.float64)
    grads = {} if with_params else None

    dy = np.where(graph.real, upstream[graph.batch], 0.0) * config.std
    dy = dy[:, None]
    if with_params:
        grads[P.HEAD_W2] = cache.head_z.T @ dy
        grads[P.HEAD_B2] = dy.sum(axis=0)
    dg = (dy @ params[P.HEAD_W2].T) * silu_grad(cache.head_g)
    if with_params:
        grads[P.HEAD_W1] = cache.x_final.T @ dg
        grads[P.HEAD_B1] = dg.sum(axis=0)
    dx = dg @ params[P.HEAD_W1].T

    d_dist = np.zeros(len(graph.distances))
    d_rbf = np.zeros_like(cache.rbf)
    for layer in reversed(range(config.num_layers)):
        lc = cache.layers[layer]
        key = lambda name: layer_key(layer, name)  # noqa: E731
        do = dx
        du = (do @ params[key("postmix.w2")].T) * silu_grad(lc.u)
        dm = du @ params[key("postmix.w1")].T
        d_msg = dm[graph.receivers]
        dw = d_msg * lc.p[graph.senders]
        dp = segment_sum(d_msg * lc.w, graph.senders, graph.n_nodes)
        dx = dx + dp @ params[key("premix.w")].T

        dh = dw * cache.envelope[:, None]
        d_dist += np.einsum("ef,ef->e", dw, lc.h) * cache.envelope_dd
        ds = (dh @ params[key("filter.w2")].T) * silu_grad(lc.s)
        d_rbf += ds @ params[key("filter.w1")].T

        if with_params:
            grads[key("postmix.w2")] = lc.v.T @ do
            grads[key("postmix.b2")] = do.sum(axis=0)
            grads[key("postmix.w1")] = lc.m.T @ du
            grads[key("postmix.b1")] = du.sum(axis=0)
            grads[key("premix.w")] = lc.x.T @ dp
            grads[key("filter.w2")] = lc.a.T @ dh
            grads[key("filter.b2")] = dh.sum(axis=0)
            grads[key("filter.w1")] = cache.rbf.T @ ds
            grads[key("filter.b1")] = ds.sum(axis=0)

    d_dist += np.einsum("ek,ek->e", d_rbf, cache.rbf_dd)
    if with_params:
        d_embed = np.zeros_like(params[P.EMBED])
        np.add.at(d_embed, graph.species[graph.real], dx[graph.real])
        grads[P.EMBED] = d_embed
        if config.trainable_rbf:
            grads[P.RBF_MEANS] = np.einsum("ek,ek->k", d_rbf, cache.rbf_dmeans)
            grads[P.RBF_BETAS] = np.einsum("ek,ek->k", d_rbf, cache.rbf_dbetas)
    return d_dist, grads


def backward_forces(
    params: GNParams, config: GNConfig, system, neighbors: NeighborList, cache: ForwardCache
) -> np.ndarray:
    """Forces on every node of the graph (ghost included when padded)."""
    _check_cache(params, system, neighbors, cache)
    upstream = np.ones(cache.graph.system.n_samples)
    d_dist, _ = _reverse(params, config, cache, upstream, with_params=False)
    d_grad = np.zeros(neighbors.capacity)
    d_grad[cache.graph.slots] = d_dist
    return -distance_pullback(neighbors, d_grad)


def backward_params(
    params: GNParams,
    config: GNConfig,
    system,
    neighbors: NeighborList,
    upstream,
    cache: ForwardCache,
) -> dict[str, np.ndarray]:
    """Exact gradients of Σ_s upstream_s E_s with respect to the parameters."""
    _check_cache(params, system, neighbors, cache)
    _, grads = _reverse(params, config, cache, upstream, with_params=True)
    return grads


def pad_static(
    system: System,
    neighbors: NeighborList,
    config: GNConfig,
    capacity: int | None = None,
) -> tuple[PaddedSystem, NeighborList]:
    """Re-point placeholder edges to a ghost atom at distance r_u.

    The envelope vanishes at r_u, so placeholder edges carry zero weight and
    zero gradient.
    """
    if not config.static_shapes:
        raise NeighborListError("pad_static requires static_shapes=true")
    capacity = neighbors.capacity if capacity is None else capacity
    if capacity < neighbors.count:
        raise NeighborOverflowError(required=neighbors.count, capacity=capacity)

    padded = PaddedSystem(system)
    ghost = padded.ghost
    valid = np.flatnonzero(neighbors.valid)
    pairs = np.full((capacity, 2), ghost, dtype=np.int64)
    deltas = np.zeros((capacity, 3))
    deltas[:, 0] = config.cutoff_upper
    distances = np.full(capacity, config.cutoff_upper)
    pairs[: len(valid)] = neighbors.pairs[valid]
    deltas[: len(valid)] = neighbors.deltas[valid]
    distances[: len(valid)] = neighbors.distances[valid]
    for array in (pairs, deltas, distances):
        array.setflags(write=False)
    return padded, NeighborList(
        pairs=pairs,
        deltas=deltas,
        distances=distances,
        count=neighbors.count,
        n_atoms=padded.n_atoms,
        cutoff_upper=neighbors.cutoff_upper,
        cutoff_lower=neighbors.cutoff_lower,
        full_list=neighbors.full_list,
        strategy=neighbors.strategy,
        notices=neighbors.notices,
    )


class GraphPotential:
    """Parameters and configuration of one graph network."""

    def __init__(self, config: GNConfig, params: GNParams | None = None, seed: int = 0):
        self.config = config
        self.params = GNParams.initialize(config, seed) if params is None else params
        self.params.check_shapes(config)

    @property
    def cutoff_upper(self) -> float:
        return self.config.cutoff_upper

    @property
    def cutoff_lower(self) -> float:
        return self.config.cutoff_lower

    def forward(self, system, neighbors):
        return forward(self.params, self.config, system, neighbors)

    def backward_forces(self, system, neighbors, cache):
        return backward_forces(self.params, self.config, system, neighbors, cache)

    def backward_params(self, system, neighbors, upstream, cache):
        return backward_params(self.params, self.config, system, neighbors, upstream, cache)

    def pad_static(self, system, neighbors, capacity=None):
        return pad_static(system, neighbors, self.config, capacity)

    def evaluate(self, system: System, neighbors: NeighborList, derivative: bool = True):
        """Energies (and forces) of a plain system, padding first when configured."""
        graph_system, graph_neighbors = system, neighbors
        if self.config.static_shapes:
            graph_system, graph_neighbors = self.pad_static(system, neighbors)
        result, cache = self.forward(graph_system, graph_neighbors)
        if not derivative:
            return result
        forces = self.backward_forces(graph_system, graph_neighbors, cache)
        return EnergyForces(
            energy=result.energy,
            forces=forces[: system.n_atoms],
            per_atom_energy=result.per_atom_energy,
        )
