from __future__ import annotations

import numpy as np

from common.exceptions import CheckpointError
from potential.config import GNConfig
from potential.functional import expnorm_init

EMBED = "embed"
RBF_MEANS = "rbf.means"
RBF_BETAS = "rbf.betas"
HEAD_W1, HEAD_B1 = "head.w1", "head.b1"
HEAD_W2, HEAD_B2 = "head.w2", "head.b2"


def layer_key(layer: int, key: str) -> str:
    return f"layers.{layer}.{key}"


def parameter_shapes(config: GNConfig) -> dict[str, tuple[int, ...]]:
    f, k, h = config.embedding_dimension, config.num_rbf, config.head_dimension
    shapes = {EMBED: (config.max_z, f), RBF_MEANS: (k,), RBF_BETAS: (k,)}
    for layer in range(config.num_layers):
        shapes.update(
            {
                layer_key(layer, "filter.w1"): (k, f),
                layer_key(layer, "filter.b1"): (f,),
                layer_key(layer, "filter.w2"): (f, f),
                layer_key(layer, "filter.b2"): (f,),
                layer_key(layer, "premix.w"): (f, f),
                layer_key(layer, "postmix.w1"): (f, f),
                layer_key(layer, "postmix.b1"): (f,),
                layer_key(layer, "postmix.w2"): (f, f),
                layer_key(layer, "postmix.b2"): (f,),
            }
        )
    shapes.update({HEAD_W1: (f, h), HEAD_B1: (h,), HEAD_W2: (h, 1), HEAD_B2: (1,)})
    return shapes


def trainable_names(config: GNConfig) -> list[str]:
    names = list(parameter_shapes(config))
    if not config.trainable_rbf:
        names = [n for n in names if n not in (RBF_MEANS, RBF_BETAS)]
    return names


class GNParams:
    """Named parameter arrays of a graph network.

    ``version`` increases on every in-place update so forward caches can
    detect that they are stale.
    """

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.arrays = {name: np.asarray(a, dtype=np.float64) for name, a in arrays.items()}
        self.version = 0

    @classmethod
    def initialize(cls, config: GNConfig, seed: int = 0) -> GNParams:
        """Glorot-uniform weights, zero biases, unit-normal embeddings."""
        rng = np.random.default_rng(seed)
        arrays = {}
        for name, shape in parameter_shapes(config).items():
            if name == EMBED:
                arrays[name] = rng.standard_normal(shape)
            elif name in (RBF_MEANS, RBF_BETAS):
                continue
            elif len(shape) == 2:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                arrays[name] = rng.uniform(-limit, limit, size=shape)
            else:
                arrays[name] = np.zeros(shape)
        means, betas = expnorm_init(config.num_rbf, config.cutoff_lower, config.cutoff_upper)
        arrays[RBF_MEANS] = means
        arrays[RBF_BETAS] = betas
        return cls({name: arrays[name] for name in parameter_shapes(config)})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()

    @property
    def n_parameters(self) -> int:
        return int(sum(a.size for a in self.arrays.values()))

    def copy(self) -> GNParams:
        clone = GNParams({name: a.copy() for name, a in self.arrays.items()})
        clone.version = self.version
        return clone

    def touch(self) -> None:
        self.version += 1

    def check_shapes(self, config: GNConfig) -> None:
        expected = parameter_shapes(config)
        for name, shape in expected.items():
            if name not in self.arrays or self.arrays[name].shape != shape:
                raise CheckpointError(f"parameter {name} missing or not of shape {shape}")
