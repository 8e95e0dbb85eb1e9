from dataclasses import asdict, dataclass

from common.exceptions import ConfigError


@dataclass(frozen=True)
class GNConfig:
    """Hyperparameters of the graph network; names follow the config vocabulary."""

    embedding_dimension: int = 128
    num_layers: int = 2
    num_rbf: int = 32
    cutoff_lower: float = 0.0
    cutoff_upper: float = 5.0
    max_z: int = 100
    activation: str = "silu"
    rbf_type: str = "expnorm"
    trainable_rbf: bool = False
    static_shapes: bool = False
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.embedding_dimension < 1 or self.num_rbf < 1:
            raise ConfigError("embedding_dimension and num_rbf must be at least 1")
        if self.num_layers < 0:
            raise ConfigError("num_layers must be non-negative")
        if not 0.0 <= self.cutoff_lower < self.cutoff_upper:
            raise ConfigError("cutoff_lower must be below cutoff_upper")
        if self.max_z < 1:
            raise ConfigError("max_z must be at least 1")
        if self.activation != "silu":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        if self.rbf_type != "expnorm":
            raise ConfigError(f"unsupported rbf_type {self.rbf_type!r}")
        if self.std <= 0:
            raise ConfigError("std must be positive")

    @property
    def head_dimension(self) -> int:
        return max(1, self.embedding_dimension // 2)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_run_config(cls, config, mean: float = 0.0, std: float = 1.0, **changes):
        values = {
            key: getattr(config, key)
            for key in (
                "embedding_dimension",
                "num_layers",
                "num_rbf",
                "cutoff_lower",
                "cutoff_upper",
                "max_z",
                "activation",
                "rbf_type",
                "trainable_rbf",
                "static_shapes",
            )
        }
        values.update(mean=mean, std=std, **changes)
        return cls(**values)
