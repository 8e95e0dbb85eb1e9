"""Versioned binary checkpoints.

Layout: ``MDKC``, u32 format version, u32 metadata length, UTF-8 JSON
metadata, then an array section in the dataset container encoding.
"""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from rest_framework import serializers
from rest_framework.exceptions import ParseError
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer

from common.exceptions import CheckpointError, ConfigError, ToolkitError
from potential.config import GNConfig
from potential.network import GraphPotential
from potential.params import GNParams
from priors.stack import PriorStack, build_prior_stack, stack_from_description
from structure.composition import ComposedPotential
from training.container import encode_arrays, read_array_section
from training.datasets import SplitIndices
from training.optim import Adam, TrainerState

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"MDKC"
FORMAT_VERSION = 1
PARAMS_PREFIX = "params."
SPLIT_PREFIX = "split."


class CheckpointMetaSerializer(serializers.Serializer):
    format_version = serializers.IntegerField(min_value=1)
    gn_config = serializers.DictField()
    priors = serializers.ListField(child=serializers.DictField())
    trainer = serializers.DictField()
    adam_step = serializers.IntegerField(min_value=0)
    split_seed = serializers.IntegerField(min_value=0)
    run_config = serializers.DictField()
    metrics = serializers.DictField()

    def validate_gn_config(self, value):
        try:
            GNConfig(**value)
        except (TypeError, ToolkitError, ValueError) as error:
            raise serializers.ValidationError(str(error))
        return value


@dataclass(eq=False)
class Checkpoint:
    gn_config: GNConfig
    params: GNParams
    priors: PriorStack = field(default_factory=PriorStack)
    state: TrainerState | None = None
    adam: Adam = field(default_factory=Adam)
    split: SplitIndices | None = None
    split_seed: int = 0
    run_config: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "gn_config": self.gn_config.as_dict(),
            "priors": self.priors.describe(),
            "trainer": {} if self.state is None else self.state.as_dict(),
            "adam_step": self.adam.t,
            "split_seed": self.split_seed,
            "run_config": self.run_config,
            "metrics": self.metrics,
        }

    def potential(self, derivative: bool = True) -> ComposedPotential:
        return ComposedPotential(
            network=GraphPotential(self.gn_config, self.params),
            priors=self.priors,
            derivative=derivative,
        )

    def arrays(self) -> dict[str, np.ndarray]:
        arrays = {f"{PARAMS_PREFIX}{name}": a for name, a in self.params.items()}
        arrays.update(self.adam.arrays())
        if self.split is not None:
            for name, indices in self.split._asdict().items():
                arrays[f"{SPLIT_PREFIX}{name}"] = np.asarray(indices, dtype=np.int64)
        return arrays


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    meta = JSONRenderer().render(checkpoint.metadata())
    with open(path, "wb") as stream:
        stream.write(CHECKPOINT_MAGIC)
        stream.write(struct.pack("<II", FORMAT_VERSION, len(meta)))
        stream.write(meta)
        stream.write(encode_arrays(checkpoint.arrays()))
    logger.info("checkpoint written to %s", path)


def _read_header(path: Path) -> tuple[dict, int]:
    with open(path, "rb") as stream:
        head = stream.read(12)
        if len(head) < 12 or head[:4] != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint (corrupt payload)")
        version, length = struct.unpack("<II", head[4:])
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported version {version}")
        raw = stream.read(length)
    if len(raw) != length:
        raise CheckpointError("corrupt payload: truncated metadata")
    try:
        meta = JSONParser().parse(io.BytesIO(raw))
    except ParseError as error:
        raise CheckpointError(f"corrupt payload: {error.detail}")
    return meta, 12 + length


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    meta, offset = _read_header(path)
    serializer = CheckpointMetaSerializer(data=meta)
    if not serializer.is_valid():
        raise CheckpointError(f"corrupt payload: {dict(serializer.errors)}")
    meta = serializer.validated_data
    arrays = read_array_section(path, offset, error=CheckpointError, lazy=False)

    gn_config = GNConfig(**meta["gn_config"])
    params = GNParams(
        {
            name[len(PARAMS_PREFIX) :]: array
            for name, array in arrays.items()
            if name.startswith(PARAMS_PREFIX)
        }
    )
    params.check_shapes(gn_config)
    split = None
    if f"{SPLIT_PREFIX}train" in arrays:
        split = SplitIndices(
            *(arrays[f"{SPLIT_PREFIX}{name}"] for name in SplitIndices._fields)
        )
    trainer = dict(meta["trainer"])
    try:
        state = TrainerState(**trainer) if trainer else None
        priors = stack_from_description(meta["priors"])
    except (TypeError, KeyError, ToolkitError) as error:
        raise CheckpointError(f"corrupt payload: {error}")
    return Checkpoint(
        gn_config=gn_config,
        params=params,
        priors=priors,
        state=state,
        adam=Adam.from_arrays(meta["adam_step"], arrays),
        split=split,
        split_seed=meta["split_seed"],
        run_config=meta["run_config"],
        metrics=meta["metrics"],
    )


def potential_for_run(config, checkpoint: str | Path | None = None, derivative: bool = True):
    """Trained potential of ``checkpoint``, or the config's priors alone."""
    if checkpoint:
        return load_checkpoint(checkpoint).potential(derivative)
    stack = build_prior_stack(
        config.prior_model,
        atomref=config.atomref,
        coulomb_switch=config.coulomb_switch,
        d2_s6=config.d2_s6,
        d2_steep=config.d2_steep,
    )
    if not len(stack):
        raise ConfigError("no checkpoint given and prior_model is empty")
    return ComposedPotential(
        priors=stack, derivative=derivative, cutoff_upper=config.cutoff_upper
    )
