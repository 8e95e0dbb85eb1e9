"""Run configuration: flat ``key: value`` files checked by a DRF serializer.

Every key has a default, so an empty file is a valid configuration. Lines
starting with ``#`` are comments. List values are written comma separated,
optionally inside brackets (``particles: [1024, 4096]``).
"""

from __future__ import annotations

import logging
from difflib import get_close_matches
from pathlib import Path

from rest_framework import serializers

from common.exceptions import ConfigError

logger = logging.getLogger(__name__)


class SizeField(serializers.Field):
    """A split size: an integer count, or a fraction written with a decimal point."""

    default_error_messages = {
        "invalid": "expected a count or a fraction in (0, 1]",
    }

    def to_internal_value(self, data):
        text = str(data).strip()
        try:
            if text.lstrip("+").isdigit():
                return int(text)
            value = float(text)
        except ValueError:
            self.fail("invalid")
        if not 0.0 < value <= 1.0:
            self.fail("invalid")
        return value

    def to_representation(self, value):
        return value


class RunConfigSerializer(serializers.Serializer):
    # model
    activation = serializers.ChoiceField(choices=["silu"], default="silu")
    cutoff_lower = serializers.FloatField(min_value=0.0, default=0.0)
    cutoff_upper = serializers.FloatField(min_value=0.0, default=5.0)
    embedding_dimension = serializers.IntegerField(min_value=1, default=128)
    max_num_neighbors = serializers.IntegerField(min_value=1, default=32)
    max_z = serializers.IntegerField(min_value=1, default=100)
    num_layers = serializers.IntegerField(min_value=0, default=2)
    num_rbf = serializers.IntegerField(min_value=1, default=32)
    rbf_type = serializers.ChoiceField(choices=["expnorm"], default="expnorm")
    static_shapes = serializers.BooleanField(default=False)
    trainable_rbf = serializers.BooleanField(default=False)
    derivative = serializers.BooleanField(default=True)

    # priors
    prior_model = serializers.CharField(
        allow_blank=True,
        default="",
        help_text="comma separated: atomref, coulomb, d2, zbl",
    )
    atomref_table = serializers.CharField(
        allow_blank=True,
        default="",
        help_text="'Z=energy' entries; fitted on the training split when blank",
    )
    atomref_learnable = serializers.BooleanField(default=False)
    coulomb_switch = serializers.FloatField(min_value=0.0, default=1.0)
    d2_s6 = serializers.FloatField(min_value=0.0, default=0.75)
    d2_steep = serializers.FloatField(default=20.0)

    # training
    batch_size = serializers.IntegerField(min_value=1, default=32)
    early_stopping_patience = serializers.IntegerField(min_value=1, default=150)
    ema_alpha_neg_dy = serializers.FloatField(min_value=0.0, max_value=1.0, default=1.0)
    ema_alpha_y = serializers.FloatField(min_value=0.0, max_value=1.0, default=1.0)
    lr = serializers.FloatField(min_value=0.0, default=4e-4)
    lr_factor = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.8)
    lr_min = serializers.FloatField(min_value=0.0, default=1e-7)
    lr_patience = serializers.IntegerField(min_value=1, default=15)
    lr_warmup_steps = serializers.IntegerField(min_value=0, default=0)
    neg_dy_weight = serializers.FloatField(min_value=0.0, default=0.0)
    num_epochs = serializers.IntegerField(min_value=1, default=100)
    seed = serializers.IntegerField(min_value=0, default=1)
    standardize = serializers.BooleanField(default=False)
    train_size = SizeField(default=0.8)
    val_size = SizeField(default=0.1)
    y_weight = serializers.FloatField(min_value=0.0, default=1.0)

    # neighbor search
    strategy = serializers.ChoiceField(choices=["auto", "brute", "cell"], default="auto")
    deterministic = serializers.BooleanField(default=True)

    # molecular dynamics
    timestep = serializers.FloatField(min_value=0.0, default=1.0, help_text="fs")
    temperature = serializers.FloatField(min_value=0.0, default=298.5, help_text="K")
    friction = serializers.FloatField(min_value=0.0, default=1.0, help_text="1/ps")
    steps = serializers.IntegerField(min_value=0, default=1000)
    stride = serializers.IntegerField(min_value=1, default=10)

    # benchmarks
    particles = serializers.ListField(
        child=serializers.IntegerField(min_value=1), default=lambda: [1024, 4096]
    )
    batches = serializers.ListField(
        child=serializers.IntegerField(min_value=1), default=lambda: [1]
    )
    neighbors_per_particle = serializers.FloatField(min_value=0.0, default=64.0)
    repetitions = serializers.IntegerField(min_value=1, default=50)
    warmup_repetitions = serializers.IntegerField(min_value=0, default=5)
    strategies = serializers.ListField(
        child=serializers.ChoiceField(choices=["brute", "cell"]),
        default=lambda: ["cell", "brute"],
    )
    structures = serializers.ListField(
        child=serializers.CharField(),
        default=lambda: ["alanine_dipeptide", "water_cluster", "water_box"],
    )
    bench_layers = serializers.ListField(
        child=serializers.IntegerField(min_value=0), default=lambda: [0, 1, 2]
    )

    # prior scans
    scan_species = serializers.ListField(
        child=serializers.IntegerField(min_value=0), default=lambda: [1, 1]
    )
    scan_charges = serializers.ListField(
        child=serializers.FloatField(), default=lambda: [1.0, -1.0]
    )
    scan_min = serializers.FloatField(min_value=0.0, default=0.1)
    scan_max = serializers.FloatField(min_value=0.0, default=5.0)
    scan_points = serializers.IntegerField(min_value=2, default=50)

    def validate_lr_factor(self, value):
        if value <= 0:
            raise serializers.ValidationError("lr_factor must be in (0, 1]")
        return value

    def validate_ema_alpha_y(self, value):
        if value <= 0:
            raise serializers.ValidationError("alphas must be in (0, 1]")
        return value

    def validate_ema_alpha_neg_dy(self, value):
        return self.validate_ema_alpha_y(value)

    def validate_scan_species(self, value):
        if len(value) != 2:
            raise serializers.ValidationError("scan_species needs two atomic numbers")
        return value

    def validate_scan_charges(self, value):
        if len(value) != 2:
            raise serializers.ValidationError("scan_charges needs two charges")
        return value

    def validate_atomref_table(self, value):
        parse_atomref_table(value)
        return value

    def validate(self, attrs):
        if not attrs["cutoff_lower"] < attrs["cutoff_upper"]:
            raise serializers.ValidationError("cutoff_lower must be below cutoff_upper")
        if not 0.0 < attrs["scan_min"] < attrs["scan_max"]:
            raise serializers.ValidationError("scan range must satisfy 0 < scan_min < scan_max")
        if attrs["lr_min"] > attrs["lr"]:
            raise serializers.ValidationError("lr_min must not exceed lr")
        return attrs


KNOWN_KEYS = tuple(RunConfigSerializer().fields)


def parse_atomref_table(text: str) -> dict[int, float]:
    table = {}
    for entry in filter(None, (part.strip() for part in text.split(","))):
        element, sep, value = entry.partition("=")
        try:
            if not sep:
                raise ValueError(entry)
            table[int(element)] = float(value)
        except ValueError:
            raise serializers.ValidationError(
                f"atomref_table entries look like '8=-75.0', got {entry!r}"
            )
    return table


class RunConfig:
    """Validated configuration; keys are attributes."""

    def __init__(self, values: dict, text: str = ""):
        self._values = dict(values)
        self.text = text

    def __getattr__(self, name):
        try:
            return self.__dict__["_values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def as_dict(self) -> dict:
        return dict(self._values)

    def replace(self, **changes) -> RunConfig:
        return config_from_mapping({**self._values, **changes})

    @property
    def atomref(self) -> dict[int, float]:
        return parse_atomref_table(self.atomref_table)

    def to_text(self) -> str:
        lines = []
        for key in KNOWN_KEYS:
            value = self._values[key]
            if isinstance(value, list):
                value = ", ".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key}: {value}")
        return "\n".join(lines) + "\n"


def _split_list(text: str) -> list[str]:
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        text = text[1:-1]
    return [part.strip().strip("'\"") for part in text.split(",") if part.strip()]


def _suggest(key: str) -> str:
    matches = get_close_matches(key, KNOWN_KEYS, n=1)
    return f" (did you mean '{matches[0]}'?)" if matches else ""


def _validated(raw: dict, text: str) -> RunConfig:
    serializer = RunConfigSerializer(data=raw)
    if not serializer.is_valid():
        problems = "; ".join(
            f"{key}: {' '.join(str(m) for m in messages)}"
            for key, messages in serializer.errors.items()
        )
        raise ConfigError(f"invalid configuration: {problems}")
    return RunConfig(serializer.validated_data, text=text)


def config_from_mapping(values: dict | None = None) -> RunConfig:
    values = dict(values or {})
    unknown = [key for key in values if key not in KNOWN_KEYS]
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}'{_suggest(unknown[0])}")
    return _validated(values, text="")


def parse_config_text(text: str) -> RunConfig:
    fields = RunConfigSerializer().fields
    raw = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {number}: expected 'key: value', got {line!r}")
        if key not in fields:
            raise ConfigError(f"line {number}: unknown key '{key}'{_suggest(key)}")
        if key in raw:
            raise ConfigError(f"line {number}: duplicate key '{key}'")
        if isinstance(fields[key], serializers.ListField):
            raw[key] = _split_list(value)
        else:
            raw[key] = value.strip("'\"")
    return _validated(raw, text=text)


def parse_config(path: str | Path | None) -> RunConfig:
    """Read a configuration file; ``None`` means all defaults."""
    if path is None:
        return parse_config_text("")
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file not found: {path}")
    text = path.read_text(encoding="utf-8")
    config = parse_config_text(text)
    logger.debug("loaded configuration from %s", path)
    return config
