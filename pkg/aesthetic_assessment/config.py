"""Pipeline configuration: KEY=VALUE files read with decouple, validated by a DRF serializer."""

import logging
from dataclasses import dataclass, replace
from pathlib import Path

from decouple import Config, RepositoryEmpty, RepositoryEnv
from django.conf import settings

from .exceptions import ConfigurationError
from .schema import AttributeSchema, Benchmark
from .serializers import PipelineConfigSerializer
from .training import Schedule, StageConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    benchmark: Benchmark
    schema: AttributeSchema
    manifest: Path
    votes: Path
    image_root: Path
    split_seed: int
    seed: int
    backbone_weights: Path
    backbone_widths: tuple
    input_size: tuple
    dropout_rate: float
    output_units: int
    output_dir: Path
    deterministic: bool
    device: str
    num_workers: int
    loss_weights: tuple
    stages: tuple
    source: Path = None

    @property
    def single_task(self):
        return self.output_units == 1

    def with_output_dir(self, output_dir):
        return replace(self, output_dir=Path(output_dir))


def _flatten_errors(errors, prefix=""):
    if isinstance(errors, dict):
        lines = []
        for key, value in errors.items():
            name = key.upper() if key != "non_field_errors" else ""
            lines.extend(_flatten_errors(value, f"{name}: " if name else ""))
        return lines
    if isinstance(errors, list):
        return [line for item in errors for line in _flatten_errors(item, prefix)]
    return [f"{prefix}{errors}"]


def read_config_values(path=None):
    """
    Raw string values for every pipeline key found in the file or environment.

    Environment variables take precedence over the file, as in decouple.
    """
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"Config file not found: {path}")
        source = Config(RepositoryEnv(str(path)))
    else:
        source = Config(RepositoryEmpty())
    values = {}
    for name in PipelineConfigSerializer().fields:
        value = source(name.upper(), default=None)
        if value is not None:
            values[name] = value
    return values


def load_pipeline_config(path=None, **overrides):
    """
    Build a validated PipelineConfig.

    overrides (seed, deterministic, single_task, dataset) replace file values
    when not None; they come from the command-line flags.
    """
    values = read_config_values(path)
    values.update({key: value for key, value in overrides.items() if value is not None})
    base_dir = Path(path).resolve().parent if path is not None else Path.cwd()
    if "backbone_weights" not in values and settings.BACKBONE_WEIGHTS_PATH:
        values["backbone_weights"] = settings.BACKBONE_WEIGHTS_PATH
    values.setdefault("resolution", settings.TARGET_IMAGE_SIZE)
    values.setdefault("deterministic", settings.AESTHETICS_DETERMINISTIC)

    serializer = PipelineConfigSerializer(
        data=values,
        context={
            "base_dir": base_dir,
            "data_root": settings.AESTHETICS_DATA_ROOT or base_dir,
            "output_root": settings.AESTHETICS_OUTPUT_ROOT or base_dir,
        },
    )
    if not serializer.is_valid():
        raise ConfigurationError(
            f"Invalid pipeline config{f' {path}' if path else ''}:\n  "
            + "\n  ".join(_flatten_errors(serializer.errors))
        )
    data = serializer.validated_data

    stages = (
        StageConfig.stage1(
            lr=data["stage1_lr"],
            epochs=data["stage1_epochs"],
            batch_size=data["stage1_batch_size"],
            flip_probability=data["flip_probability"],
        ),
        StageConfig.stage2(
            lr=data["stage2_lr"],
            epochs=data["stage2_epochs"],
            batch_size=data["stage2_batch_size"],
            schedule=Schedule(data["stage2_schedule"]),
            decay_steps=data["stage2_decay_steps"],
            decay_base=data["stage2_decay_base"],
            trainable=("head", *data["stage2_unfreeze"]),
            flip_probability=data["flip_probability"],
        ),
    )
    config = PipelineConfig(
        benchmark=data["benchmark"],
        schema=data["schema"],
        manifest=data["manifest"],
        votes=data["votes"],
        image_root=data["image_root"],
        split_seed=data["split_seed"],
        seed=data["seed"],
        backbone_weights=data["backbone_weights"],
        backbone_widths=tuple(data["backbone_widths"]),
        input_size=(data["resolution"], data["resolution"]),
        dropout_rate=data["dropout_rate"],
        output_units=data["output_units"],
        output_dir=data["output_dir"],
        deterministic=data["deterministic"],
        device=data["device"],
        num_workers=data["num_workers"],
        loss_weights=data["loss_weights"],
        stages=stages,
        source=Path(path) if path is not None else None,
    )
    logger.info(
        "Loaded %s config: %d output unit(s), dropout %.2f, seed %d",
        config.benchmark.value,
        config.output_units,
        config.dropout_rate,
        config.seed,
    )
    return config
