from pathlib import Path

from decouple import Csv
from rest_framework import serializers

from .exceptions import SchemaError
from .models import EvaluationRun
from .network import VGG16_WIDTHS
from .schema import Benchmark, builtin_schema, load_schema
from .training import STAGE2_UNFREEZE, Schedule

DEFAULT_DROPOUT = {Benchmark.AADB: 0.35, Benchmark.EVA: 0.25}
FALLBACK_DROPOUT = 0.35


class EvaluationRunSerializer(serializers.ModelSerializer):
    overall_rho_display = serializers.CharField(read_only=True)

    class Meta:
        model = EvaluationRun
        fields = [
            "id",
            "benchmark",
            "test_benchmark",
            "stage",
            "checkpoint",
            "test_size",
            "overall_rho",
            "overall_rho_display",
            "p_value",
            "target_correlations",
            "prediction_min",
            "prediction_max",
            "report_path",
            "created_at",
        ]
        read_only_fields = fields


class CsvFloatField(serializers.CharField):
    def to_internal_value(self, data):
        data = super().to_internal_value(data)
        try:
            return tuple(Csv(cast=float)(data)) if data else ()
        except ValueError:
            raise serializers.ValidationError("Expected comma separated numbers.")


class CsvIntField(serializers.CharField):
    def to_internal_value(self, data):
        data = super().to_internal_value(data)
        try:
            return tuple(Csv(cast=int)(data)) if data else ()
        except ValueError:
            raise serializers.ValidationError("Expected comma separated integers.")


class CsvNameField(serializers.CharField):
    def to_internal_value(self, data):
        return tuple(Csv()(super().to_internal_value(data)))


class PipelineConfigSerializer(serializers.Serializer):
    """
    Validate raw pipeline config values (strings from a KEY=VALUE file).

    Relative paths resolve against context["data_root"] (inputs) and
    context["output_root"] (OUTPUT_DIR), both defaulting to context["base_dir"].
    """

    dataset = serializers.ChoiceField(choices=[b.value for b in Benchmark], default=Benchmark.AADB.value)
    schema = serializers.CharField(required=False, allow_blank=True, default="")
    manifest = serializers.CharField(required=False, allow_blank=True, default="")
    votes = serializers.CharField(required=False, allow_blank=True, default="")
    image_root = serializers.CharField(required=False, allow_blank=True, default="")
    split_seed = serializers.IntegerField(default=0, min_value=0)
    seed = serializers.IntegerField(default=0, min_value=0)
    backbone_weights = serializers.CharField(required=False, allow_blank=True, default="")
    backbone_widths = CsvIntField(required=False, allow_blank=True, default="")
    resolution = serializers.IntegerField(default=224, min_value=32)
    dropout_rate = serializers.FloatField(required=False, allow_null=True, default=None, min_value=0.0)
    output_units = serializers.IntegerField(required=False, allow_null=True, default=None, min_value=1)
    single_task = serializers.BooleanField(default=False)
    output_dir = serializers.CharField(default="outputs")
    deterministic = serializers.BooleanField(default=True)
    device = serializers.CharField(default="auto")
    num_workers = serializers.IntegerField(default=0, min_value=0)
    flip_probability = serializers.FloatField(default=0.5, min_value=0.0, max_value=1.0)
    loss_weights = CsvFloatField(required=False, allow_blank=True, default="")
    stage1_epochs = serializers.IntegerField(default=5, min_value=0)
    stage1_lr = serializers.FloatField(default=0.001)
    stage1_batch_size = serializers.IntegerField(default=64, min_value=1)
    stage2_epochs = serializers.IntegerField(default=3, min_value=0)
    stage2_lr = serializers.FloatField(default=0.0001)
    stage2_batch_size = serializers.IntegerField(default=64, min_value=1)
    stage2_decay_steps = serializers.IntegerField(default=125, min_value=1)
    stage2_decay_base = serializers.FloatField(default=0.5)
    stage2_schedule = serializers.ChoiceField(
        choices=[s.value for s in Schedule], default=Schedule.STAIRCASE.value
    )
    stage2_unfreeze = CsvNameField(default=STAGE2_UNFREEZE)

    def _root(self, key):
        root = self.context.get(key) or self.context.get("base_dir") or "."
        return Path(root)

    def _resolve(self, value, key="data_root"):
        if not value:
            return None
        path = Path(value).expanduser()
        return path if path.is_absolute() else self._root(key) / path

    def _existing(self, value, field):
        path = self._resolve(value)
        if path is not None and not path.exists():
            raise serializers.ValidationError({field: f"Path does not exist: {path}"})
        return path

    def validate_dropout_rate(self, value):
        if value is not None and value >= 1.0:
            raise serializers.ValidationError("Dropout rate must lie in [0, 1).")
        return value

    def validate_stage1_lr(self, value):
        if value <= 0:
            raise serializers.ValidationError("Learning rate must be positive.")
        return value

    def validate_stage2_lr(self, value):
        if value <= 0:
            raise serializers.ValidationError("Learning rate must be positive.")
        return value

    def validate_stage2_decay_base(self, value):
        if value <= 0:
            raise serializers.ValidationError("Decay base must be positive.")
        return value

    def validate_backbone_widths(self, value):
        if value and (len(value) != 5 or min(value) < 1):
            raise serializers.ValidationError("Expected five positive block widths.")
        return value

    def validate(self, attrs):
        benchmark = Benchmark(attrs["dataset"])
        schema_path = self._existing(attrs["schema"], "schema")
        try:
            if schema_path is not None:
                schema = load_schema(schema_path)
            elif benchmark == Benchmark.CUSTOM:
                raise serializers.ValidationError({"schema": "A schema file is required for custom datasets."})
            else:
                schema = builtin_schema(benchmark)
        except SchemaError as e:
            raise serializers.ValidationError({"schema": str(e)})
        if schema.benchmark != benchmark:
            raise serializers.ValidationError(
                {"schema": f"Schema declares '{schema.benchmark.value}' but the dataset is '{benchmark.value}'."}
            )

        manifest = self._existing(attrs["manifest"], "manifest")
        votes = self._existing(attrs["votes"], "votes")
        if manifest is None and votes is None:
            raise serializers.ValidationError("Either MANIFEST or VOTES must be set.")
        image_root = self._existing(attrs["image_root"], "image_root")

        if attrs["single_task"]:
            output_units = 1
        else:
            output_units = attrs["output_units"] or schema.num_targets
        if output_units not in (1, schema.num_targets):
            raise serializers.ValidationError(
                {"output_units": f"Expected 1 or {schema.num_targets} output units, got {output_units}."}
            )
        loss_weights = attrs["loss_weights"] or None
        if loss_weights is not None and len(loss_weights) != output_units:
            raise serializers.ValidationError(
                {"loss_weights": f"Expected {output_units} weights, got {len(loss_weights)}."}
            )
        dropout = attrs["dropout_rate"]
        if dropout is None:
            dropout = DEFAULT_DROPOUT.get(benchmark, FALLBACK_DROPOUT)

        attrs.update(
            benchmark=benchmark,
            schema=schema,
            manifest=manifest,
            votes=votes,
            image_root=image_root,
            backbone_weights=self._resolve(attrs["backbone_weights"]),
            backbone_widths=attrs["backbone_widths"] or VGG16_WIDTHS,
            output_units=output_units,
            loss_weights=loss_weights,
            dropout_rate=dropout,
            output_dir=self._resolve(attrs["output_dir"], "output_root"),
        )
        return attrs
