import logging
import time

from django.core.management.base import BaseCommand, CommandError
from humanfriendly import format_timespan

from ..config import load_pipeline_config
from ..dataset import load_benchmark_records, split_dataset
from ..exceptions import (
    AestheticsError,
    ConfigurationError,
    EmptySplitError,
    EmptyVotesError,
    ImageDecodeError,
    SchemaError,
    TargetValidationError,
    UnknownLayerError,
)
from ..schema import Benchmark

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

CONFIG_ERRORS = (ConfigurationError, UnknownLayerError)
DATA_ERRORS = (
    SchemaError,
    TargetValidationError,
    EmptyVotesError,
    EmptySplitError,
    ImageDecodeError,
    FileNotFoundError,
)


class AestheticsCommand(BaseCommand):
    """
    Base for the toolkit's commands.

    Adds the global flags and maps toolkit errors to exit codes: 2 for
    configuration, 3 for data validation and 4 for runtime failures.
    """

    requires_config = True

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Pipeline config file (KEY=VALUE lines)")
        parser.add_argument("--seed", type=int, help="Override SEED")
        parser.add_argument(
            "--deterministic",
            action="store_true",
            default=None,
            help="Force deterministic kernels and seeded data order",
        )
        parser.add_argument(
            "--single-task",
            action="store_true",
            default=None,
            help="Predict the overall score only (one output unit)",
        )
        parser.add_argument(
            "--dataset",
            choices=[b.value for b in Benchmark],
            help="Override DATASET",
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def load_config(self, options, path=None):
        path = path or options.get("config")
        if path is None and self.requires_config:
            raise ConfigurationError("--config is required for this command")
        return load_pipeline_config(
            path,
            seed=options.get("seed"),
            deterministic=options.get("deterministic"),
            single_task=options.get("single_task"),
            dataset=options.get("dataset"),
        )

    def test_records(self, config):
        records = load_benchmark_records(
            config.schema,
            manifest=config.manifest,
            votes=config.votes,
            image_root=config.image_root,
        )
        test = split_dataset(records, config.schema, config.split_seed).test
        if not test:
            raise EmptySplitError(f"The {config.benchmark.value} test split is empty")
        return test

    def handle(self, *args, **options):
        started = time.monotonic()
        try:
            self.run(**options)
        except CONFIG_ERRORS as e:
            raise CommandError(f"Configuration error: {e}", returncode=EXIT_CONFIG)
        except DATA_ERRORS as e:
            raise CommandError(f"Data validation error: {e}", returncode=EXIT_DATA)
        except AestheticsError as e:
            raise CommandError(f"{type(e).__name__}: {e}", returncode=EXIT_RUNTIME)
        logger.info("%s finished in %s", self.__module__.rsplit(".", 1)[-1], format_timespan(time.monotonic() - started))

    def run(self, **options):
        raise NotImplementedError
