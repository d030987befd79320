import json
from pathlib import Path

from ...dataset import (
    average_votes,
    dataset_statistics,
    load_manifest,
    load_votes,
    records_from_averages,
    split_dataset,
    write_manifest,
    write_vote_averages,
)
from ..base import AestheticsCommand


class Command(AestheticsCommand):
    help = "Validate label files, materialize split manifests and write dataset statistics."

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--output",
            help="Directory for the prepared files (default: <OUTPUT_DIR>/prepared)",
        )

    def run(self, **options):
        config = self.load_config(options)
        schema = config.schema
        output = Path(options["output"]) if options["output"] else config.output_dir / "prepared"
        output.mkdir(parents=True, exist_ok=True)

        if config.manifest is not None:
            records = load_manifest(config.manifest, schema, image_root=config.image_root)
        else:
            averages = average_votes(load_votes(config.votes, schema))
            write_vote_averages(averages, output / "vote_averages.csv", schema)
            root = config.image_root if config.image_root is not None else config.votes.parent
            records = records_from_averages(averages, schema, root)

        splits = split_dataset(records, schema, config.split_seed)
        for split, split_records in (("train", splits.train), ("val", splits.val), ("test", splits.test)):
            write_manifest(split_records, output / f"{split}.csv", schema)

        statistics = dataset_statistics(splits, schema)
        (output / "statistics.json").write_text(
            json.dumps(statistics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

        sizes = splits.sizes
        overall = statistics["targets"]["overall"]
        self.stdout.write(
            self.style.SUCCESS(
                f"Prepared {statistics['record_count']} {schema.benchmark.value} records "
                f"(train {sizes['train']}, val {sizes['val']}, test {sizes['test']}) in {output}"
            )
        )
        self.stdout.write(f"Overall score range: {overall['min']} - {overall['max']}")
