"""Label ingestion, vote averaging, splitting and batch delivery."""

import enum
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
import torch
from torch.utils.data import DataLoader, Dataset

from .exceptions import (
    EmptyVotesError,
    SchemaError,
    TargetValidationError,
)
from .schema import OVERALL, Benchmark
from .utils import augment_flip, decode_image, to_tensor

logger = logging.getLogger(__name__)

IMAGE_COLUMN = "image"
SPLIT_COLUMN = "split"
RATER_COLUMN = "rater"

AADB_SPLIT_SIZES = {"train": 8500, "val": 500, "test": 1000}
EVA_IMAGE_COUNT = 4070
EVA_TRAIN_SIZE = 3500
EVA_TEST_SIZE = 570
EVA_MIN_VOTES = 30

DEFAULT_FLIP_PROBABILITY = 0.5


class Split(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class ImageRecord:
    image_path: Path
    raw_targets: tuple
    normalized_targets: tuple
    split: Split = None

    @property
    def name(self):
        return self.image_path.name


@dataclass(frozen=True)
class VoteTable:
    """Per-image rater score tuples, each (overall, *attributes)."""

    benchmark: Benchmark
    target_names: tuple
    votes: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.votes)


@dataclass(frozen=True)
class DatasetSplits:
    train: tuple
    val: tuple
    test: tuple

    @property
    def sizes(self):
        return {"train": len(self.train), "val": len(self.val), "test": len(self.test)}

    def __getitem__(self, split):
        return getattr(self, Split(split).value)


class EncodedBatch(NamedTuple):
    images: torch.Tensor
    targets: torch.Tensor


def normalize_targets(raw, schema):
    return schema.normalize(raw)


def denormalize_targets(normalized, schema):
    return schema.denormalize(normalized)


def make_record(image_path, raw, schema, split=None, row=None):
    raw = np.asarray(raw, dtype=np.float64)
    normalized = schema.normalize(raw, row=row)
    return ImageRecord(
        image_path=Path(image_path),
        raw_targets=tuple(float(v) for v in raw),
        normalized_targets=tuple(float(v) for v in normalized),
        split=Split(split) if split else None,
    )


def _check_columns(columns, schema, required_extra=()):
    expected_head = [IMAGE_COLUMN, *required_extra, OVERALL]
    head = list(columns[: len(expected_head)])
    if head != expected_head:
        raise SchemaError(
            f"Header must start with {','.join(expected_head)}, got {','.join(head)}"
        )
    attribute_columns = [c for c in columns[len(expected_head):] if c != SPLIT_COLUMN]
    unknown = [c for c in attribute_columns if c not in schema.attribute_names]
    if unknown:
        raise SchemaError(
            f"Unknown attribute column(s) {', '.join(unknown)} for "
            f"{schema.benchmark.value}; expected {', '.join(schema.attribute_names)}"
        )
    missing = [name for name in schema.attribute_names if name not in attribute_columns]
    if missing:
        raise SchemaError(f"Missing attribute column(s): {', '.join(missing)}")


def load_manifest(path, schema, image_root=None):
    """
    Read a manifest CSV (image,overall,<attributes...>[,split]) into records.

    Image paths are resolved against image_root, defaulting to the manifest's
    directory. Rows are reported by their 1-based position after the header.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Manifest not found: {path}")
    frame = pd.read_csv(path, dtype={IMAGE_COLUMN: str, SPLIT_COLUMN: str}, encoding="utf-8")
    _check_columns(list(frame.columns), schema)

    raw = frame[list(schema.target_names)].to_numpy(dtype=np.float64)
    schema.validate(raw, first_row=1)
    normalized = schema.normalize(raw)

    splits = [None] * len(frame)
    if SPLIT_COLUMN in frame.columns:
        splits = frame[SPLIT_COLUMN].fillna("").str.strip().str.lower().tolist()
        valid = {s.value for s in Split}
        for i, value in enumerate(splits):
            if value and value not in valid:
                raise TargetValidationError(
                    f"Unknown split '{value}'", row=i + 1, column=SPLIT_COLUMN
                )

    root = Path(image_root) if image_root else path.parent
    records = [
        ImageRecord(
            image_path=root / image,
            raw_targets=tuple(float(v) for v in raw_row),
            normalized_targets=tuple(float(v) for v in norm_row),
            split=Split(split) if split else None,
        )
        for image, raw_row, norm_row, split in zip(frame[IMAGE_COLUMN], raw, normalized, splits)
    ]
    logger.info("Loaded %d records from %s", len(records), path)
    return records


def load_votes(path, schema):
    """Read a per-rater vote CSV (image,rater,overall,<attributes...>)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Vote file not found: {path}")
    frame = pd.read_csv(path, dtype={IMAGE_COLUMN: str, RATER_COLUMN: str}, encoding="utf-8")
    _check_columns(list(frame.columns), schema, required_extra=(RATER_COLUMN,))
    values = frame[list(schema.target_names)].to_numpy(dtype=np.float64)
    schema.validate(values, first_row=1)

    votes = {}
    for image, row in zip(frame[IMAGE_COLUMN], values):
        votes.setdefault(image, []).append(tuple(float(v) for v in row))
    logger.info("Loaded %d votes for %d images from %s", len(frame), len(votes), path)
    return VoteTable(
        benchmark=schema.benchmark,
        target_names=schema.target_names,
        votes={image: tuple(rows) for image, rows in votes.items()},
    )


def average_votes(votes):
    """Arithmetic mean per target per image, independent of vote order."""
    averages = {}
    sparse = []
    for image in sorted(votes.votes):
        rows = votes.votes[image]
        if not rows:
            raise EmptyVotesError(f"Image '{image}' has no votes")
        if votes.benchmark == Benchmark.EVA and len(rows) < EVA_MIN_VOTES:
            sparse.append(image)
        # Sorting fixes the summation order so the mean is bit-stable under permutation.
        averages[image] = np.mean(np.array(sorted(rows), dtype=np.float64), axis=0)
    if sparse:
        logger.warning(
            "%d image(s) have fewer than %d votes, e.g. %s",
            len(sparse),
            EVA_MIN_VOTES,
            ", ".join(sparse[:5]),
        )
    return averages


def records_from_averages(averages, schema, image_root):
    root = Path(image_root)
    return [make_record(root / image, raw, schema) for image, raw in averages.items()]


def _partition_by_column(records):
    buckets = {split: [] for split in Split}
    for record in records:
        buckets[record.split].append(record)
    return DatasetSplits(
        train=tuple(buckets[Split.TRAIN]),
        val=tuple(buckets[Split.VAL]),
        test=tuple(buckets[Split.TEST]),
    )


def _seeded_partition(records, seed):
    n = len(records)
    if n != EVA_IMAGE_COUNT:
        logger.warning(
            "Expected %d records for a seeded split, got %d; keeping the %d/%d proportion",
            EVA_IMAGE_COUNT,
            n,
            EVA_TRAIN_SIZE,
            EVA_TEST_SIZE,
        )
    n_train = EVA_TRAIN_SIZE if n == EVA_IMAGE_COUNT else int(round(n * EVA_TRAIN_SIZE / EVA_IMAGE_COUNT))
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [records[i] for i in order]
    return DatasetSplits(
        train=tuple(replace(r, split=Split.TRAIN) for r in shuffled[:n_train]),
        val=(),
        test=tuple(replace(r, split=Split.TEST) for r in shuffled[n_train:]),
    )


def split_dataset(records, schema, seed):
    """
    Partition records into train/val/test.

    AADB keeps the official partition from the split column. EVA is shuffled
    under seed, the first 3500 going to train and the remaining 570 to test.
    Custom benchmarks use the split column when every row has one.
    """
    has_column = bool(records) and all(r.split is not None for r in records)
    if schema.benchmark == Benchmark.AADB:
        if not has_column:
            raise SchemaError("AADB manifests must carry the official split column")
        splits = _partition_by_column(records)
        if splits.sizes != AADB_SPLIT_SIZES:
            logger.warning("AADB split sizes %s differ from the official partition", splits.sizes)
        return splits
    if schema.benchmark == Benchmark.CUSTOM and has_column:
        return _partition_by_column(records)
    return _seeded_partition(list(records), seed)


def _epoch_seed(seed, epoch, *extra):
    return int(np.random.SeedSequence([seed, epoch, *extra]).generate_state(1)[0])


class AestheticDataset(Dataset):
    """
    Serves (image, target) pairs for one epoch.

    Flip coins are derived from (seed, epoch, index), so the sample stream does
    not depend on worker count or scheduling.
    """

    def __init__(
        self,
        records,
        target_size=(224, 224),
        num_outputs=None,
        augment=False,
        flip_probability=DEFAULT_FLIP_PROBABILITY,
        seed=0,
        epoch=0,
    ):
        self.records = tuple(records)
        self.target_size = tuple(target_size)
        self.num_outputs = num_outputs
        self.augment = augment
        self.flip_probability = flip_probability
        self.seed = seed
        self.epoch = epoch

    def for_epoch(self, epoch):
        return AestheticDataset(
            self.records,
            target_size=self.target_size,
            num_outputs=self.num_outputs,
            augment=self.augment,
            flip_probability=self.flip_probability,
            seed=self.seed,
            epoch=epoch,
        )

    def flip_coin(self, index):
        if not self.augment or self.flip_probability <= 0:
            return 0
        rng = np.random.default_rng(_epoch_seed(self.seed, self.epoch, index))
        return int(rng.random() < self.flip_probability)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, index):
        record = self.records[index]
        image = decode_image(record.image_path, self.target_size)
        image = augment_flip(image, self.flip_coin(index))
        target = torch.tensor(record.normalized_targets[: self.num_outputs], dtype=torch.float32)
        return to_tensor(image), target


def collate_batch(samples):
    images, targets = zip(*samples)
    return EncodedBatch(images=torch.stack(images), targets=torch.stack(targets))


def make_loader(dataset, batch_size, shuffle=False, num_workers=0):
    generator = torch.Generator()
    generator.manual_seed(_epoch_seed(dataset.seed, dataset.epoch))
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        num_workers=num_workers,
        collate_fn=collate_batch,
        generator=generator,
    )


def write_manifest(records, path, schema):
    rows = [
        {
            IMAGE_COLUMN: str(record.image_path),
            **dict(zip(schema.target_names, record.raw_targets)),
            SPLIT_COLUMN: record.split.value if record.split else "",
        }
        for record in records
    ]
    columns = [IMAGE_COLUMN, *schema.target_names, SPLIT_COLUMN]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, lineterminator="\n")


def write_vote_averages(averages, path, schema):
    frame = pd.DataFrame.from_dict(averages, orient="index", columns=list(schema.target_names))
    frame.index.name = IMAGE_COLUMN
    frame.to_csv(path, lineterminator="\n")


def attribute_level_histogram(records, schema):
    """
    Count attribute levels over raw scores.

    Signed ranges count negative/null/positive, presence ranges null/positive,
    other ranges the nearest integer level.
    """
    raw = np.array([r.raw_targets for r in records], dtype=np.float64).reshape(-1, schema.num_targets)
    histogram = {}
    for j, (name, target_range) in enumerate(zip(schema.attribute_names, schema.attribute_ranges), start=1):
        column = raw[:, j]
        if target_range.low < 0 < target_range.high:
            counts = {
                "negative": int((column < 0).sum()),
                "null": int((column == 0).sum()),
                "positive": int((column > 0).sum()),
            }
        elif target_range.low == 0:
            counts = {"null": int((column == 0).sum()), "positive": int((column > 0).sum())}
        else:
            levels = np.rint(column).astype(int)
            counts = {
                str(level): int((levels == level).sum())
                for level in range(int(np.ceil(target_range.low)), int(np.floor(target_range.high)) + 1)
            }
        histogram[name] = counts
    return histogram


def dataset_statistics(splits, schema):
    """Per-target raw min/max/mean over all records plus split sizes and level counts."""
    records = [*splits.train, *splits.val, *splits.test]
    raw = np.array([r.raw_targets for r in records], dtype=np.float64).reshape(-1, schema.num_targets)
    targets = {}
    for j, name in enumerate(schema.target_names):
        column = raw[:, j]
        targets[name] = {
            "min": round(float(column.min()), 6) if len(column) else None,
            "max": round(float(column.max()), 6) if len(column) else None,
            "mean": round(float(column.mean()), 6) if len(column) else None,
        }
    return {
        "benchmark": schema.benchmark.value,
        "record_count": len(records),
        "split_sizes": splits.sizes,
        "targets": targets,
        "attribute_levels": attribute_level_histogram(records, schema),
    }


def load_benchmark_records(schema, manifest=None, votes=None, image_root=None):
    """Records from a manifest, or from averaged per-rater votes when no manifest is given."""
    if manifest is not None:
        return load_manifest(manifest, schema, image_root=image_root)
    if votes is None:
        raise FileNotFoundError("Neither a manifest nor a vote file was configured")
    root = image_root if image_root is not None else Path(votes).parent
    return records_from_averages(average_votes(load_votes(votes, schema)), schema, root)
