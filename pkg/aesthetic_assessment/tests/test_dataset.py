from pathlib import Path
import os
import tempfile
import unittest

import numpy as np
import torch
from PIL import Image
from django.test import SimpleTestCase

from ..dataset import (
    EVA_IMAGE_COUNT,
    AestheticDataset,
    DatasetSplits,
    Split,
    VoteTable,
    attribute_level_histogram,
    average_votes,
    dataset_statistics,
    load_manifest,
    load_votes,
    make_loader,
    make_record,
    split_dataset,
)
from ..evaluation import interval_frequencies, spearman_rho
from ..exceptions import EmptyVotesError, ImageDecodeError, SchemaError, TargetValidationError
from ..reporting import load_reference_results
from ..schema import AADB_SCHEMA, EVA_SCHEMA, Benchmark
from ..utils import IMAGENET_MEAN, IMAGENET_STD, augment_flip, decode_image, encode_image, to_tensor
from .fixtures import TINY_SIZE, synthetic_records, write_manifest_csv, write_png

DATA_ROOT = os.environ.get("AESTHETICS_DATA_ROOT", "")


def _eva_votes(image_votes):
    return VoteTable(benchmark=Benchmark.EVA, target_names=EVA_SCHEMA.target_names, votes=image_votes)


class ImageTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = write_png(Path(self.tmp.name) / "a.png", seed=3, size=(40, 24))

    def test_decode_resizes_and_scales(self):
        image = decode_image(self.path, TINY_SIZE)
        self.assertEqual(image.shape, (32, 32, 3))
        self.assertEqual(image.dtype, np.float32)
        self.assertGreaterEqual(image.min(), 0.0)
        self.assertLessEqual(image.max(), 1.0)

    def test_decode_failure_names_path(self):
        broken = Path(self.tmp.name) / "broken.jpg"
        broken.write_bytes(b"not an image")
        with self.assertRaises(ImageDecodeError) as ctx:
            decode_image(broken)
        self.assertIn("broken.jpg", str(ctx.exception))

    def test_flip_reverses_columns(self):
        image = decode_image(self.path, TINY_SIZE)
        flipped = augment_flip(image, 1)
        np.testing.assert_array_equal(flipped[:, 0, :], image[:, -1, :])
        np.testing.assert_array_equal(augment_flip(flipped, 1), image)
        self.assertIs(augment_flip(image, 0), image)

    def test_to_tensor_is_channels_first(self):
        tensor = to_tensor(decode_image(self.path, TINY_SIZE))
        self.assertEqual(tuple(tensor.shape), (3, 32, 32))
        self.assertEqual(tensor.dtype, torch.float32)

    def test_gray_image_encodes_to_constant_channels(self):
        gray = Path(self.tmp.name) / "gray.png"
        Image.new("RGB", TINY_SIZE, (128, 128, 128)).save(gray, format="PNG")
        tensor = encode_image(gray, TINY_SIZE)
        expected = (np.float32(128) / np.float32(255) - np.asarray(IMAGENET_MEAN, dtype=np.float32)) / np.asarray(
            IMAGENET_STD, dtype=np.float32
        )
        for channel in range(3):
            torch.testing.assert_close(
                tensor[channel], torch.full(TINY_SIZE, float(expected[channel])), rtol=0, atol=1e-6
            )

    def test_encoding_is_bit_identical(self):
        self.assertTrue(torch.equal(encode_image(self.path, TINY_SIZE), encode_image(self.path, TINY_SIZE)))


class VoteAveragingTests(SimpleTestCase):
    def test_mean_per_target(self):
        votes = _eva_votes({"a.jpg": ((6.0, 1.0, 2.0, 3.0, 4.0), (8.0, 3.0, 2.0, 1.0, 4.0))})
        with self.assertLogs("aesthetic_assessment.dataset", level="WARNING"):
            averages = average_votes(votes)
        np.testing.assert_array_equal(averages["a.jpg"], [7.0, 2.0, 2.0, 2.0, 4.0])

    def test_order_independent_bitwise(self):
        rng = np.random.default_rng(0)
        rows = [tuple(rng.uniform(1, 4, 5)) for _ in range(40)]
        shuffled = [rows[i] for i in rng.permutation(len(rows))]
        first = average_votes(_eva_votes({"a.jpg": tuple(rows)}))["a.jpg"]
        second = average_votes(_eva_votes({"a.jpg": tuple(shuffled)}))["a.jpg"]
        self.assertEqual(first.tobytes(), second.tobytes())

    def test_empty_votes(self):
        with self.assertRaises(EmptyVotesError):
            average_votes(_eva_votes({"a.jpg": ()}))

    def test_vote_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "votes.csv"
            path.write_text(
                "image,rater,overall,light_and_color,composition_and_depth,quality,semantics\n"
                "a.jpg,r1,6,1,2,3,4\n"
                "a.jpg,r2,8,3,2,1,4\n"
                "b.jpg,r1,5,2,2,2,2\n"
            )
            table = load_votes(path, EVA_SCHEMA)
        self.assertEqual(len(table), 2)
        self.assertEqual(len(table.votes["a.jpg"]), 2)


class ManifestTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def _raw(self, overall=5.0):
        return [overall, 1.0, 2.0, 3.0, 4.0]

    def test_loads_records_with_splits(self):
        path = write_manifest_csv(
            self.dir / "m.csv", EVA_SCHEMA, [("a.png", self._raw(), "train"), ("b.png", self._raw(2.0), "test")]
        )
        records = load_manifest(path, EVA_SCHEMA)
        self.assertEqual(len(records), 2)
        self.assertEqual(records[0].image_path, self.dir / "a.png")
        self.assertEqual(records[1].split, Split.TEST)
        self.assertEqual(records[1].normalized_targets[0], 0.2)

    def test_out_of_range_row_reported(self):
        path = write_manifest_csv(
            self.dir / "m.csv", EVA_SCHEMA, [("a.png", self._raw(), "train"), ("b.png", self._raw(12.0), "test")]
        )
        with self.assertRaises(TargetValidationError) as ctx:
            load_manifest(path, EVA_SCHEMA)
        self.assertEqual(ctx.exception.row, 2)
        self.assertEqual(ctx.exception.column, "overall")

    def test_unknown_attribute_column(self):
        path = self.dir / "m.csv"
        path.write_text("image,overall,light_and_color,composition_and_depth,quality,humor\na.png,5,1,1,1,1\n")
        with self.assertRaises(SchemaError):
            load_manifest(path, EVA_SCHEMA)

    def test_unknown_split_value(self):
        path = write_manifest_csv(self.dir / "m.csv", EVA_SCHEMA, [("a.png", self._raw(), "holdout")])
        with self.assertRaises(TargetValidationError):
            load_manifest(path, EVA_SCHEMA)


class SplitTests(SimpleTestCase):
    def _records(self, count):
        return [make_record(f"{i}.png", [5.0, 1.0, 1.0, 1.0, 1.0], EVA_SCHEMA) for i in range(count)]

    def test_eva_seeded_split_sizes(self):
        splits = split_dataset(self._records(EVA_IMAGE_COUNT), EVA_SCHEMA, seed=7)
        self.assertEqual(splits.sizes, {"train": 3500, "val": 0, "test": 570})
        names = {r.name for r in splits.train} | {r.name for r in splits.test}
        self.assertEqual(len(names), EVA_IMAGE_COUNT)

    def test_split_is_a_function_of_the_seed(self):
        records = self._records(100)
        with self.assertLogs("aesthetic_assessment.dataset", level="WARNING"):
            first = split_dataset(records, EVA_SCHEMA, seed=1)
            second = split_dataset(records, EVA_SCHEMA, seed=1)
            other = split_dataset(records, EVA_SCHEMA, seed=2)
        self.assertEqual([r.name for r in first.test], [r.name for r in second.test])
        self.assertNotEqual([r.name for r in first.test], [r.name for r in other.test])

    def test_aadb_requires_split_column(self):
        records = [make_record("a.png", [0.5] + [0.0] * 11, AADB_SCHEMA)]
        with self.assertRaises(SchemaError):
            split_dataset(records, AADB_SCHEMA, seed=0)

    def test_aadb_uses_official_column(self):
        records = [
            make_record(f"{i}.png", [0.5] + [0.0] * 11, AADB_SCHEMA, split=split)
            for i, split in enumerate(["train", "train", "val", "test"])
        ]
        with self.assertLogs("aesthetic_assessment.dataset", level="WARNING"):
            splits = split_dataset(records, AADB_SCHEMA, seed=0)
        self.assertEqual(splits.sizes, {"train": 2, "val": 1, "test": 1})


class DatasetTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.records = synthetic_records(self.tmp.name, EVA_SCHEMA, 6, seed=1)

    def test_items_and_batches(self):
        dataset = AestheticDataset(self.records, target_size=TINY_SIZE, num_outputs=5)
        batch = next(iter(make_loader(dataset, batch_size=4)))
        self.assertEqual(tuple(batch.images.shape), (4, 3, 32, 32))
        self.assertEqual(tuple(batch.targets.shape), (4, 5))

    def test_single_task_targets(self):
        dataset = AestheticDataset(self.records, target_size=TINY_SIZE, num_outputs=1)
        _, target = dataset[0]
        self.assertEqual(tuple(target.shape), (1,))

    def test_flip_coins_depend_on_seed_and_epoch_only(self):
        dataset = AestheticDataset(self.records, target_size=TINY_SIZE, augment=True, seed=5)
        coins = [dataset.flip_coin(i) for i in range(len(self.records))]
        again = AestheticDataset(self.records, target_size=TINY_SIZE, augment=True, seed=5)
        self.assertEqual(coins, [again.flip_coin(i) for i in range(len(self.records))])
        self.assertEqual(dataset.for_epoch(3).epoch, 3)

    def test_no_augmentation_means_no_flip(self):
        dataset = AestheticDataset(self.records, target_size=TINY_SIZE, augment=False)
        self.assertEqual({dataset.flip_coin(i) for i in range(len(self.records))}, {0})


class StatisticsTests(SimpleTestCase):
    def test_attribute_levels(self):
        names = AADB_SCHEMA.target_names
        raw = np.zeros(12)
        raw[0] = 0.5
        raw[names.index("content")] = 0.4
        raw[names.index("light")] = -0.2
        raw[names.index("repetition")] = 0.6
        histogram = attribute_level_histogram([make_record("a.png", raw, AADB_SCHEMA)], AADB_SCHEMA)
        self.assertEqual(histogram["content"], {"negative": 0, "null": 0, "positive": 1})
        self.assertEqual(histogram["light"], {"negative": 1, "null": 0, "positive": 0})
        self.assertEqual(histogram["vivid_color"], {"negative": 0, "null": 1, "positive": 0})
        self.assertEqual(histogram["repetition"], {"null": 0, "positive": 1})

    def test_likert_levels(self):
        record = make_record("a.png", [5.0, 1.0, 2.0, 3.4, 4.0], EVA_SCHEMA)
        histogram = attribute_level_histogram([record], EVA_SCHEMA)
        self.assertEqual(histogram["quality"], {"1": 0, "2": 0, "3": 1, "4": 0})

    def test_statistics_summary(self):
        records = [
            make_record("a.png", [2.0, 1.0, 1.0, 1.0, 1.0], EVA_SCHEMA, split="train"),
            make_record("b.png", [8.0, 4.0, 4.0, 4.0, 4.0], EVA_SCHEMA, split="test"),
        ]
        splits = DatasetSplits(train=(records[0],), val=(), test=(records[1],))
        statistics = dataset_statistics(splits, EVA_SCHEMA)
        self.assertEqual(statistics["targets"]["overall"], {"min": 2.0, "max": 8.0, "mean": 5.0})
        self.assertEqual(statistics["split_sizes"], {"train": 1, "val": 0, "test": 1})


@unittest.skipUnless(
    DATA_ROOT and (Path(DATA_ROOT) / "aadb" / "manifest.csv").is_file(),
    "AADB labels not available under AESTHETICS_DATA_ROOT",
)
class AADBLabelTests(SimpleTestCase):
    def setUp(self):
        self.records = load_manifest(Path(DATA_ROOT) / "aadb" / "manifest.csv", AADB_SCHEMA)

    def test_official_split_sizes(self):
        splits = split_dataset(self.records, AADB_SCHEMA, seed=0)
        self.assertEqual(splits.sizes, {"train": 8500, "val": 500, "test": 1000})

    def test_test_frequency_table(self):
        test = split_dataset(self.records, AADB_SCHEMA, seed=0).test
        edges = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
        table = interval_frequencies([r.raw_targets[0] for r in test], edges)
        self.assertEqual(table.counts, (4, 35, 79, 147, 152, 165, 224, 76, 103, 15))

    def test_ground_truth_overall_content_correlation(self):
        test = split_dataset(self.records, AADB_SCHEMA, seed=0).test
        content = AADB_SCHEMA.target_names.index("content")
        rho = spearman_rho([r.raw_targets[0] for r in test], [r.raw_targets[content] for r in test])
        self.assertAlmostEqual(rho, load_reference_results()["aadb"]["ground_truth_content_rho"], delta=0.02)


@unittest.skipUnless(
    DATA_ROOT and (Path(DATA_ROOT) / "eva" / "votes.csv").is_file(),
    "EVA votes not available under AESTHETICS_DATA_ROOT",
)
class EVAVoteTests(SimpleTestCase):
    def test_vote_average_extremes(self):
        averages = average_votes(load_votes(Path(DATA_ROOT) / "eva" / "votes.csv", EVA_SCHEMA))
        table = np.array(list(averages.values()))
        self.assertAlmostEqual(table[:, 0].min(), 1.764, delta=1e-3)
        self.assertAlmostEqual(table[:, 0].max(), 9.032, delta=1e-3)

    def test_attribute_average_ranges(self):
        averages = average_votes(load_votes(Path(DATA_ROOT) / "eva" / "votes.csv", EVA_SCHEMA))
        table = np.array(list(averages.values()))
        for j, name in enumerate(EVA_SCHEMA.target_names):
            low, high = load_reference_results()["eva"]["vote_averages"][name]
            with self.subTest(attribute=name):
                self.assertAlmostEqual(table[:, j].min(), low, delta=1e-3)
                self.assertAlmostEqual(table[:, j].max(), high, delta=1e-3)
