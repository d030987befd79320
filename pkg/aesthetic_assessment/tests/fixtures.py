"""Synthetic images, tiny backbones and label files shared by the tests."""

from pathlib import Path

import numpy as np
import pandas as pd
import torch
from PIL import Image
from torch import nn

from ..dataset import make_record
from ..network import Backbone, BackboneSpec, HeadSpec, build_network

TINY_WIDTHS = (4, 8, 8, 16, 16)
TINY_SIZE = (32, 32)


def tiny_backbone_spec(weights_path=None):
    return BackboneSpec(widths=TINY_WIDTHS, weights_path=weights_path)


def write_tiny_weights(path, seed=0):
    """Kaiming-initialized weights for the tiny backbone, saved as a native state dict."""
    torch.manual_seed(seed)
    backbone = Backbone(tiny_backbone_spec())
    for module in backbone.modules():
        if isinstance(module, nn.Conv2d):
            nn.init.kaiming_normal_(module.weight, nonlinearity="relu")
            nn.init.constant_(module.bias, 0.01)
    torch.save(backbone.state_dict(), path)
    return Path(path)


def tiny_network(output_units=12, dropout_rate=0.0, seed=0, weights_path=None):
    return build_network(
        tiny_backbone_spec(weights_path),
        HeadSpec(dropout_rate=dropout_rate, output_units=output_units),
        seed=seed,
        input_size=TINY_SIZE,
    )


def write_png(path, seed=0, size=TINY_SIZE):
    """A per-seed base colour with a horizontal ramp and mild noise, so images differ after pooling."""
    rng = np.random.default_rng(seed)
    width, height = size
    base = rng.uniform(0, 255, size=3)
    ramp = np.linspace(-1.0, 1.0, width)[None, :, None] * rng.uniform(-60, 60, size=3)
    noise = rng.normal(0.0, 10.0, size=(height, width, 3))
    pixels = np.clip(base + ramp + noise, 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PNG")
    return Path(path)


def random_raw_targets(schema, rng):
    return np.array([rng.uniform(r.low, r.high) for r in schema.ranges])


def synthetic_records(directory, schema, count, seed=0, splits=None):
    """count records with random PNGs and in-range targets; splits cycles over the records."""
    directory = Path(directory)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(count):
        image = write_png(directory / f"img_{i:04d}.png", seed=seed * 10_000 + i)
        split = splits[i % len(splits)] if splits else None
        records.append(make_record(image, random_raw_targets(schema, rng), schema, split=split))
    return records


def write_manifest_csv(path, schema, rows):
    """rows: (image, raw_targets, split) triples."""
    frame = pd.DataFrame(
        [{"image": image, **dict(zip(schema.target_names, raw)), "split": split} for image, raw, split in rows],
        columns=["image", *schema.target_names, "split"],
    )
    frame.to_csv(path, index=False)
    return Path(path)


def write_synthetic_manifest(directory, schema, count, seed=0, splits=("train", "val", "test")):
    directory = Path(directory)
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        name = f"img_{i:04d}.png"
        write_png(directory / name, seed=seed * 10_000 + i)
        rows.append((name, random_raw_targets(schema, rng), splits[i % len(splits)]))
    return write_manifest_csv(directory / "manifest.csv", schema, rows)
