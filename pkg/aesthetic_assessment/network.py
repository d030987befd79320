"""Multi-task regression network: VGG16 convolutional blocks plus a shared sigmoid head."""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import torch
from humanfriendly import format_number
from torch import nn

from .exceptions import BackboneLoadError, CheckpointMismatchError, UnknownLayerError

logger = logging.getLogger(__name__)

VGG16_CONVS_PER_BLOCK = (2, 2, 3, 3, 3)
VGG16_WIDTHS = (64, 128, 256, 512, 512)
HEAD_LAYERS = ("fc1", "fc2", "output")
HIDDEN_LAYERS = ("fc1", "fc2")
PARTS = ("backbone", "hidden_layers", "output_layer", "total")
CHECKPOINT_FORMAT = "aesthetic-multitask/1"

_TORCHVISION_KEY = re.compile(r"^features\.(\d+)\.(weight|bias)$")


@dataclass(frozen=True)
class BackboneSpec:
    convs_per_block: tuple = VGG16_CONVS_PER_BLOCK
    widths: tuple = VGG16_WIDTHS
    weights_path: Path = None
    in_channels: int = 3

    def __post_init__(self):
        if len(self.convs_per_block) != 5 or len(self.widths) != 5:
            raise ValueError("The backbone has exactly five convolutional blocks")
        if any(n < 1 for n in self.convs_per_block) or any(w < 1 for w in self.widths):
            raise ValueError("Block depths and widths must be positive")

    @property
    def feature_channels(self):
        return self.widths[-1]

    @property
    def layer_names(self):
        return tuple(
            f"block{b}_conv{i}"
            for b, depth in enumerate(self.convs_per_block, start=1)
            for i in range(1, depth + 1)
        )

    def block_layers(self, block):
        return tuple(name for name in self.layer_names if name.startswith(f"{block}_"))


@dataclass(frozen=True)
class HeadSpec:
    hidden_units: tuple = (128, 64)
    dropout_rate: float = 0.35
    output_units: int = 12

    def __post_init__(self):
        if len(self.hidden_units) != 2 or any(h < 1 for h in self.hidden_units):
            raise ValueError(f"Expected two positive hidden sizes, got {self.hidden_units}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"Dropout rate must lie in [0, 1), got {self.dropout_rate}")
        if self.output_units < 1:
            raise ValueError(f"Output units must be >= 1, got {self.output_units}")


class ConvLayer(nn.Module):
    """3x3 convolution followed by a rectifier, named like its VGG16 counterpart."""

    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)
        self.relu = nn.ReLU()

    def forward(self, x):
        return self.relu(self.conv(x))


class Backbone(nn.Module):
    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        self.layers = nn.ModuleDict()
        channels = spec.in_channels
        for b, (depth, width) in enumerate(zip(spec.convs_per_block, spec.widths), start=1):
            for i in range(1, depth + 1):
                self.layers[f"block{b}_conv{i}"] = ConvLayer(channels, width)
                channels = width
            self.layers[f"block{b}_pool"] = nn.MaxPool2d(kernel_size=2, stride=2)

    def forward(self, x):
        for layer in self.layers.values():
            x = layer(x)
        return x


class AestheticHead(nn.Module):
    """Global average pooling, two rectified dense layers, dropout and the shared output layer."""

    def __init__(self, in_features, spec):
        super().__init__()
        self.spec = spec
        first, second = spec.hidden_units
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc1 = nn.Linear(in_features, first)
        self.fc2 = nn.Linear(first, second)
        # Inverted dropout: activations are rescaled by 1 / (1 - p) at train time.
        self.dropout = nn.Dropout(spec.dropout_rate)
        self.output = nn.Linear(second, spec.output_units)

    def shared_representation(self, features):
        x = torch.flatten(self.pool(features), 1)
        x = torch.relu(self.fc1(x))
        return self.dropout(torch.relu(self.fc2(x)))

    def forward(self, features):
        return self.output(self.shared_representation(features))

    @torch.no_grad()
    def reset_parameters(self, seed):
        generator = torch.Generator().manual_seed(seed)
        for name in HEAD_LAYERS:
            layer = getattr(self, name)
            nn.init.xavier_uniform_(layer.weight, generator=generator)
            nn.init.zeros_(layer.bias)


class MultiTaskNetwork(nn.Module):
    """
    f(x | theta): images in, (K+1) scores in (0, 1) out.

    Column 0 is the overall score; columns 1..K follow the schema's attribute
    order. logits() exposes the pre-sigmoid values for attribution.
    """

    def __init__(self, backbone_spec, head_spec, input_size=(224, 224)):
        super().__init__()
        self.backbone_spec = backbone_spec
        self.head_spec = head_spec
        self.input_size = tuple(input_size)
        self.backbone = Backbone(backbone_spec)
        self.head = AestheticHead(backbone_spec.feature_channels, head_spec)

    @property
    def output_units(self):
        return self.head_spec.output_units

    @property
    def layer_names(self):
        return (*self.backbone_spec.layer_names, *HEAD_LAYERS)

    def layer(self, name):
        if name in HEAD_LAYERS:
            return getattr(self.head, name)
        if name in self.backbone_spec.layer_names:
            return self.backbone.layers[name]
        raise UnknownLayerError({name}, self.layer_names)

    def trainability_mask(self):
        return {
            name: all(p.requires_grad for p in self.layer(name).parameters())
            for name in self.layer_names
        }

    def check_input(self, images):
        if images.ndim != 4 or images.shape[1] != self.backbone_spec.in_channels:
            raise ValueError(
                f"Expected a B x {self.backbone_spec.in_channels} x H x W batch, "
                f"got {tuple(images.shape)}"
            )
        if tuple(images.shape[-2:]) != self.input_size:
            raise ValueError(
                f"Backbone expects {self.input_size[0]}x{self.input_size[1]} inputs, "
                f"got {images.shape[-2]}x{images.shape[-1]}"
            )

    def logits(self, images):
        self.check_input(images)
        return self.head(self.backbone(images))

    def forward(self, images):
        return torch.sigmoid(self.logits(images))


def _native_backbone_state(state, spec):
    """Accept torchvision vgg16 keys (features.N.*) or this toolkit's backbone keys."""
    if "state_dict" in state and isinstance(state["state_dict"], dict):
        state = state["state_dict"]
    native = {k[len("backbone."):]: v for k, v in state.items() if k.startswith("backbone.")}
    if native:
        return native
    if any(k.startswith("layers.") for k in state):
        return dict(state)

    convs = {}
    for key, tensor in state.items():
        match = _TORCHVISION_KEY.match(key)
        if match:
            convs.setdefault(int(match.group(1)), {})[match.group(2)] = tensor
    names = spec.layer_names
    if len(convs) != len(names):
        raise BackboneLoadError(
            f"Weight file holds {len(convs)} convolution layers, backbone has {len(names)}"
        )
    mapped = {}
    for name, index in zip(names, sorted(convs)):
        try:
            mapped[f"layers.{name}.conv.weight"] = convs[index]["weight"]
            mapped[f"layers.{name}.conv.bias"] = convs[index]["bias"]
        except KeyError as e:
            raise BackboneLoadError(f"features.{index} is missing its {e.args[0]}")
    return mapped


def load_backbone_weights(backbone, path):
    path = Path(path)
    if not path.is_file():
        raise BackboneLoadError(f"Backbone weights not found: {path}")
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise BackboneLoadError(f"Cannot read backbone weights '{path}': {e}")
    if not isinstance(state, dict):
        raise BackboneLoadError(f"'{path}' does not contain a state dict")
    try:
        backbone.load_state_dict(_native_backbone_state(state, backbone.spec), strict=True)
    except RuntimeError as e:
        raise BackboneLoadError(f"Backbone weights in '{path}' do not match: {e}")
    logger.info("Loaded backbone weights from %s", path)


def build_network(backbone_spec, head_spec, seed, input_size=(224, 224)):
    """Load the pretrained backbone verbatim and draw Glorot-uniform head weights under seed."""
    net = MultiTaskNetwork(backbone_spec, head_spec, input_size=input_size)
    if backbone_spec.weights_path is not None:
        load_backbone_weights(net.backbone, backbone_spec.weights_path)
    else:
        logger.warning("No backbone weight file configured; backbone keeps its random initialization")
    net.head.reset_parameters(seed)
    logger.info(
        "Built network: %s backbone, %s head parameters, %d outputs",
        format_number(count_parameters(net, "backbone")),
        format_number(count_parameters(net, "hidden_layers") + count_parameters(net, "output_layer")),
        head_spec.output_units,
    )
    return net


def forward(net, batch, mode="eval"):
    images = batch.images if hasattr(batch, "images") else batch
    if mode == "train":
        net.train()
        return net(images)
    if mode != "eval":
        raise ValueError(f"Unknown mode '{mode}'")
    net.eval()
    with torch.no_grad():
        return net(images)


def _numel(module):
    return sum(p.numel() for p in module.parameters())


def count_parameters(net, part="total"):
    if part == "backbone":
        return _numel(net.backbone)
    if part == "hidden_layers":
        return sum(_numel(net.layer(name)) for name in HIDDEN_LAYERS)
    if part == "output_layer":
        return _numel(net.head.output)
    if part == "total":
        return sum(count_parameters(net, p) for p in PARTS[:-1])
    raise ValueError(f"Unknown part '{part}'. Expected one of: {', '.join(PARTS)}")


def _expand_layer_names(net, names):
    expanded, unknown = [], set()
    groups = {f"block{b}": net.backbone_spec.block_layers(f"block{b}") for b in range(1, 6)}
    groups["head"] = HEAD_LAYERS
    for name in names:
        if name in groups:
            expanded.extend(groups[name])
        elif name in net.layer_names:
            expanded.append(name)
        else:
            unknown.add(name)
    if unknown:
        raise UnknownLayerError(unknown, [*groups, *net.layer_names])
    return expanded


def set_trainable(net, layer_names, flag):
    """Set requires_grad for exactly the named layers (or block1..block5 / head groups)."""
    for name in _expand_layer_names(net, layer_names):
        for param in net.layer(name).parameters():
            param.requires_grad_(flag)
    return net.trainability_mask()


def trainable_parameters(net):
    return [p for p in net.parameters() if p.requires_grad]


@dataclass
class Checkpoint:
    network: MultiTaskNetwork
    benchmark: str
    target_names: tuple
    stage: str
    metadata: dict = field(default_factory=dict)


def save_checkpoint(net, path, benchmark, target_names, stage, **metadata):
    """Write a self-describing checkpoint: layer tensors, schema id, outputs and mask."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "state_dict": {k: v.detach().clone() for k, v in net.state_dict().items()},
            "benchmark": getattr(benchmark, "value", str(benchmark)),
            "target_names": list(target_names[: net.output_units]),
            "output_units": net.output_units,
            "trainable": net.trainability_mask(),
            "convs_per_block": list(net.backbone_spec.convs_per_block),
            "widths": list(net.backbone_spec.widths),
            "hidden_units": list(net.head_spec.hidden_units),
            "dropout_rate": float(net.head_spec.dropout_rate),
            "input_size": list(net.input_size),
            "stage": stage,
            "metadata": metadata,
        },
        path,
    )
    logger.info("Saved %s checkpoint to %s", stage, path)
    return path


def load_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointMismatchError(f"'{path}' is not a multi-task checkpoint")
    net = MultiTaskNetwork(
        BackboneSpec(
            convs_per_block=tuple(payload["convs_per_block"]),
            widths=tuple(payload["widths"]),
        ),
        HeadSpec(
            hidden_units=tuple(payload["hidden_units"]),
            dropout_rate=payload["dropout_rate"],
            output_units=payload["output_units"],
        ),
        input_size=tuple(payload["input_size"]),
    )
    net.load_state_dict(payload["state_dict"], strict=True)
    for name, flag in payload["trainable"].items():
        set_trainable(net, [name], flag)
    net.eval()
    return Checkpoint(
        network=net,
        benchmark=payload["benchmark"],
        target_names=tuple(payload["target_names"]),
        stage=payload["stage"],
        metadata=payload.get("metadata", {}),
    )
