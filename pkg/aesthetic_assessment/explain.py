"""Grad-CAM activation maps for any output unit at any backbone convolution."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from matplotlib import colormaps
from PIL import Image

from .exceptions import UnknownLayerError
from .utils import decode_image, save_png

logger = logging.getLogger(__name__)

DEFAULT_LAYER = "block5_conv3"
DEFAULT_OPACITY = 0.4
DEFAULT_COLORMAP = "jet"


@dataclass(frozen=True)
class ActivationMap:
    layer: str
    output_index: int
    values: np.ndarray
    raw_max: float
    source: str = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def is_zero(self):
        return self.raw_max <= 0.0


def combine_channels(activations, gradients):
    """
    Weight each channel by its spatially averaged gradient and rectify the sum.

    Returns the map scaled to a maximum of 1 together with the raw maximum; a
    map with no positive value comes back identically zero.
    """
    activations = np.asarray(activations, dtype=np.float64)
    gradients = np.asarray(gradients, dtype=np.float64)
    if activations.ndim != 3 or activations.shape != gradients.shape:
        raise ValueError(
            f"Expected matching C x h x w arrays, got {activations.shape} and {gradients.shape}"
        )
    weights = gradients.mean(axis=(1, 2))
    cam = np.maximum(np.tensordot(weights, activations, axes=1), 0.0)
    raw_max = float(cam.max())
    if raw_max > 0.0:
        cam = cam / raw_max
    else:
        cam = np.zeros_like(cam)
    return cam, raw_max


def grad_cam(net, image, output_index=0, layer=DEFAULT_LAYER, source=None):
    """
    Grad-CAM of one output unit at a named convolution of the backbone.

    Gradients are taken with respect to the pre-sigmoid logit. The layer does
    not need to be trainable: its activation is re-rooted as a gradient leaf
    during the forward pass.
    """
    conv_layers = net.backbone_spec.layer_names
    if layer not in conv_layers:
        raise UnknownLayerError({layer}, conv_layers)
    if not 0 <= output_index < net.output_units:
        raise ValueError(f"Output index must lie in [0, {net.output_units - 1}], got {output_index}")
    images = image.images if hasattr(image, "images") else image
    if images.ndim != 4 or images.shape[0] != 1:
        raise ValueError(f"Grad-CAM takes a batch of one image, got shape {tuple(images.shape)}")

    captured = {}

    def keep_activation(module, inputs, output):
        output = output.detach().requires_grad_(True)
        captured["activation"] = output
        return output

    was_training = net.training
    net.eval()
    device = next(net.parameters()).device
    handle = net.layer(layer).register_forward_hook(keep_activation)
    try:
        with torch.enable_grad():
            logit = net.logits(images.to(device))[0, output_index]
            (gradient,) = torch.autograd.grad(logit, captured["activation"])
    finally:
        handle.remove()
        net.train(was_training)

    values, raw_max = combine_channels(
        captured["activation"][0].detach().cpu().numpy(),
        gradient[0].detach().cpu().numpy(),
    )
    if raw_max <= 0.0:
        logger.warning("Grad-CAM map for output %d at %s is identically zero", output_index, layer)
    return ActivationMap(
        layer=layer,
        output_index=output_index,
        values=values,
        raw_max=raw_max,
        source=str(source) if source is not None else None,
    )


def upsample_map(values, size):
    """Bilinear resize of an h x w map to size=(width, height), clipped to [0, 1]."""
    resized = Image.fromarray(np.asarray(values, dtype=np.float32)).resize(
        tuple(size), Image.Resampling.BILINEAR
    )
    return np.clip(np.asarray(resized, dtype=np.float64), 0.0, 1.0)


def overlay(activation_map, image_file, output_path, opacity=DEFAULT_OPACITY, colormap=DEFAULT_COLORMAP):
    """
    Blend the colormapped, upsampled map over the original image.

    Writes output_path (PNG) and a sidecar .txt naming the layer, output index
    and normalization maximum. Returns the PNG path.
    """
    if not 0.0 < opacity < 1.0:
        raise ValueError(f"Opacity must lie strictly between 0 and 1, got {opacity}")
    original = decode_image(image_file, target_size=None).astype(np.float64)
    height, width = original.shape[:2]
    heat = upsample_map(activation_map.values, (width, height))
    colored = colormaps[colormap](heat)[..., :3]
    blended = (1.0 - opacity) * original + opacity * colored
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    save_png(np.rint(np.clip(blended, 0.0, 1.0) * 255.0), output_path)
    output_path.with_suffix(".txt").write_text(
        f"layer={activation_map.layer}\n"
        f"output_index={activation_map.output_index}\n"
        f"normalization_max={activation_map.raw_max!r}\n"
        f"source={activation_map.source or image_file}\n",
        encoding="utf-8",
    )
    logger.info("Wrote Grad-CAM overlay %s", output_path)
    return output_path
