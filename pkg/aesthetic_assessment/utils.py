import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .exceptions import ImageDecodeError

# Channel statistics of the ImageNet-pretrained VGG16 published recipe.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def preprocessed_range(mean=IMAGENET_MEAN, std=IMAGENET_STD):
    """Per-channel (min, max) reachable after preprocessing."""
    mean = np.asarray(mean, dtype=np.float32)
    std = np.asarray(std, dtype=np.float32)
    return (0.0 - mean) / std, (1.0 - mean) / std


def decode_image(image_file, target_size=(224, 224)):
    """Load an RGB image, resize it (unless target_size is None) and scale pixels to [0, 1]."""
    try:
        with Image.open(image_file) as img:
            img = img.convert("RGB")
            if target_size is not None and img.size != tuple(target_size):
                img = img.resize(tuple(target_size), Image.Resampling.BILINEAR)
            return np.asarray(img, dtype=np.float32) / 255.0
    except (OSError, UnidentifiedImageError, ValueError) as e:
        raise ImageDecodeError(image_file, str(e))


def augment_flip(image, coin):
    """Reverse the column order of an H x W x C image when coin is 1."""
    if image.ndim != 3 or image.shape[-1] != 3:
        raise ValueError(f"Expected an H x W x 3 image, got shape {image.shape}")
    if int(coin):
        return image[:, ::-1, :].copy()
    return image


def to_tensor(image, mean=IMAGENET_MEAN, std=IMAGENET_STD):
    """Normalize an H x W x 3 array in [0, 1] into a 3 x H x W tensor."""
    image = (image - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1), dtype=np.float32))


def encode_image(image_file, target_size=(224, 224)):
    """Load and preprocess an image exactly as the training pipeline does."""
    return to_tensor(decode_image(image_file, target_size))


def save_png(array, path):
    """Write an H x W x 3 uint8 array as a PNG."""
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path, format="PNG")
