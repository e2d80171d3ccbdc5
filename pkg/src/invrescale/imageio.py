"""Planar float images and 8-bit PNG / PPM / PGM file I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")


@dataclass
class Image:
    """Channel-major float32 image, nominally in [0, 1]."""

    data: np.ndarray  # [C, H, W]
    colorspace: str = "srgb_rgb"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] not in (1, 3):
            raise ValueError(f"image data must be [1|3, H, W], got {self.data.shape}")
        if self.colorspace not in ("srgb_rgb", "luminance"):
            raise ValueError(f"unknown colorspace {self.colorspace!r}")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def to_uint8(self) -> np.ndarray:
        """HWC (or HW) uint8 after clamping and round-half-up quantization."""
        q = np.floor(np.clip(self.data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
        return q[0] if self.channels == 1 else np.transpose(q, (1, 2, 0))

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> "Image":
        arr = np.asarray(arr)
        if arr.ndim == 2:
            return cls(arr[None].astype(np.float32) / 255.0, "luminance")
        return cls(np.transpose(arr, (2, 0, 1)).astype(np.float32) / 255.0)


def read_image(path) -> Image:
    path = Path(path)
    with PILImage.open(path) as im:
        if im.mode in ("L", "1", "I;16", "I"):
            arr = np.asarray(im.convert("L"))
        else:
            arr = np.asarray(im.convert("RGB"))
    return Image.from_uint8(arr)


def write_image(path, img: Image) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    arr = img.to_uint8()
    if suffix not in IMAGE_SUFFIXES:
        raise ValueError(f"unsupported image format {suffix!r}")
    if suffix == ".ppm" and arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    pil = PILImage.fromarray(np.ascontiguousarray(arr))
    fmt = "PNG" if suffix == ".png" else "PPM"
    pil.save(path, format=fmt)


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
