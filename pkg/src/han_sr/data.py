"""Image I/O, color conversion, degradation synthesis, and patch sampling.

Images are planar float32 rasters in [0, 1]. Color conversion follows the
studio-range BT.601 convention (Y in [16, 235] on the 255 scale), which is
what super-resolution benchmarks evaluate against. Bicubic resampling uses
the a = -0.5 cubic convolution kernel with align-centers mapping and
edge-clamped taps.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError


class DecodeError(ValueError):
    """Malformed or truncated image stream."""


class UnsupportedFormatError(ValueError):
    """Stream decodes, but not to an 8-bit RGB PNG."""


class SamplingError(ValueError):
    """Image too small for the requested patch geometry."""


RGB = "rgb"
YCBCR = "ycbcr"


@dataclass
class Image:
    """Planar [3, H, W] raster with samples in [0, 1]."""

    planes: np.ndarray
    colorspace: str = RGB

    def __post_init__(self):
        if self.planes.ndim != 3 or self.planes.shape[0] != 3:
            raise ValueError(f"expected [3, H, W] planes, got {self.planes.shape}")
        self.planes = self.planes.astype(np.float32, copy=False)

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]


def decode_png(data: bytes) -> Image:
    try:
        pil = PILImage.open(io.BytesIO(data))
        fmt = pil.format
        mode = pil.mode
        if fmt == "PNG" and mode == "RGB":
            pil.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode PNG stream: {exc}") from exc
    if fmt != "PNG":
        raise UnsupportedFormatError(f"expected PNG data, got {fmt}")
    if mode != "RGB":
        raise UnsupportedFormatError(f"expected 8-bit RGB, got mode {mode}")
    arr = np.asarray(pil, dtype=np.uint8)
    return Image(arr.transpose(2, 0, 1).astype(np.float32) / 255.0, RGB)


def encode_png(image: Image) -> bytes:
    if image.colorspace != RGB:
        raise ValueError("encode_png expects an RGB image")
    u8 = np.clip(np.rint(image.planes * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(u8.transpose(1, 2, 0), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


# BT.601 studio-range rows, applied to [0, 1] inputs on the 255 scale.
_YCBCR_MATRIX = np.array([
    [65.481, 128.553, 24.966],
    [-37.797, -74.203, 112.0],
    [112.0, -93.786, -18.214],
], dtype=np.float64)
_YCBCR_OFFSET = np.array([16.0, 128.0, 128.0], dtype=np.float64)


def rgb_to_ycbcr(image: Image) -> Image:
    if image.colorspace != RGB:
        raise ValueError(f"rgb_to_ycbcr expects RGB input, got {image.colorspace}")
    rgb = image.planes.astype(np.float64)
    out = (np.tensordot(_YCBCR_MATRIX, rgb, axes=1)
           + _YCBCR_OFFSET[:, None, None]) / 255.0
    return Image(out.astype(np.float32), YCBCR)


def y_channel(image: Image) -> np.ndarray:
    """Luminance plane in [16/255, 235/255], as float64."""
    if image.colorspace == YCBCR:
        return image.planes[0].astype(np.float64)
    rgb = image.planes.astype(np.float64)
    return (np.tensordot(_YCBCR_MATRIX[0], rgb, axes=1) + 16.0) / 255.0


def _cubic_kernel(d: np.ndarray, a: float = -0.5) -> np.ndarray:
    d = np.abs(d)
    near = ((a + 2.0) * d - (a + 3.0)) * d * d + 1.0
    far = a * (((d - 5.0) * d + 8.0) * d - 4.0)
    return np.where(d <= 1.0, near, np.where(d < 2.0, far, 0.0))


def _resample_taps(dst: int, src: int):
    """Per-output tap indices (edge-clamped) and normalized cubic weights."""
    scale = src / dst
    x = (np.arange(dst, dtype=np.float64) + 0.5) * scale - 0.5
    base = np.floor(x).astype(np.int64)
    offsets = np.arange(-1, 3)
    weights = _cubic_kernel(x[:, None] - (base[:, None] + offsets[None, :]))
    weights /= weights.sum(axis=1, keepdims=True)
    idx = np.clip(base[:, None] + offsets[None, :], 0, src - 1)
    return idx, weights


def _resample_last_axis(arr: np.ndarray, dst: int) -> np.ndarray:
    idx, weights = _resample_taps(dst, arr.shape[-1])
    out = np.zeros(arr.shape[:-1] + (dst,), dtype=np.float64)
    for k in range(4):
        out += weights[:, k] * arr[..., idx[:, k]]
    return out


def bicubic_resize(image: Image, target_w: int, target_h: int) -> Image:
    if target_w < 1 or target_h < 1:
        raise ValueError("target extents must be >= 1")
    data = image.planes.astype(np.float64)
    data = _resample_last_axis(data, target_w)
    data = _resample_last_axis(data.swapaxes(1, 2), target_h).swapaxes(1, 2)
    return Image(np.clip(data, 0.0, 1.0).astype(np.float32), image.colorspace)


def gaussian_kernel(ksize: int, sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian; underflows to a delta as sigma -> 0."""
    if ksize < 1 or ksize % 2 == 0:
        raise ValueError("kernel size must be odd and >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    t = np.arange(ksize, dtype=np.float64) - (ksize - 1) / 2.0
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _blur_last_axis(arr: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    pad = len(kernel) // 2
    padded = np.pad(arr, [(0, 0)] * (arr.ndim - 1) + [(pad, pad)], mode="edge")
    out = np.zeros_like(arr, dtype=np.float64)
    width = arr.shape[-1]
    for i, w in enumerate(kernel):
        out += w * padded[..., i:i + width]
    return out


def gaussian_blur(image: Image, ksize: int, sigma: float) -> Image:
    kernel = gaussian_kernel(ksize, sigma)
    data = image.planes.astype(np.float64)
    data = _blur_last_axis(data, kernel)
    data = _blur_last_axis(data.swapaxes(1, 2), kernel).swapaxes(1, 2)
    return Image(np.clip(data, 0.0, 1.0).astype(np.float32), image.colorspace)


BI = "bi"
BD = "bd"


@dataclass
class DegradationSpec:
    kind: str = BI
    scale: int = 2
    blur_ksize: int = 7
    blur_sigma: float = 1.6

    def __post_init__(self):
        if self.kind not in (BI, BD):
            raise ValueError(f"degradation kind must be '{BI}' or '{BD}'")
        if self.kind == BD and (self.blur_ksize < 3 or self.blur_sigma <= 0):
            raise ValueError("blur-downscale needs kernel size >= 3 and sigma > 0")


def crop_to_multiple(image: Image, s: int) -> Image:
    h = (image.height // s) * s
    w = (image.width // s) * s
    if h < s or w < s:
        raise ValueError(f"image {image.width}x{image.height} too small for scale {s}")
    return Image(image.planes[:, :h, :w].copy(), image.colorspace)


def degrade(hr: Image, spec: DegradationSpec) -> Image:
    hr = crop_to_multiple(hr, spec.scale)
    if spec.kind == BD:
        hr = gaussian_blur(hr, spec.blur_ksize, spec.blur_sigma)
    return bicubic_resize(hr, hr.width // spec.scale, hr.height // spec.scale)


@dataclass
class PatchPair:
    """Aligned LR/HR crop: hr covers exactly scale-times the lr footprint."""

    lr: np.ndarray
    hr: np.ndarray
    image_id: str
    top_left: tuple[int, int]  # (x, y) in LR coordinates

    def __post_init__(self):
        if (self.hr.shape[1] % self.lr.shape[1] != 0
                or self.hr.shape[2] % self.lr.shape[2] != 0):
            raise ValueError("hr extents must be a multiple of lr extents")


def sample_patches(hr: Image, spec: DegradationSpec, count: int, seed: int,
                   patch: int = 64, image_id: str = "") -> list[PatchPair]:
    """Uniform aligned crops; the same seed reproduces the same sequence."""
    s = spec.scale
    hr_c = crop_to_multiple(hr, s)
    lr = degrade(hr_c, spec)
    if lr.width < patch or lr.height < patch:
        raise SamplingError(
            f"LR {lr.width}x{lr.height} smaller than patch size {patch}")
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        x = int(rng.integers(0, lr.width - patch + 1))
        y = int(rng.integers(0, lr.height - patch + 1))
        pairs.append(PatchPair(
            lr=lr.planes[:, y:y + patch, x:x + patch].copy(),
            hr=hr_c.planes[:, s * y:s * (y + patch), s * x:s * (x + patch)].copy(),
            image_id=image_id,
            top_left=(x, y),
        ))
    return pairs


def dihedral_transform(arr: np.ndarray, k: int) -> np.ndarray:
    """Element k of the 8-element dihedral group on the trailing two axes."""
    if not 0 <= k < 8:
        raise ValueError("dihedral index must be in [0, 8)")
    if k >= 4:
        arr = arr[..., ::-1]
    return np.ascontiguousarray(np.rot90(arr, k % 4, axes=(-2, -1)))


def dihedral_inverse(arr: np.ndarray, k: int) -> np.ndarray:
    if not 0 <= k < 8:
        raise ValueError("dihedral index must be in [0, 8)")
    arr = np.rot90(arr, -(k % 4), axes=(-2, -1))
    if k >= 4:
        arr = arr[..., ::-1]
    return np.ascontiguousarray(arr)


def augment(pair: PatchPair, seed: int) -> PatchPair:
    """Apply one uniformly drawn dihedral transform to both patches."""
    k = int(np.random.default_rng(seed).integers(0, 8))
    return PatchPair(
        lr=dihedral_transform(pair.lr, k),
        hr=dihedral_transform(pair.hr, k),
        image_id=pair.image_id,
        top_left=pair.top_left,
    )
