"""Luminance PSNR/SSIM with border cropping, plus the geometric self-ensemble.

Both metrics run on the BT.601 Y plane with a border of `crop` pixels removed
from each side first (the benchmark convention is crop == upscaling factor).
A perfect match has zero MSE; its PSNR is reported as the +inf sentinel and
excluded from dataset means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (DegradationSpec, Image, crop_to_multiple, decode_png, degrade,
                   dihedral_inverse, dihedral_transform, gaussian_kernel, y_channel)


class EmptyDatasetError(ValueError):
    """No HR images found under the dataset root."""


def _cropped_y(sr: Image, hr: Image, crop: int) -> tuple[np.ndarray, np.ndarray]:
    if (sr.height, sr.width) != (hr.height, hr.width):
        raise ValueError(
            f"extent mismatch: {sr.width}x{sr.height} vs {hr.width}x{hr.height}")
    if crop < 0:
        raise ValueError("crop must be >= 0")
    ys, yh = y_channel(sr), y_channel(hr)
    if crop > 0:
        if 2 * crop >= min(ys.shape):
            raise ValueError(f"crop {crop} removes the whole image")
        ys = ys[crop:-crop, crop:-crop]
        yh = yh[crop:-crop, crop:-crop]
    return ys, yh


def psnr_y(sr: Image, hr: Image, crop: int = 0) -> float:
    """10*log10(1/MSE) on the luminance plane; +inf when the images match."""
    ys, yh = _cropped_y(sr, hr, crop)
    mse = float(np.mean((ys - yh) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _window_means(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # separable valid-mode correlation
    k = len(kernel)
    h, w = plane.shape
    rows = np.zeros((h, w - k + 1), dtype=np.float64)
    for i, wk in enumerate(kernel):
        rows += wk * plane[:, i:i + w - k + 1]
    out = np.zeros((h - k + 1, w - k + 1), dtype=np.float64)
    for i, wk in enumerate(kernel):
        out += wk * rows[i:i + h - k + 1]
    return out


def ssim_y(sr: Image, hr: Image, crop: int = 0) -> float:
    """Single-scale SSIM on Y: 11x11 Gaussian window, K1=0.01, K2=0.03, L=1."""
    ys, yh = _cropped_y(sr, hr, crop)
    if min(ys.shape) < _SSIM_WINDOW:
        raise ValueError("image smaller than the SSIM window after cropping")
    kernel = gaussian_kernel(_SSIM_WINDOW, _SSIM_SIGMA)
    mu1 = _window_means(ys, kernel)
    mu2 = _window_means(yh, kernel)
    var1 = _window_means(ys * ys, kernel) - mu1 * mu1
    var2 = _window_means(yh * yh, kernel) - mu2 * mu2
    cov = _window_means(ys * yh, kernel) - mu1 * mu2
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    ssim_map = (((2 * mu1 * mu2 + c1) * (2 * cov + c2))
                / ((mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)))
    return float(ssim_map.mean())


def self_ensemble(forward, lr: Image) -> Image:
    """Average the forward pass over the 8 dihedral transforms of the input.

    Accumulation runs in float64 so a constant-output model survives exactly.
    """
    acc = None
    for k in range(8):
        transformed = Image(dihedral_transform(lr.planes, k), lr.colorspace)
        out = forward(transformed)
        restored = dihedral_inverse(out.planes.astype(np.float64), k)
        acc = restored if acc is None else acc + restored
    return Image((acc / 8.0).astype(np.float32), lr.colorspace)


@dataclass
class ImageScore:
    name: str
    psnr: float
    ssim: float


@dataclass
class EvalReport:
    scores: list[ImageScore]
    scale: int
    kind: str
    crop: int
    mean_psnr: float
    mean_ssim: float
    perfect_count: int  # images whose PSNR hit the +inf sentinel


def evaluate_dataset(forward, root, spec: DegradationSpec,
                     crop: int | None = None) -> EvalReport:
    """Run `forward` over <root>/HR/*.png in filename order and score it.

    LR inputs come from <root>/LR_<kind>_x<scale>/ when a matching file
    exists there, and are synthesized on the fly otherwise. `crop` defaults
    to the upscaling factor.
    """
    root = Path(root)
    crop = spec.scale if crop is None else crop
    hr_files = sorted((root / "HR").glob("*.png"))
    if not hr_files:
        raise EmptyDatasetError(f"no PNG files in {root / 'HR'}")
    lr_dir = root / f"LR_{spec.kind}_x{spec.scale}"

    scores = []
    for path in hr_files:
        hr = crop_to_multiple(decode_png(path.read_bytes()), spec.scale)
        cached = lr_dir / path.name
        if cached.is_file():
            lr = decode_png(cached.read_bytes())
        else:
            lr = degrade(hr, spec)
        sr = forward(lr)
        scores.append(ImageScore(path.name,
                                 psnr_y(sr, hr, crop),
                                 ssim_y(sr, hr, crop)))

    finite = [s.psnr for s in scores if math.isfinite(s.psnr)]
    mean_psnr = float(np.mean(finite)) if finite else math.inf
    return EvalReport(
        scores=scores,
        scale=spec.scale,
        kind=spec.kind,
        crop=crop,
        mean_psnr=mean_psnr,
        mean_ssim=float(np.mean([s.ssim for s in scores])),
        perfect_count=sum(1 for s in scores if not math.isfinite(s.psnr)),
    )


def report_text(report: EvalReport) -> str:
    lines = [f"scale x{report.scale}  degradation {report.kind}  crop {report.crop}"]
    for s in report.scores:
        lines.append(f"{s.name}  psnr {s.psnr:.4f} dB  ssim {s.ssim:.6f}")
    lines.append(f"mean  psnr {report.mean_psnr:.4f} dB  ssim {report.mean_ssim:.6f}")
    if report.perfect_count:
        lines.append(f"warning: {report.perfect_count} perfect match(es) "
                     f"excluded from the PSNR mean")
    return "\n".join(lines)


def report_csv(report: EvalReport) -> str:
    lines = ["filename,psnr,ssim"]
    for s in report.scores:
        lines.append(f"{s.name},{s.psnr:.6f},{s.ssim:.6f}")
    return "\n".join(lines) + "\n"
