"""Grayscale image representation, file I/O, degradation synthesis and quality metrics.

Images are 2-D float64 numpy arrays with intensities in [0, 1], row-major
(height, width). Every operation in this module clamps its result back into
[0, 1] and treats its inputs as immutable. All convolutions and resamplers use
reflect padding (mirror without repeating the edge sample).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image, UnidentifiedImageError

PSNR_CAP_DB = 99.0

# BT.601 luma weights for multi-channel inputs.
_LUMA = np.array([0.299, 0.587, 0.114])


class ImageDecodeError(Exception):
    """Raised when a file exists but cannot be decoded as a supported raster."""


class ImageGeometryError(ValueError):
    """Raised when image shapes violate an operation's requirements."""


def as_image(arr) -> np.ndarray:
    """Validate and convert `arr` to the canonical image form.

    Returns a float64 (H, W) array clipped to [0, 1].
    """
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ImageGeometryError(f"expected 2-D image grid, got shape {img.shape}")
    return np.clip(img, 0.0, 1.0)


class DegradationKind(enum.Enum):
    BICUBIC_ONLY = "bicubic"
    GAUSSIAN_BLUR_THEN_BICUBIC = "blur"
    SALT_NOISE = "salt"
    PEPPER_NOISE = "pepper"
    GAUSSIAN_NOISE = "gaussian"


@dataclass(frozen=True)
class DegradationSpec:
    """Corruption recipe used to manufacture paired training data."""

    kind: DegradationKind = DegradationKind.GAUSSIAN_BLUR_THEN_BICUBIC
    scale: int = 2
    blur_sigma: float = 1.0
    blur_ksize: int = 3
    noise_level: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.scale < 2:
            raise ValueError(f"scale must be >= 2, got {self.scale}")
        if self.blur_ksize % 2 == 0:
            raise ValueError(f"blur_ksize must be odd, got {self.blur_ksize}")
        if self.noise_level < 0:
            raise ValueError(f"noise_level must be >= 0, got {self.noise_level}")


class ImagePair(NamedTuple):
    """A degraded input resampled back to target size, and its clean target."""

    lr_up: np.ndarray
    hr: np.ndarray


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def load_image(path) -> np.ndarray:
    """Load an 8- or 16-bit raster (PNG/PGM) as a [0, 1] grayscale image.

    Multi-channel inputs are reduced to luma with BT.601 weights; an alpha
    channel, if present, is ignored.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such image file: {p}")
    try:
        with Image.open(p) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode {p}: {exc}") from exc

    if arr.ndim == 3:
        rgb = arr[..., :3].astype(np.float64)
        denom = 65535.0 if rgb.max(initial=0.0) > 255 else 255.0
        gray = rgb @ _LUMA / denom
    elif mode in ("I;16", "I;16B", "I;16L"):
        gray = arr.astype(np.float64) / 65535.0
    elif mode == "I":
        # 32-bit integer container; PNG sources are 16-bit at most.
        gray = arr.astype(np.float64) / 65535.0
    elif mode == "F":
        gray = arr.astype(np.float64)
    else:
        gray = arr.astype(np.float64) / 255.0
    return as_image(gray)


def save_image(img, path) -> None:
    """Write an image as an 8-bit raster; format chosen from the suffix.

    Round-tripping through save/load changes each pixel by at most 1/255
    (8-bit quantization).
    """
    img = as_image(img)
    p = Path(path)
    data = np.rint(img * 255.0).astype(np.uint8)
    pil = Image.fromarray(data, mode="L")
    fmt = "PPM" if p.suffix.lower() in (".pgm", ".ppm", ".pnm") else None
    try:
        pil.save(p, format=fmt)
    except (PermissionError, FileNotFoundError, OSError):
        raise


# ---------------------------------------------------------------------------
# Convolution / resampling primitives
# ---------------------------------------------------------------------------

def conv2d_reflect(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate `img` with an odd-sized 2-D kernel under reflect padding.

    No clamping is applied; callers decide how the response is used.
    """
    kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel must be odd-sized, got {kernel.shape}")
    padded = np.pad(img, ((kh // 2, kh // 2), (kw // 2, kw // 2)), mode="reflect")
    windows = sliding_window_view(padded, (kh, kw))
    return np.einsum("hwkl,kl->hw", windows, kernel, optimize=True)


def gaussian_kernel(sigma: float, ksize: int) -> np.ndarray:
    """Normalized 2-D Gaussian kernel exp(-(dx^2+dy^2)/(2 sigma^2))."""
    if ksize % 2 == 0:
        raise ValueError(f"ksize must be odd, got {ksize}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    half = ksize // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    dist2 = coords[:, None] ** 2 + coords[None, :] ** 2
    k = np.exp(-dist2 / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img, sigma: float, ksize: int) -> np.ndarray:
    """Blur with a normalized Gaussian kernel; preserves constants exactly."""
    img = as_image(img)
    out = conv2d_reflect(img, gaussian_kernel(sigma, ksize))
    return np.clip(out, 0.0, 1.0)


def _cubic_weight(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic kernel with a = -0.5 (Catmull-Rom)."""
    x = np.abs(x)
    w = np.zeros_like(x)
    m1 = x <= 1.0
    m2 = (x > 1.0) & (x < 2.0)
    w[m1] = (a + 2.0) * x[m1] ** 3 - (a + 3.0) * x[m1] ** 2 + 1.0
    w[m2] = a * x[m2] ** 3 - 5.0 * a * x[m2] ** 2 + 8.0 * a * x[m2] - 4.0 * a
    return w


def _reflect_indices(idx: np.ndarray, n: int) -> np.ndarray:
    """Map arbitrary integer indices into [0, n) by mirror reflection."""
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    m = np.abs(idx) % period
    return np.where(m < n, m, period - m)


def _bicubic_axis(src: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    in_len = src.shape[axis]
    scale = in_len / out_len
    pos = (np.arange(out_len) + 0.5) * scale - 0.5
    base = np.floor(pos).astype(np.int64)
    taps = base[:, None] + np.arange(-1, 3)[None, :]
    weights = _cubic_weight(pos[:, None] - taps)
    taps = _reflect_indices(taps, in_len)

    moved = np.moveaxis(src, axis, 0)
    gathered = moved[taps]           # (out_len, 4, ...)
    out = np.einsum("ot...,ot->o...", gathered, weights, optimize=True)
    return np.moveaxis(out, 0, axis)


def bicubic_resize(img, out_h: int, out_w: int) -> np.ndarray:
    """Separable Catmull-Rom (a=-0.5) resampling with reflect boundary.

    Destination pixel centers map to source coordinates via
    (i + 0.5) * (in / out) - 0.5 on each axis.
    """
    img = as_image(img)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be >= 1, got {out_h}x{out_w}")
    out = _bicubic_axis(img, out_h, axis=0)
    out = _bicubic_axis(out, out_w, axis=1)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Degradation
# ---------------------------------------------------------------------------

def degrade(hr, spec: DegradationSpec) -> ImagePair:
    """Corrupt `hr` per `spec`, downscale, and bicubic-upsample back.

    The restoration environment operates at target resolution, so the
    degraded image is returned already resampled to the size of `hr`.
    Noise draws come from a generator seeded with `spec.seed`, making the
    output bit-reproducible.
    """
    hr = as_image(hr)
    h, w = hr.shape
    if h % spec.scale or w % spec.scale:
        raise ImageGeometryError(
            f"dimensions {h}x{w} not divisible by scale {spec.scale}"
        )
    rng = np.random.default_rng(spec.seed)
    corrupted = hr
    if spec.kind is DegradationKind.GAUSSIAN_BLUR_THEN_BICUBIC:
        corrupted = gaussian_blur(hr, spec.blur_sigma, spec.blur_ksize)
    elif spec.kind is DegradationKind.SALT_NOISE:
        mask = rng.random(hr.shape) < spec.noise_level
        corrupted = np.where(mask, 1.0, hr)
    elif spec.kind is DegradationKind.PEPPER_NOISE:
        mask = rng.random(hr.shape) < spec.noise_level
        corrupted = np.where(mask, 0.0, hr)
    elif spec.kind is DegradationKind.GAUSSIAN_NOISE:
        corrupted = np.clip(hr + rng.normal(0.0, spec.noise_level, hr.shape), 0.0, 1.0)

    lr = bicubic_resize(corrupted, h // spec.scale, w // spec.scale)
    lr_up = bicubic_resize(lr, h, w)
    return ImagePair(lr_up=lr_up, hr=hr)


# ---------------------------------------------------------------------------
# Full-reference quality metrics
# ---------------------------------------------------------------------------

def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ImageGeometryError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB on unit range, capped at 99.0 dB."""
    a = as_image(a)
    b = as_image(b)
    _check_same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2


def _ssim_window() -> np.ndarray:
    return gaussian_kernel(sigma=1.5, ksize=11)


def ssim(a, b) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (sigma=1.5).

    Statistics are Gaussian-weighted and computed only where the full window
    fits (no padding), which is why both sides must be at least 11 pixels.
    """
    a = as_image(a)
    b = as_image(b)
    _check_same_shape(a, b)
    if min(a.shape) < 11:
        raise ImageGeometryError(f"image {a.shape} smaller than 11x11 SSIM window")

    win = _ssim_window()

    def wfilt(x):
        v = sliding_window_view(x, (11, 11))
        return np.einsum("hwkl,kl->hw", v, win, optimize=True)

    mu_a = wfilt(a)
    mu_b = wfilt(b)
    var_a = wfilt(a * a) - mu_a ** 2
    var_b = wfilt(b * b) - mu_b ** 2
    cov = wfilt(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    return float(np.mean(num / den))


_GMSD_C = 0.0026
_PREWITT_X = np.array([[1.0, 0.0, -1.0]] * 3) / 3.0
_PREWITT_Y = _PREWITT_X.T


def _avg_pool_2x(img: np.ndarray) -> np.ndarray:
    """Mean over 2x2 blocks anchored at (0, 0); ragged edges use what remains."""
    h, w = img.shape
    # Repeating the last row/col makes every ragged block's mean equal the
    # mean of its in-bounds pixels.
    if h % 2:
        img = np.vstack([img, img[-1:]])
    if w % 2:
        img = np.hstack([img, img[:, -1:]])
    h2, w2 = img.shape
    return img.reshape(h2 // 2, 2, w2 // 2, 2).mean(axis=(1, 3))


def _gradient_magnitude(img: np.ndarray) -> np.ndarray:
    gx = conv2d_reflect(img, _PREWITT_X)
    gy = conv2d_reflect(img, _PREWITT_Y)
    return np.sqrt(gx * gx + gy * gy)


def gmsd(a, b) -> float:
    """Gradient magnitude similarity deviation; 0 for identical images.

    Both images are 2x average-pool downsampled, Prewitt gradient magnitudes
    are compared through a similarity map, and the population standard
    deviation of that map is returned.
    """
    a = as_image(a)
    b = as_image(b)
    _check_same_shape(a, b)
    ma = _gradient_magnitude(_avg_pool_2x(a))
    mb = _gradient_magnitude(_avg_pool_2x(b))
    gms = (2.0 * ma * mb + _GMSD_C) / (ma * ma + mb * mb + _GMSD_C)
    return float(np.std(gms))
