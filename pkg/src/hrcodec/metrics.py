"""Quality metrics, per-region breakdown and latent statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .image_io import Image
from .transform import LatentTensor

__all__ = [
    "psnr",
    "msssim",
    "per_region_psnr",
    "latent_histograms",
    "HistogramPair",
    "QualityReport",
]

_MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_MSSSIM_WINDOW = 11
_MSSSIM_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03
_PEAK = 255.0


def _check_pair(a: Image, b: Image):
    if a.planes.shape != b.planes.shape:
        raise ValueError(f"image shapes differ: {a.planes.shape} vs {b.planes.shape}")


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB over all planes jointly (inf if equal)."""
    _check_pair(a, b)
    mse = np.mean((a.planes - b.planes) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(_PEAK * _PEAK / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter2(plane: np.ndarray, window: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(plane, window, axis=0, mode="reflect")
    out = ndimage.correlate1d(out, window, axis=1, mode="reflect")
    crop = len(window) // 2
    return out[crop:-crop, crop:-crop]


def _ssim_means(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Mean luminance term and mean contrast-structure term at one scale."""
    window = _gaussian_window(_MSSSIM_WINDOW, _MSSSIM_SIGMA)
    c1 = (_K1 * _PEAK) ** 2
    c2 = (_K2 * _PEAK) ** 2
    mu_x = _filter2(x, window)
    mu_y = _filter2(y, window)
    sxx = _filter2(x * x, window) - mu_x * mu_x
    syy = _filter2(y * y, window) - mu_y * mu_y
    sxy = _filter2(x * y, window) - mu_x * mu_y
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs = (2.0 * sxy + c2) / (sxx + syy + c2)
    return float(lum.mean()), float(cs.mean())


def _halve(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    h2, w2 = h // 2, w // 2
    return plane[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def msssim(a: Image, b: Image) -> float:
    """Multi-scale structural similarity on luma.

    Standard constants: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
    per-scale weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333). Images whose
    min dimension is below 176 use fewer scales with weights renormalized.
    Negative luminance/contrast terms are clamped at zero before weighting.
    """
    _check_pair(a, b)
    x, y = a.luma(), b.luma()
    min_dim = min(x.shape)
    if min_dim < _MSSSIM_WINDOW:
        raise ValueError(f"images too small for MS-SSIM (min dim {min_dim} < {_MSSSIM_WINDOW})")
    n_scales = min(len(_MSSSIM_WEIGHTS), int(math.log2(min_dim / _MSSSIM_WINDOW)) + 1)
    weights = np.asarray(_MSSSIM_WEIGHTS[:n_scales])
    weights = weights / weights.sum()
    result = 1.0
    for scale in range(n_scales):
        lum, cs = _ssim_means(x, y)
        if scale < n_scales - 1:
            result *= max(cs, 0.0) ** weights[scale]
            x, y = _halve(x), _halve(y)
        else:
            result *= (max(lum, 0.0) * max(cs, 0.0)) ** weights[scale]
    return float(result)


def per_region_psnr(a: Image, b: Image, label_map: np.ndarray, region_count: int):
    """PSNR restricted to each region label; returns (label, psnr, pixel_count)."""
    _check_pair(a, b)
    if label_map.shape != (a.height, a.width):
        raise ValueError("label map does not match image dims")
    rows = []
    for label in range(region_count):
        mask = label_map == label
        count = int(mask.sum())
        if count == 0:
            rows.append((label, math.inf, 0))
            continue
        mse = np.mean((a.planes[:, mask] - b.planes[:, mask]) ** 2)
        value = math.inf if mse == 0.0 else 10.0 * math.log10(_PEAK * _PEAK / mse)
        rows.append((label, value, count))
    return rows


@dataclass(frozen=True)
class HistogramPair:
    """|value| histogram (bin width 0.5 up to 20, one overflow bin) plus a
    100-bin fraction histogram.

    Fractions use the floor convention value - floor(value) in [0, 1),
    also for negatives (so -2.25 contributes 0.75).
    """

    abs_counts: np.ndarray
    frac_counts: np.ndarray

    ABS_BIN_WIDTH = 0.5
    ABS_RANGE = 20.0
    FRAC_BINS = 100

    @property
    def total(self) -> int:
        return int(self.abs_counts.sum())

    def abs_edges(self) -> np.ndarray:
        return np.arange(0.0, self.ABS_RANGE + self.ABS_BIN_WIDTH, self.ABS_BIN_WIDTH)

    def frac_edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.FRAC_BINS + 1)

    def merge(self, other: "HistogramPair") -> "HistogramPair":
        return HistogramPair(
            self.abs_counts + other.abs_counts, self.frac_counts + other.frac_counts
        )

    def to_json_dict(self) -> dict:
        return {
            "abs": {
                "bin_width": self.ABS_BIN_WIDTH,
                "range": self.ABS_RANGE,
                "counts": self.abs_counts.tolist(),
                "overflow_last_bin": True,
            },
            "frac": {
                "bins": self.FRAC_BINS,
                "counts": self.frac_counts.tolist(),
                "convention": "value - floor(value), negatives included",
            },
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["histogram", "bin_low", "bin_high", "count"])
            edges = self.abs_edges()
            for i, count in enumerate(self.abs_counts[:-1]):
                writer.writerow(["abs", edges[i], edges[i + 1], int(count)])
            writer.writerow(["abs", self.ABS_RANGE, "inf", int(self.abs_counts[-1])])
            fedges = self.frac_edges()
            for i, count in enumerate(self.frac_counts):
                writer.writerow(["frac", fedges[i], fedges[i + 1], int(count)])


def latent_histograms(data) -> HistogramPair:
    """Histogram the magnitudes and fractions of a latent or symbol tensor."""
    values = data.data if isinstance(data, LatentTensor) else np.asarray(data, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty tensor")
    flat = values.ravel().astype(np.float64)
    n_abs = int(HistogramPair.ABS_RANGE / HistogramPair.ABS_BIN_WIDTH)
    abs_idx = np.minimum(
        np.floor(np.abs(flat) / HistogramPair.ABS_BIN_WIDTH).astype(np.int64), n_abs
    )
    abs_counts = np.bincount(abs_idx, minlength=n_abs + 1)
    frac = flat - np.floor(flat)
    frac_idx = np.clip(
        np.floor(frac * HistogramPair.FRAC_BINS).astype(np.int64), 0, HistogramPair.FRAC_BINS - 1
    )
    frac_counts = np.bincount(frac_idx, minlength=HistogramPair.FRAC_BINS)
    return HistogramPair(abs_counts, frac_counts)


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    msssim: float
    bpp: float
    per_region: list = field(default_factory=list)
    histograms: HistogramPair | None = None

    def to_json_dict(self) -> dict:
        doc = {
            "psnr": self.psnr,
            "msssim": self.msssim,
            "bpp": self.bpp,
            "per_region": [
                {"label": lab, "psnr": val, "pixel_count": cnt}
                for lab, val, cnt in self.per_region
            ],
        }
        if self.histograms is not None:
            doc["histograms"] = self.histograms.to_json_dict()
        return doc
