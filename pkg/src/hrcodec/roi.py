"""Hierarchical region extraction.

A saliency operator is applied recursively: the most salient region is
claimed first, its pixels are replaced by the mean of the remaining ones,
and the operator runs again on the residual, up to three foreground levels
plus the leftover background. The operator is pluggable; the built-in one is
spectral-residual saliency (FFT log-amplitude minus its local average),
which needs no training. Precomputed masks from any external detector can
be ingested instead.

Labels are 0..k with 0 the most salient foreground and k the background.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import FormatError
from .image_io import Colorspace, Image, load_image

__all__ = [
    "MaskPyramid",
    "saliency_spectral_residual",
    "binarize",
    "build_pyramid",
    "load_external_masks",
    "downsample_labels",
    "overlay_regions",
    "save_label_map",
]

MAX_DEPTH = 3

DEFAULT_THRESHOLD = 0.5
DEFAULT_MIN_AREA_FRAC = 0.002
DEFAULT_MORPH_RADIUS = 2

_SALIENCY_TARGET = 64  # working width of the spectral-residual pass


@dataclass(frozen=True)
class MaskPyramid:
    """Disjoint foreground masks plus the residual background."""

    fg_masks: tuple[np.ndarray, ...]
    bg_mask: np.ndarray
    label_map: np.ndarray

    def __post_init__(self):
        if len(self.fg_masks) > MAX_DEPTH:
            raise ValueError(f"at most {MAX_DEPTH} foreground levels supported")
        shape = self.bg_mask.shape
        total = self.bg_mask.astype(np.int64).copy()
        for mask in self.fg_masks:
            if mask.shape != shape:
                raise ValueError("mask shapes disagree")
            total += mask
        if not (total == 1).all():
            raise ValueError("masks must partition the image exactly")
        expected = np.full(shape, len(self.fg_masks), dtype=np.int64)
        for i, mask in enumerate(self.fg_masks):
            expected[mask] = i
        if not np.array_equal(expected, self.label_map):
            raise ValueError("label map inconsistent with masks")

    @property
    def depth(self) -> int:
        return len(self.fg_masks)

    @property
    def region_count(self) -> int:
        return len(self.fg_masks) + 1

    @classmethod
    def from_masks(cls, fg_masks: Sequence[np.ndarray], shape: tuple[int, int]) -> "MaskPyramid":
        fg = tuple(np.asarray(m, dtype=bool) for m in fg_masks)
        label_map = np.full(shape, len(fg), dtype=np.int64)
        for i, mask in enumerate(fg):
            label_map[mask] = i
        claimed = np.zeros(shape, dtype=bool)
        for mask in fg:
            claimed |= mask
        return cls(fg_masks=fg, bg_mask=~claimed, label_map=label_map)

    @classmethod
    def single_region(cls, shape: tuple[int, int]) -> "MaskPyramid":
        return cls.from_masks((), shape)


def saliency_spectral_residual(img: Image) -> np.ndarray:
    """Spectral-residual saliency of the luma plane, normalized to [0, 1].

    A flat input has no residual structure and maps to all zeros.
    """
    luma = img.luma()
    if np.ptp(luma) == 0.0:
        return np.zeros(luma.shape, dtype=np.float64)
    h, w = luma.shape
    factor = max(1, int(np.ceil(max(h, w) / _SALIENCY_TARGET)))
    ph, pw = (-h) % factor, (-w) % factor
    work = np.pad(luma, ((0, ph), (0, pw)), mode="edge")
    hp, wp = work.shape
    if factor > 1:
        work = work.reshape(hp // factor, factor, wp // factor, factor).mean(axis=(1, 3))

    spectrum = np.fft.fft2(work)
    amplitude = np.abs(spectrum)
    # relative floor: keeps exact spectral zeros (e.g. hard edges on black)
    # from dominating the residual, and makes the map gain-invariant
    log_amp = np.log(amplitude + 1e-3 * amplitude.mean())
    residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="nearest")
    phase = np.angle(spectrum)
    sal = np.abs(np.fft.ifft2(np.exp(residual + 1j * phase))) ** 2
    sal = ndimage.gaussian_filter(sal, sigma=2.5, mode="nearest")

    if factor > 1:
        sal = ndimage.zoom(sal, factor, order=1)
    sal = sal[:h, :w]
    lo, hi = sal.min(), sal.max()
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return np.zeros(luma.shape, dtype=np.float64)
    return (sal - lo) / (hi - lo)


def _disk(radius: int) -> np.ndarray:
    yy, xx = np.ogrid[-radius : radius + 1, -radius : radius + 1]
    return (yy * yy + xx * xx) <= radius * radius


def binarize(
    sal: np.ndarray,
    threshold: float = DEFAULT_THRESHOLD,
    min_area_frac: float = DEFAULT_MIN_AREA_FRAC,
    morph_radius: int = DEFAULT_MORPH_RADIUS,
) -> np.ndarray:
    """Threshold a saliency map and clean the result up.

    Cleanup is close-then-open with a disk element (erosion treats the
    outside as foreground so full masks survive), then removal of connected
    components below min_area_frac of the image.
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must be in (0, 1)")
    if not (0.0 <= min_area_frac <= 0.5):
        raise ValueError("min_area_frac must be in [0, 0.5]")
    mask = np.asarray(sal, dtype=np.float64) >= threshold
    if morph_radius > 0:
        disk = _disk(morph_radius)
        mask = ndimage.binary_erosion(
            ndimage.binary_dilation(mask, disk, border_value=0), disk, border_value=1
        )
        mask = ndimage.binary_dilation(
            ndimage.binary_erosion(mask, disk, border_value=1), disk, border_value=0
        )
    if min_area_frac > 0 and mask.any():
        min_pixels = min_area_frac * mask.size
        labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
        if count:
            sizes = np.bincount(labels.ravel())
            keep = sizes >= min_pixels
            keep[0] = False
            mask = keep[labels]
    return mask


def build_pyramid(
    img: Image,
    depth: int = MAX_DEPTH,
    saliency_fn: Callable[[Image], np.ndarray] | None = None,
    *,
    threshold: float = DEFAULT_THRESHOLD,
    min_area_frac: float = DEFAULT_MIN_AREA_FRAC,
    morph_radius: int = DEFAULT_MORPH_RADIUS,
) -> MaskPyramid:
    """Recursively extract up to ``depth`` foreground levels.

    Level 1 runs the operator on the image itself. For deeper levels, pixels
    claimed so far are replaced per plane by the mean of the unclaimed ones
    so they cannot be re-selected; recursion stops early when a level comes
    back empty, shrinking the effective depth.
    """
    if not (1 <= depth <= MAX_DEPTH):
        raise ValueError(f"depth must be in [1, {MAX_DEPTH}]")
    operator = saliency_fn if saliency_fn is not None else saliency_spectral_residual
    shape = (img.height, img.width)
    work = img.planes.copy()
    claimed = np.zeros(shape, dtype=bool)
    fg_masks: list[np.ndarray] = []
    for _ in range(depth):
        sal = operator(Image(work, img.colorspace))
        mask = binarize(sal, threshold, min_area_frac, morph_radius) & ~claimed
        if not mask.any():
            break
        fg_masks.append(mask)
        claimed |= mask
        if claimed.all():
            break
        fill = work[:, ~claimed].mean(axis=1)
        work[:, claimed] = fill[:, None]
    return MaskPyramid.from_masks(fg_masks, shape)


def load_external_masks(paths: Sequence, dims: tuple[int, int]) -> MaskPyramid:
    """Build a pyramid from ordered grayscale mask files (nonzero = fg).

    Earlier files win where masks overlap; the background is the complement.
    """
    if len(paths) > MAX_DEPTH:
        raise FormatError(f"at most {MAX_DEPTH} mask files supported, got {len(paths)}")
    height, width = dims
    claimed = np.zeros(dims, dtype=bool)
    fg_masks = []
    for path in paths:
        mask_img = load_image(path)
        if (mask_img.height, mask_img.width) != (height, width):
            raise FormatError(
                f"mask {path} is {mask_img.width}x{mask_img.height}, "
                f"image is {width}x{height}"
            )
        mask = (mask_img.luma() > 0) & ~claimed
        fg_masks.append(mask)
        claimed |= mask
    return MaskPyramid.from_masks(fg_masks, dims)


def downsample_labels(pyr_or_labels, block_size: int) -> np.ndarray:
    """Majority-vote pixel labels down to the latent grid.

    Each block takes the label of the majority of its pixels; ties break
    toward the smaller (more salient) label.
    """
    if isinstance(pyr_or_labels, MaskPyramid):
        labels = pyr_or_labels.label_map
        n_labels = pyr_or_labels.region_count
    else:
        labels = np.asarray(pyr_or_labels)
        n_labels = int(labels.max()) + 1
    h, w = labels.shape
    if h % block_size or w % block_size:
        raise ValueError(f"label map dims {h}x{w} not multiples of {block_size}")
    blocks = labels.reshape(h // block_size, block_size, w // block_size, block_size)
    counts = np.stack(
        [(blocks == lab).sum(axis=(1, 3)) for lab in range(n_labels)], axis=0
    )
    # argmax returns the first maximum, i.e. the smallest label on a tie
    return np.argmax(counts, axis=0).astype(np.int64)


_LABEL_PALETTE = (
    (255, 255, 0),    # most salient
    (255, 128, 0),
    (0, 255, 255),
    (64, 64, 64),     # background when depth == 3
)


def save_label_map(pyr_or_labels, path) -> None:
    """Write a label map as an indexed (palette) PNG for inspection."""
    from PIL import Image as PILImage

    labels = (
        pyr_or_labels.label_map if isinstance(pyr_or_labels, MaskPyramid) else pyr_or_labels
    )
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 255:
        raise ValueError("labels must fit an 8-bit palette image")
    pil = PILImage.fromarray(labels.astype(np.uint8), mode="P")
    palette = []
    for i in range(256):
        palette.extend(_LABEL_PALETTE[i] if i < len(_LABEL_PALETTE) else (0, 0, 0))
    pil.putpalette(palette)
    pil.save(path)


_OVERLAY_TINTS = ((255.0, 255.0, 0.0), (255.0, 128.0, 0.0), (0.0, 255.0, 255.0))


def overlay_regions(img: Image, pyramid: MaskPyramid, alpha: float = 0.5) -> Image:
    """Tint foreground regions over an RGB rendering of the image."""
    base = img
    if base.colorspace is Colorspace.YCBCR601:
        from .image_io import convert_colorspace

        base = convert_colorspace(base, Colorspace.RGB)
    planes = (
        np.repeat(base.planes, 3, axis=0) if base.plane_count == 1 else base.planes.copy()
    )
    for i, mask in enumerate(pyramid.fg_masks):
        tint = _OVERLAY_TINTS[i % len(_OVERLAY_TINTS)]
        for p in range(3):
            planes[p][mask] = (1.0 - alpha) * planes[p][mask] + alpha * tint[p]
    return Image(planes, Colorspace.RGB)
