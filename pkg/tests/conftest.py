"""Shared fixtures: a deterministic pseudo-natural test corpus.

Corpus images mix 1/f-style filtered noise, smooth gradients, film grain
and a few high-contrast structures (disk, rectangle, texture patch) so they
exercise saliency extraction, mid-magnitude coefficients and all channel
groups. Everything is seeded, so encoded bytes are reproducible run to run.
"""

from __future__ import annotations

import numpy as np
import pytest
from scipy import ndimage

from hrcodec.image_io import Colorspace, Image
from hrcodec.quant import get_profile
from hrcodec import codec

CORPUS_SIZE = 10
CORPUS_H, CORPUS_W = 240, 320


def natural_image(seed: int, h: int = CORPUS_H, w: int = CORPUS_W) -> Image:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    noise = [ndimage.gaussian_filter(rng.standard_normal((h, w)), s) for s in (0.8, 3, 12)]
    grain = rng.standard_normal((h, w))
    planes = []
    for p in range(3):
        img = 110 + 40 * np.sin(xx / (17 + 5 * p) + p) + 30 * np.cos(yy / (23 - 4 * p))
        img = img + 70 * noise[0] * (0.5 + 0.2 * p) + 90 * noise[1] + 110 * noise[2] + 3 * grain
        planes.append(img)
    arr = np.stack(planes)
    cx, cy = rng.integers(w // 4, 3 * w // 4), rng.integers(h // 4, 3 * h // 4)
    r = rng.integers(max(3, h // 12), max(4, h // 7))
    disk = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
    arr[:, disk] = arr[:, disk] * 0.3 + np.array([220.0, 180.0, 60.0])[:, None] * 0.7
    bh, bw = max(4, h // 6), max(5, w // 6)
    x0, y0 = rng.integers(0, w - bw), rng.integers(0, h - bh)
    arr[:, y0 : y0 + bh, x0 : x0 + bw] = (
        arr[:, y0 : y0 + bh, x0 : x0 + bw] * 0.4
        + np.array([40.0, 90.0, 200.0])[:, None, None] * 0.6
    )
    th, tw = max(4, h // 4), max(5, w // 4)
    tx, ty = rng.integers(0, w - tw), rng.integers(0, h - th)
    arr[:, ty : ty + th, tx : tx + tw] += 20 * rng.standard_normal((th, tw))
    return Image(np.clip(arr, 0, 255), Colorspace.RGB)


def salient_image(h: int = 128, w: int = 160) -> Image:
    """Smooth background with three isolated blobs of descending contrast,
    built to yield a depth-3 saliency pyramid."""
    yy, xx = np.mgrid[0:h, 0:w]
    base = 90.0 + 20.0 * np.sin(xx / 40.0) + 10.0 * np.cos(yy / 30.0)
    arr = np.stack([base, base * 0.95, base * 0.9])
    blob1 = (xx - w // 4) ** 2 + (yy - h // 3) ** 2 < 14**2
    blob2 = (abs(xx - 3 * w // 4) < 11) & (abs(yy - h // 4) < 11)
    blob3 = (xx - w // 2) ** 2 + (yy - 3 * h // 4) ** 2 < 9**2
    arr[:, blob1] = 250.0
    arr[:, blob2] = 15.0
    arr[:, blob3] = 200.0
    return Image(np.clip(arr, 0, 255), Colorspace.RGB)


@pytest.fixture(scope="session")
def corpus() -> list[Image]:
    return [natural_image(seed) for seed in range(CORPUS_SIZE)]


@pytest.fixture(scope="session")
def encoded_corpus(corpus):
    """bytes of every corpus image under every builtin profile, no ROI."""
    out = {}
    for name in ("layer_1", "layer_2", "layer_3", "layer_4"):
        profile = get_profile(name)
        for seed, img in enumerate(corpus):
            out[(seed, name)] = codec.encode(img, profile)
    return out


@pytest.fixture(scope="session")
def roi_img() -> Image:
    return salient_image()
