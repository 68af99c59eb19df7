"""Blockwise orthonormal DCT-II analysis/synthesis.

Each B x B tile of a plane is transformed independently; coefficient (u, v)
of every tile is gathered into one channel, so a plane becomes a
(B*B, H/B, W/B) tensor. Channels are ordered by zigzag frequency: channel 0
is DC and later channels carry increasingly high frequencies, which is what
makes prefix decoding coarse-to-fine.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["LatentTensor", "analyze", "synthesize", "dct_matrix", "zigzag_order"]

SUPPORTED_BLOCK_SIZES = (8, 16)


@lru_cache(maxsize=None)
def dct_matrix(block_size: int) -> np.ndarray:
    """Orthonormal DCT-II basis matrix (rows are basis vectors)."""
    n = np.arange(block_size)
    mat = np.sqrt(2.0 / block_size) * np.cos(
        np.pi * (2.0 * n[None, :] + 1.0) * n[:, None] / (2.0 * block_size)
    )
    mat[0, :] = np.sqrt(1.0 / block_size)
    mat.flags.writeable = False
    return mat


@lru_cache(maxsize=None)
def zigzag_order(block_size: int) -> tuple[int, ...]:
    """Flat (u*B + v) indices in zigzag scan order, DC first."""
    order = []
    for s in range(2 * block_size - 1):
        diag = [(u, s - u) for u in range(max(0, s - block_size + 1), min(s, block_size - 1) + 1)]
        if s % 2 == 0:
            diag.reverse()  # even diagonals run bottom-left to top-right
        order.extend(u * block_size + v for u, v in diag)
    return tuple(order)


@lru_cache(maxsize=None)
def _inverse_zigzag(block_size: int) -> np.ndarray:
    order = zigzag_order(block_size)
    inv = np.empty(len(order), dtype=np.intp)
    inv[np.asarray(order, dtype=np.intp)] = np.arange(len(order))
    return inv


@dataclass(frozen=True)
class LatentTensor:
    """Coefficient tensor of one plane: ``data`` has shape (C, H/B, W/B)."""

    data: np.ndarray
    block_size: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"latent data must be 3-D, got shape {data.shape}")
        if data.shape[0] != self.block_size * self.block_size:
            raise ValueError(
                f"latent tensor has {data.shape[0]} channels, "
                f"expected {self.block_size * self.block_size}"
            )
        if not np.isfinite(data).all():
            raise ValueError("non-finite latent coefficients")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def lat_h(self) -> int:
        return self.data.shape[1]

    @property
    def lat_w(self) -> int:
        return self.data.shape[2]


def analyze(plane: np.ndarray, block_size: int = 16) -> LatentTensor:
    """Forward transform of a 2-D plane whose dims are multiples of block_size."""
    if block_size not in SUPPORTED_BLOCK_SIZES:
        raise ValueError(f"block_size must be one of {SUPPORTED_BLOCK_SIZES}")
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError("plane must be 2-D")
    h, w = plane.shape
    if h % block_size or w % block_size:
        raise ValueError(f"plane dims {h}x{w} not multiples of {block_size}")
    nby, nbx = h // block_size, w // block_size
    mat = dct_matrix(block_size)
    blocks = plane.reshape(nby, block_size, nbx, block_size).transpose(0, 2, 1, 3)
    coeffs = mat @ blocks @ mat.T
    flat = coeffs.reshape(nby, nbx, block_size * block_size)
    channels = flat[:, :, np.asarray(zigzag_order(block_size), dtype=np.intp)]
    return LatentTensor(np.ascontiguousarray(channels.transpose(2, 0, 1)), block_size)


def synthesize(lat: LatentTensor, block_size: int | None = None) -> np.ndarray:
    """Inverse of :func:`analyze`; returns the reconstructed plane."""
    block_size = lat.block_size if block_size is None else block_size
    if block_size != lat.block_size:
        raise ValueError("block_size disagrees with the latent tensor")
    nby, nbx = lat.lat_h, lat.lat_w
    flat = lat.data.transpose(1, 2, 0)[:, :, _inverse_zigzag(block_size)]
    coeffs = flat.reshape(nby, nbx, block_size, block_size)
    mat = dct_matrix(block_size)
    blocks = mat.T @ coeffs @ mat
    return np.ascontiguousarray(
        blocks.transpose(0, 2, 1, 3).reshape(nby * block_size, nbx * block_size)
    )
