"""Raster loading/saving, colorspace conversion and padding.

Pixels are carried as float64 planes in [0, 255]; quantization to 8 bits
happens only when a file is written.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import FormatError

__all__ = [
    "Colorspace",
    "Image",
    "load_image",
    "save_image",
    "convert_colorspace",
    "pad_planes",
]


class Colorspace(Enum):
    RGB = "rgb"
    YCBCR601 = "ycbcr601"
    GRAY = "gray"


# BT.601 full-range forward matrix (rows: Y, Cb, Cr) and chroma offset.
_RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735891647856, -0.331264108352144, 0.5],
        [0.5, -0.418687589158345, -0.081312410841655],
    ]
)
_YCBCR_OFFSET = np.array([0.0, 128.0, 128.0])
_YCBCR_TO_RGB = np.linalg.inv(_RGB_TO_YCBCR)


@dataclass(frozen=True)
class Image:
    """Planar raster: ``planes`` has shape (P, H, W) with P in {1, 3}."""

    planes: np.ndarray
    colorspace: Colorspace

    def __post_init__(self):
        planes = np.asarray(self.planes, dtype=np.float64)
        if planes.ndim != 3 or planes.shape[0] not in (1, 3):
            raise FormatError(f"expected (P,H,W) planes with P in {{1,3}}, got {planes.shape}")
        if planes.shape[1] == 0 or planes.shape[2] == 0:
            raise FormatError("zero image dimension")
        if not np.isfinite(planes).all():
            raise FormatError("non-finite sample values")
        if self.colorspace is Colorspace.GRAY and planes.shape[0] != 1:
            raise FormatError("gray image must have exactly one plane")
        if self.colorspace is not Colorspace.GRAY and planes.shape[0] != 3:
            raise FormatError(f"{self.colorspace.value} image must have three planes")
        object.__setattr__(self, "planes", planes)

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def plane_count(self) -> int:
        return self.planes.shape[0]

    def luma(self) -> np.ndarray:
        """Luma plane: BT.601 Y for RGB, first plane otherwise."""
        if self.colorspace is Colorspace.RGB:
            r, g, b = self.planes
            return 0.299 * r + 0.587 * g + 0.114 * b
        return self.planes[0]


def _read_pnm_token(buf: io.BufferedReader) -> bytes:
    token = b""
    while True:
        ch = buf.read(1)
        if ch == b"":
            raise FormatError("truncated PNM header")
        if ch in b" \t\r\n":
            if token:
                return token
            continue
        if ch == b"#":
            while buf.read(1) not in (b"\n", b""):
                pass
            continue
        token += ch


def _load_pnm(path: Path) -> Image:
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic not in (b"P5", b"P6"):
            raise FormatError(f"unsupported PNM magic {magic!r}")
        width = int(_read_pnm_token(fh))
        height = int(_read_pnm_token(fh))
        maxval = int(_read_pnm_token(fh))
        if width <= 0 or height <= 0:
            raise FormatError("zero image dimension")
        if maxval != 255:
            raise FormatError(f"only maxval 255 PNM supported, got {maxval}")
        nplanes = 1 if magic == b"P5" else 3
        raw = fh.read(width * height * nplanes)
        if len(raw) != width * height * nplanes:
            raise FormatError("truncated PNM pixel data")
    data = np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
    if nplanes == 1:
        return Image(data.reshape(1, height, width), Colorspace.GRAY)
    interleaved = data.reshape(height, width, 3)
    return Image(np.ascontiguousarray(interleaved.transpose(2, 0, 1)), Colorspace.RGB)


def _load_png(path: Path) -> Image:
    try:
        pil = PILImage.open(path)
    except Exception as exc:
        raise FormatError(f"unreadable image file: {exc}") from exc
    if pil.mode in ("I", "I;16", "I;16B", "I;16L"):
        raise FormatError("16-bit depth images are not supported")
    if pil.mode in ("L", "1"):
        arr = np.asarray(pil.convert("L"), dtype=np.float64)
        return Image(arr[None, :, :], Colorspace.GRAY)
    arr = np.asarray(pil.convert("RGB"), dtype=np.float64)
    return Image(np.ascontiguousarray(arr.transpose(2, 0, 1)), Colorspace.RGB)


def load_image(path) -> Image:
    """Load a PNG or binary PPM (P6) / PGM (P5) file as an Image in RGB or Gray."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head[:2] in (b"P5", b"P6"):
        return _load_pnm(path)
    if head == b"\x89PNG\r\n\x1a\n":
        return _load_png(path)
    raise FormatError(f"unsupported image format: {path}")


def _to_uint8(planes: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(planes), 0, 255).astype(np.uint8)


def save_image(img: Image, path) -> None:
    """Write PNG, PPM (P6) or PGM (P5) chosen by file extension.

    YCbCr images are converted back to RGB first; samples are clamped and
    rounded to 8 bits.
    """
    if img.colorspace is Colorspace.YCBCR601:
        img = convert_colorspace(img, Colorspace.RGB)
    path = Path(path)
    suffix = path.suffix.lower()
    data = _to_uint8(img.planes)
    if suffix == ".png":
        if img.plane_count == 1:
            PILImage.fromarray(data[0], mode="L").save(path)
        else:
            PILImage.fromarray(data.transpose(1, 2, 0), mode="RGB").save(path)
        return
    if suffix == ".pgm":
        if img.plane_count != 1:
            raise FormatError("PGM output requires a gray image")
        header = f"P5\n{img.width} {img.height}\n255\n".encode()
        path.write_bytes(header + data[0].tobytes())
        return
    if suffix == ".ppm":
        if img.plane_count != 3:
            raise FormatError("PPM output requires a three-plane image")
        header = f"P6\n{img.width} {img.height}\n255\n".encode()
        path.write_bytes(header + data.transpose(1, 2, 0).tobytes())
        return
    raise FormatError(f"unsupported output extension: {suffix!r}")


def convert_colorspace(img: Image, target: Colorspace) -> Image:
    """Convert between RGB and full-range BT.601 YCbCr. Gray passes through;
    a three-plane image converted to Gray keeps only its luma."""
    if img.colorspace is Colorspace.GRAY or img.colorspace is target:
        return img
    if target is Colorspace.GRAY:
        return Image(img.luma()[None, :, :], Colorspace.GRAY)
    flat = img.planes.reshape(3, -1)
    if img.colorspace is Colorspace.RGB and target is Colorspace.YCBCR601:
        out = _RGB_TO_YCBCR @ flat + _YCBCR_OFFSET[:, None]
    else:
        out = _YCBCR_TO_RGB @ (flat - _YCBCR_OFFSET[:, None])
    return Image(out.reshape(img.planes.shape), target)


def pad_planes(planes: np.ndarray, multiple: int) -> np.ndarray:
    """Edge-replicate (P, H, W) planes so H and W are multiples of ``multiple``."""
    _, h, w = planes.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return planes
    return np.pad(planes, ((0, 0), (0, ph), (0, pw)), mode="edge")
