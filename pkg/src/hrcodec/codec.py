"""Encode/decode orchestration and the .hrc container format.

Container layout (all integers big-endian)::

    magic        4 bytes  "HRC1"
    version      u8       currently 1
    flags        u8       bit0 = object-coding mode, bit1 = YCbCr planes
    width        u32      true (pre-padding) dimensions; decoder crops
    height       u32
    block_size   u8
    plane_count  u8       1 or 3
    latent_gain  u16      gain * 256
    group_count  u8
    per group:   channel_count u16, epsilon u16 (epsilon * 10000)
    region_count u8
    per region:  step scale u16 (scale * 256)
    rle_length   u32      run-length-coded latent label map
    rle bytes:   pairs of (label u8, run u16) in raster order
    per (group, plane): segment length u32
    segment payloads in the same group-major order

Segments are ordered group-major so that the byte range needed to
reconstruct the first g channel groups is a prefix of the file; progressive
decoding therefore tolerates a file truncated at a group boundary. Full
decoding requires the declared lengths to account for the file exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .entropy import Segment, decode_segment, encode_segment
from .errors import CorruptBitstreamError
from .image_io import Colorspace, Image, convert_colorspace, pad_planes
from .quant import (
    EPSILON_FIXED_POINT,
    SCALE_FIXED_POINT,
    GroupProfile,
    dequantize_latents,
    quantize_latents,
)
from .roi import MaskPyramid, downsample_labels
from .transform import LatentTensor, analyze, synthesize

__all__ = [
    "BitstreamHeader",
    "encode",
    "encode_object_mode",
    "decode",
    "decode_progressive",
    "decode_object",
    "decode_to_latents",
    "parse_header",
    "stream_bpp",
]

MAGIC = b"HRC1"
VERSION = 1
FLAG_OBJECT = 0x01
FLAG_YCBCR = 0x02

DEFAULT_BLOCK_SIZE = 16
DEFAULT_GAIN = 0.125


@dataclass(frozen=True)
class BitstreamHeader:
    version: int
    flags: int
    width: int
    height: int
    block_size: int
    plane_count: int
    gain_fp: int
    groups: tuple[tuple[int, int], ...]  # (channel_count, epsilon_fp)
    region_scales_fp: tuple[int, ...]
    label_map: np.ndarray
    segment_lengths: tuple[int, ...]  # group-major: g0p0, g0p1, ..., g1p0, ...
    header_size: int

    @property
    def gain(self) -> float:
        return self.gain_fp / SCALE_FIXED_POINT

    @property
    def group_count(self) -> int:
        return len(self.groups)

    @property
    def region_count(self) -> int:
        return len(self.region_scales_fp)

    @property
    def object_mode(self) -> bool:
        return bool(self.flags & FLAG_OBJECT)

    @property
    def padded_size(self) -> tuple[int, int]:
        bs = self.block_size
        return (-(-self.height // bs) * bs, -(-self.width // bs) * bs)

    @property
    def latent_size(self) -> tuple[int, int]:
        ph, pw = self.padded_size
        return ph // self.block_size, pw // self.block_size

    def profile(self) -> GroupProfile:
        return GroupProfile(
            name="stream",
            groups=tuple((ch, eps / EPSILON_FIXED_POINT) for ch, eps in self.groups),
            region_scales=tuple(s / SCALE_FIXED_POINT for s in self.region_scales_fp),
        )

    def total_size(self) -> int:
        return self.header_size + sum(self.segment_lengths)

    def segment_bounds(self, group: int, plane: int) -> tuple[int, int]:
        index = group * self.plane_count + plane
        start = self.header_size + sum(self.segment_lengths[:index])
        return start, start + self.segment_lengths[index]


def _rle_encode(labels: np.ndarray) -> bytes:
    out = bytearray()
    flat = labels.ravel().tolist()
    i, n = 0, len(flat)
    while i < n:
        label = flat[i]
        run = 1
        while i + run < n and flat[i + run] == label and run < 0xFFFF:
            run += 1
        out += struct.pack(">BH", label, run)
        i += run
    return bytes(out)


def _rle_decode(blob: bytes, shape: tuple[int, int], region_count: int) -> np.ndarray:
    if len(blob) % 3:
        raise CorruptBitstreamError("label RLE length not a multiple of 3")
    total = shape[0] * shape[1]
    flat = np.empty(total, dtype=np.int64)
    pos = 0
    for off in range(0, len(blob), 3):
        label, run = struct.unpack_from(">BH", blob, off)
        if label >= region_count:
            raise CorruptBitstreamError(f"label {label} outside {region_count} regions")
        if pos + run > total:
            raise CorruptBitstreamError("label RLE overruns the latent grid")
        flat[pos : pos + run] = label
        pos += run
    if pos != total:
        raise CorruptBitstreamError("label RLE does not cover the latent grid")
    return flat.reshape(shape)


def _fixed_point(value: float, scale: int, what: str) -> int:
    fp = int(np.floor(value * scale + 0.5))
    if not (1 <= fp <= 0xFFFF):
        raise ValueError(f"{what} {value} not representable as u16 x{scale}")
    return fp


def _prepare_planes(img: Image, use_ycbcr: bool) -> tuple[np.ndarray, int]:
    if img.colorspace is Colorspace.GRAY:
        return img.planes, 0
    if img.colorspace is Colorspace.YCBCR601:
        return img.planes, FLAG_YCBCR
    if use_ycbcr:
        return convert_colorspace(img, Colorspace.YCBCR601).planes, FLAG_YCBCR
    return img.planes, 0


def _validate_binding(binding: Mapping[int, int], group_count: int, region_count: int):
    if set(binding.keys()) != set(range(group_count)):
        raise ValueError(
            f"binding must assign every group 0..{group_count - 1} exactly once"
        )
    for group, region in binding.items():
        if not (0 <= region < region_count):
            raise ValueError(f"binding maps group {group} to unknown region {region}")
    if group_count < region_count:
        raise ValueError("object mode needs at least as many groups as regions")


def encode(
    img: Image,
    profile: GroupProfile,
    pyramid: MaskPyramid | None = None,
    *,
    block_size: int = DEFAULT_BLOCK_SIZE,
    gain: float = DEFAULT_GAIN,
    use_ycbcr: bool = True,
    binding: Mapping[int, int] | None = None,
) -> bytes:
    """Encode an image to .hrc bytes.

    Without a pyramid the whole image is a single region using the
    profile's first step scale. With a depth-k pyramid, region labels
    0..k index the first k+1 scales of the profile.
    """
    if profile.total_channels != block_size * block_size:
        raise ValueError(
            f"profile covers {profile.total_channels} channels, "
            f"block size {block_size} needs {block_size * block_size}"
        )
    planes, color_flag = _prepare_planes(img, use_ycbcr)
    height, width = img.height, img.width
    padded = pad_planes(planes, block_size)

    if pyramid is None:
        pyramid = MaskPyramid.single_region((height, width))
    elif pyramid.label_map.shape != (height, width):
        raise ValueError("pyramid does not match image dimensions")
    region_count = pyramid.region_count
    if region_count > len(profile.region_scales):
        raise ValueError(
            f"profile has {len(profile.region_scales)} region scales, "
            f"pyramid needs {region_count}"
        )
    padded_labels = np.pad(
        pyramid.label_map,
        ((0, padded.shape[1] - height), (0, padded.shape[2] - width)),
        mode="edge",
    )
    latent_labels = downsample_labels(padded_labels, block_size)

    gain_fp = _fixed_point(gain, SCALE_FIXED_POINT, "gain")
    gain_eff = gain_fp / SCALE_FIXED_POINT

    flags = color_flag
    if binding is not None:
        _validate_binding(binding, profile.group_count, region_count)
        flags |= FLAG_OBJECT

    slices = profile.channel_slices()
    plane_symbols = []
    for plane in padded:
        lat = analyze(plane, block_size)
        if binding is not None:
            data = lat.data.copy()
            for group, region in binding.items():
                data[slices[group]] *= latent_labels == region
            lat = LatentTensor(data, block_size)
        plane_symbols.append(quantize_latents(lat, profile, latent_labels, gain_eff))

    segments: list[Segment] = []
    for group, sl in enumerate(slices):
        for plane_index, symbols in enumerate(plane_symbols):
            segments.append(encode_segment(symbols[sl], group, plane_index))

    header = bytearray()
    header += MAGIC
    header += struct.pack(">BBIIBBH", VERSION, flags, width, height, block_size, len(padded), gain_fp)
    header += struct.pack(">B", profile.group_count)
    for channels, epsilon in profile.groups:
        header += struct.pack(">HH", channels, _fixed_point(epsilon, EPSILON_FIXED_POINT, "epsilon"))
    header += struct.pack(">B", region_count)
    for scale in profile.region_scales[:region_count]:
        header += struct.pack(">H", _fixed_point(scale, SCALE_FIXED_POINT, "region scale"))
    rle = _rle_encode(latent_labels)
    header += struct.pack(">I", len(rle))
    header += rle
    for seg in segments:
        header += struct.pack(">I", len(seg.payload))
    return bytes(header) + b"".join(seg.payload for seg in segments)


def encode_object_mode(
    img: Image,
    profile: GroupProfile,
    pyramid: MaskPyramid,
    binding: Mapping[int, int],
    **kwargs,
) -> bytes:
    """Encode with each channel group masked to carry only its bound region."""
    return encode(img, profile, pyramid, binding=binding, **kwargs)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CorruptBitstreamError("header truncated")
        values = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return values

    def take_bytes(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise CorruptBitstreamError("header truncated")
        blob = self.data[self.pos : self.pos + size]
        self.pos += size
        return blob


def parse_header(data: bytes) -> BitstreamHeader:
    """Parse and validate the container header (not the payloads)."""
    reader = _Reader(data)
    if reader.take_bytes(4) != MAGIC:
        raise CorruptBitstreamError("bad magic; not an HRC1 stream")
    version, flags, width, height, block_size, plane_count, gain_fp = reader.take(">BBIIBBH")
    if version != VERSION:
        raise CorruptBitstreamError(f"unsupported version {version}")
    if width == 0 or height == 0:
        raise CorruptBitstreamError("zero image dimension")
    # bounds allocations on corrupt headers; far beyond any real still image
    if width > (1 << 26) or height > (1 << 26) or width * height > (1 << 28):
        raise CorruptBitstreamError(f"implausible dimensions {width}x{height}")
    if block_size not in (8, 16):
        raise CorruptBitstreamError(f"unsupported block size {block_size}")
    if plane_count not in (1, 3):
        raise CorruptBitstreamError(f"unsupported plane count {plane_count}")
    if gain_fp == 0:
        raise CorruptBitstreamError("zero latent gain")
    (group_count,) = reader.take(">B")
    if group_count == 0:
        raise CorruptBitstreamError("no channel groups")
    groups = tuple(reader.take(">HH") for _ in range(group_count))
    if sum(ch for ch, _ in groups) != block_size * block_size:
        raise CorruptBitstreamError("group channel counts do not cover the transform")
    (region_count,) = reader.take(">B")
    if region_count == 0:
        raise CorruptBitstreamError("no regions")
    scales = tuple(reader.take(">H")[0] for _ in range(region_count))
    (rle_length,) = reader.take(">I")
    rle = reader.take_bytes(rle_length)
    lengths = tuple(
        reader.take(">I")[0] for _ in range(group_count * plane_count)
    )
    header_size = reader.pos
    lat_shape = (
        -(-height // block_size),
        -(-width // block_size),
    )
    label_map = _rle_decode(rle, lat_shape, region_count)
    header = BitstreamHeader(
        version=version,
        flags=flags,
        width=width,
        height=height,
        block_size=block_size,
        plane_count=plane_count,
        gain_fp=gain_fp,
        groups=groups,
        region_scales_fp=scales,
        label_map=label_map,
        segment_lengths=lengths,
        header_size=header_size,
    )
    try:
        header.profile()
    except ValueError as exc:
        raise CorruptBitstreamError(f"invalid quantization parameters: {exc}") from exc
    return header


def decode_to_latents(
    data: bytes,
    selected_groups: Iterable[int] | None = None,
    *,
    allow_prefix: bool = False,
) -> tuple[BitstreamHeader, list[LatentTensor]]:
    """Decode segments into per-plane latent tensors.

    ``selected_groups`` picks zero-based groups to decode (others stay
    zero). With ``allow_prefix`` the file may stop early as long as every
    selected segment is present.
    """
    header = parse_header(data)
    selected = (
        set(range(header.group_count)) if selected_groups is None else set(selected_groups)
    )
    if not selected:
        raise ValueError("no groups selected")
    if any(g < 0 or g >= header.group_count for g in selected):
        raise ValueError(f"group selection outside 0..{header.group_count - 1}")
    if allow_prefix:
        needed = max(header.segment_bounds(g, header.plane_count - 1)[1] for g in selected)
        if len(data) < needed:
            raise CorruptBitstreamError("stream shorter than the selected segments")
    elif len(data) != header.total_size():
        raise CorruptBitstreamError(
            f"file size {len(data)} does not match declared {header.total_size()}"
        )

    profile = header.profile()
    slices = profile.channel_slices()
    lat_h, lat_w = header.latent_size
    channels = header.block_size * header.block_size
    symbols = [
        np.zeros((channels, lat_h, lat_w), dtype=np.int64) for _ in range(header.plane_count)
    ]
    for group in sorted(selected):
        sl = slices[group]
        group_channels = sl.stop - sl.start
        for plane in range(header.plane_count):
            start, stop = header.segment_bounds(group, plane)
            seg = Segment(group, plane, data[start:stop], group_channels * lat_h * lat_w)
            symbols[plane][sl] = decode_segment(seg, (group_channels, lat_h, lat_w))
    latents = [
        dequantize_latents(sym, profile, header.label_map, header.gain, header.block_size)
        for sym in symbols
    ]
    return header, latents


def _latents_to_image(header: BitstreamHeader, latents: list[LatentTensor]) -> Image:
    planes = np.stack([synthesize(lat) for lat in latents])
    planes = planes[:, : header.height, : header.width]
    if header.plane_count == 1:
        img = Image(np.clip(planes, 0.0, 255.0), Colorspace.GRAY)
        return img
    if header.flags & FLAG_YCBCR:
        img = convert_colorspace(Image(planes, Colorspace.YCBCR601), Colorspace.RGB)
    else:
        img = Image(planes, Colorspace.RGB)
    return Image(np.clip(img.planes, 0.0, 255.0), img.colorspace)


def decode(data: bytes) -> Image:
    """Full reconstruction of an .hrc stream."""
    header, latents = decode_to_latents(data)
    return _latents_to_image(header, latents)


def decode_progressive(data: bytes, upto_group: int) -> Image:
    """Reconstruct from the first ``upto_group`` channel groups only.

    Later groups are treated as zero. ``upto_group`` counts groups, so
    group_count reproduces the full decode. The stream may be truncated at
    a group boundary as long as the needed prefix is intact.
    """
    header = parse_header(data)
    if not (1 <= upto_group <= header.group_count):
        raise ValueError(f"upto_group must be in 1..{header.group_count}")
    header, latents = decode_to_latents(
        data, selected_groups=range(upto_group), allow_prefix=True
    )
    return _latents_to_image(header, latents)


def decode_object(data: bytes, groups: Iterable[int]) -> Image:
    """Reconstruct from a subset of zero-based channel groups.

    Intended for object-mode streams, where each group carries one region;
    selecting groups from a plain stream is allowed but the caller should
    surface ``parse_header(data).object_mode`` to the user.
    """
    header, latents = decode_to_latents(data, selected_groups=groups)
    return _latents_to_image(header, latents)


def stream_bpp(data: bytes) -> dict:
    """Exact rate accounting: file, header and per-group/per-segment shares."""
    header = parse_header(data)
    pixels = header.width * header.height
    per_group_bytes = [0] * header.group_count
    per_segment = []
    for group in range(header.group_count):
        for plane in range(header.plane_count):
            start, stop = header.segment_bounds(group, plane)
            per_group_bytes[group] += stop - start
            per_segment.append(
                {"group": group, "plane": plane, "bytes": stop - start, "bpp": (stop - start) * 8.0 / pixels}
            )
    return {
        "pixels": pixels,
        "file_bytes": header.total_size(),
        "header_bytes": header.header_size,
        "payload_bytes": sum(per_group_bytes),
        "bpp_total": header.total_size() * 8.0 / pixels,
        "bpp_header": header.header_size * 8.0 / pixels,
        "bpp_per_group": [b * 8.0 / pixels for b in per_group_bytes],
        "segments": per_segment,
    }
