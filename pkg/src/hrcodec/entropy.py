"""Bit-exact adaptive binary range coder with a causal context model.

Wire-normative constants
------------------------
* 32-bit low/range coder with byte-wise renormalization (carry-propagating,
  one leading pad byte; the decoder preloads five bytes).
* Binary probabilities are 12-bit states (initial 2048 = 1/2) updated after
  every bit with shift 5, i.e. an adaptation rate of 1/32.
* Symbols are binarized as: significance flag, sign bit, then magnitude-1
  as four truncated-unary adaptive bins followed by order-0 Exp-Golomb
  (prefix bits adaptive, suffix bits bypass).
* The significance flag context is the zero/nonzero state of the left, top
  and previous-channel co-located neighbours (8 buckets); sign, unary and
  Exp-Golomb prefix bins have their own small bucket families.

Every segment is coded with fresh context state, so any subset of segments
can be decoded in isolation; that independence is what progressive and
object decoding rely on. A segment whose symbols are all zero is encoded as
an empty payload.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CorruptBitstreamError

__all__ = [
    "Segment",
    "encode_segment",
    "decode_segment",
    "segment_bpp",
    "model_cost_bits",
    "RangeEncoder",
    "RangeDecoder",
]

_PROB_ONE = 1 << 12
_PROB_INIT = _PROB_ONE >> 1
_ADAPT_SHIFT = 5
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF
_UNARY_BINS = 4
_MAX_EG_PREFIX = 48  # bounds decoded magnitudes; longer prefixes mean corruption

_N_ZERO_CTX = 8
_CTX_SIGN = _N_ZERO_CTX
_CTX_MAG = _CTX_SIGN + 1
_CTX_EG = _CTX_MAG + _UNARY_BINS
_N_CTX = _CTX_EG + 1


class RangeEncoder:
    """Binary range encoder; probabilities live in a caller-owned list."""

    def __init__(self):
        self._low = 0
        self._range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()

    def _shift_low(self):
        low = self._low
        if low < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            out = self._out
            out.append((self._cache + carry) & 0xFF)
            fill = (0xFF + carry) & 0xFF
            for _ in range(self._cache_size - 1):
                out.append(fill)
            self._cache_size = 0
            self._cache = (low >> 24) & 0xFF
        self._cache_size += 1
        self._low = (low << 8) & _MASK32

    def encode_bit(self, probs: list, ctx: int, bit: int):
        p = probs[ctx]
        bound = (self._range >> 12) * p
        if bit:
            self._low += bound
            self._range -= bound
            probs[ctx] = p - (p >> _ADAPT_SHIFT)
        else:
            self._range = bound
            probs[ctx] = p + ((_PROB_ONE - p) >> _ADAPT_SHIFT)
        while self._range < _TOP:
            self._range <<= 8
            self._shift_low()

    def encode_bypass(self, bit: int):
        self._range >>= 1
        if bit:
            self._low += self._range
        while self._range < _TOP:
            self._range <<= 8
            self._shift_low()

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self._out)


class RangeDecoder:
    """Mirror of :class:`RangeEncoder`; raises on reads past the payload."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self._range = _MASK32
        code = 0
        for _ in range(5):
            code = (code << 8) | self._read_byte()
        self._code = code & _MASK32

    def _read_byte(self) -> int:
        pos = self._pos
        if pos >= len(self._data):
            raise CorruptBitstreamError("segment payload truncated")
        self._pos = pos + 1
        return self._data[pos]

    def decode_bit(self, probs: list, ctx: int) -> int:
        p = probs[ctx]
        bound = (self._range >> 12) * p
        if self._code < bound:
            bit = 0
            self._range = bound
            probs[ctx] = p + ((_PROB_ONE - p) >> _ADAPT_SHIFT)
        else:
            bit = 1
            self._code -= bound
            self._range -= bound
            probs[ctx] = p - (p >> _ADAPT_SHIFT)
        while self._range < _TOP:
            self._range = (self._range << 8) & _MASK32
            self._code = ((self._code << 8) | self._read_byte()) & _MASK32
        return bit

    def decode_bypass(self) -> int:
        self._range >>= 1
        if self._code >= self._range:
            bit = 1
            self._code -= self._range
        else:
            bit = 0
        while self._range < _TOP:
            self._range = (self._range << 8) & _MASK32
            self._code = ((self._code << 8) | self._read_byte()) & _MASK32
        return bit


@dataclass(frozen=True)
class Segment:
    """One independently decodable entropy-coded slice."""

    group_index: int
    plane_index: int
    payload: bytes
    symbol_count: int


def _zero_contexts(symbols: np.ndarray) -> np.ndarray:
    """Significance-flag context id per position, from causal neighbours."""
    nz = (symbols != 0).astype(np.int64)
    ctx = np.zeros(symbols.shape, dtype=np.int64)
    ctx[:, :, 1:] += nz[:, :, :-1]          # left
    ctx[:, 1:, :] += 2 * nz[:, :-1, :]      # top
    ctx[1:, :, :] += 4 * nz[:-1, :, :]      # previous channel
    return ctx


def _check_symbols(symbols) -> np.ndarray:
    arr = np.asarray(symbols)
    if arr.ndim != 3:
        raise ValueError(f"expected a (channels, h, w) symbol tensor, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError("symbols must be integers")
    return arr.astype(np.int64, copy=False)


def encode_segment(symbols, group_index: int = 0, plane_index: int = 0) -> Segment:
    """Entropy-code a (channels, h, w) integer tensor into one segment."""
    arr = _check_symbols(symbols)
    count = arr.size
    if count == 0 or not arr.any():
        return Segment(group_index, plane_index, b"", count)

    enc = RangeEncoder()
    encode_bit = enc.encode_bit
    encode_bypass = enc.encode_bypass
    probs = [_PROB_INIT] * _N_CTX
    sym_list = arr.ravel().tolist()
    ctx_list = _zero_contexts(arr).ravel().tolist()

    for s, zctx in zip(sym_list, ctx_list):
        if s == 0:
            encode_bit(probs, zctx, 0)
            continue
        encode_bit(probs, zctx, 1)
        if s < 0:
            encode_bit(probs, _CTX_SIGN, 1)
            mag = -s - 1
        else:
            encode_bit(probs, _CTX_SIGN, 0)
            mag = s - 1
        for t in range(_UNARY_BINS):
            if mag > t:
                encode_bit(probs, _CTX_MAG + t, 1)
            else:
                encode_bit(probs, _CTX_MAG + t, 0)
                break
        else:
            rem = mag - _UNARY_BINS + 1  # Exp-Golomb codes rem >= 1
            nbits = rem.bit_length()
            for _ in range(nbits - 1):
                encode_bit(probs, _CTX_EG, 1)
            encode_bit(probs, _CTX_EG, 0)
            for shift in range(nbits - 2, -1, -1):
                encode_bypass((rem >> shift) & 1)

    return Segment(group_index, plane_index, enc.finish(), count)


def decode_segment(seg: Segment, shape: tuple[int, int, int]) -> np.ndarray:
    """Decode one segment back to a (channels, h, w) integer tensor."""
    channels, h, w = shape
    count = channels * h * w
    if seg.symbol_count != count:
        raise CorruptBitstreamError(
            f"segment declares {seg.symbol_count} symbols, shape implies {count}"
        )
    if count == 0 or len(seg.payload) == 0:
        return np.zeros(shape, dtype=np.int64)

    dec = RangeDecoder(seg.payload)
    decode_bit = dec.decode_bit
    decode_bypass = dec.decode_bypass
    probs = [_PROB_INIT] * _N_CTX
    flat = [0] * count
    plane_stride = h * w
    k = 0
    for ch in range(channels):
        for i in range(h):
            for j in range(w):
                zctx = 0
                if j and flat[k - 1]:
                    zctx = 1
                if i and flat[k - w]:
                    zctx += 2
                if ch and flat[k - plane_stride]:
                    zctx += 4
                if decode_bit(probs, zctx):
                    negative = decode_bit(probs, _CTX_SIGN)
                    mag = 0
                    for t in range(_UNARY_BINS):
                        if not decode_bit(probs, _CTX_MAG + t):
                            break
                        mag = t + 1
                    if mag == _UNARY_BINS:
                        nbits = 1
                        while decode_bit(probs, _CTX_EG):
                            nbits += 1
                            if nbits > _MAX_EG_PREFIX:
                                raise CorruptBitstreamError("magnitude prefix overflow")
                        rem = 1
                        for _ in range(nbits - 1):
                            rem = (rem << 1) | decode_bypass()
                        mag = rem + _UNARY_BINS - 1
                    flat[k] = -(mag + 1) if negative else mag + 1
                k += 1
    return np.asarray(flat, dtype=np.int64).reshape(shape)


def segment_bpp(seg: Segment, image_pixels: int) -> float:
    """Rate contribution of one segment in bits per image pixel."""
    if image_pixels <= 0:
        raise ValueError("image_pixels must be positive")
    return len(seg.payload) * 8.0 / image_pixels


def model_cost_bits(symbols) -> float:
    """Cross-entropy of the adaptive context model on a symbol tensor.

    Replays the exact binarization, contexts and probability updates of
    :func:`encode_segment` and sums -log2 of each coded bit's modelled
    probability. The range coder's output should land within a few bytes of
    this total, so it serves as the rate oracle in tests.
    """
    arr = _check_symbols(symbols)
    if arr.size == 0 or not arr.any():
        return 0.0
    probs = [_PROB_INIT] * _N_CTX
    cost = 0.0
    log2 = math.log2

    def coded(ctx: int, bit: int):
        nonlocal cost
        p = probs[ctx]
        if bit:
            cost -= log2((_PROB_ONE - p) / _PROB_ONE)
            probs[ctx] = p - (p >> _ADAPT_SHIFT)
        else:
            cost -= log2(p / _PROB_ONE)
            probs[ctx] = p + ((_PROB_ONE - p) >> _ADAPT_SHIFT)

    for s, zctx in zip(arr.ravel().tolist(), _zero_contexts(arr).ravel().tolist()):
        if s == 0:
            coded(zctx, 0)
            continue
        coded(zctx, 1)
        coded(_CTX_SIGN, 1 if s < 0 else 0)
        mag = abs(s) - 1
        for t in range(_UNARY_BINS):
            if mag > t:
                coded(_CTX_MAG + t, 1)
            else:
                coded(_CTX_MAG + t, 0)
                break
        else:
            rem = mag - _UNARY_BINS + 1
            nbits = rem.bit_length()
            for _ in range(nbits - 1):
                coded(_CTX_EG, 1)
            coded(_CTX_EG, 0)
            cost += nbits - 1  # bypass suffix bits cost exactly one bit each
    return cost
