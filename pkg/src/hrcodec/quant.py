"""Nonlinear adaptive quantization.

The quantizer reshapes the rounding boundary of uniform quantization: the
fraction of a coefficient is remapped through an exponential curve pinned at
(0, 0), (0.5, epsilon) and (1, 1), so the curve crosses 0.5 at a threshold
t* >= 0.5 instead of at 0.5. Applied centrosymmetrically to the magnitude,
this widens the interval that quantizes to symbol 0 (to (-t*, t*)) while all
other symbols keep width-1 cells, trading a controlled distortion increase
for a lower symbol entropy. Smaller epsilon means a larger t* and more zeros.

Channel groups let different latent channels use different epsilons, and
per-region step scales let salient image regions keep a finer step than the
background.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

__all__ = [
    "FractionMap",
    "solve_fraction_map",
    "quantize_scalar",
    "GroupProfile",
    "builtin_profiles",
    "quantize_latents",
    "dequantize_latents",
]

# Fixed-point resolutions used by the bitstream; the encoder quantizes
# epsilon and the region scales to these grids up front so both ends of the
# wire solve identical curves.
EPSILON_FIXED_POINT = 10000
SCALE_FIXED_POINT = 256

_DEFAULT_REGION_SCALES = (1.0, 1.25, 1.6, 2.2)


@dataclass(frozen=True)
class FractionMap:
    """Solved fraction-remapping curve exp(a*t + b) + c for one epsilon.

    ``threshold`` is the fraction at which the curve crosses 0.5, i.e. the
    effective rounding boundary. epsilon == 0.5 is the identity curve with
    threshold 0.5 (plain half-up rounding).
    """

    epsilon: float
    a: float
    b: float
    c: float
    threshold: float

    @property
    def is_identity(self) -> bool:
        return self.epsilon >= 0.5

    def value(self, t):
        """Evaluate the curve at fraction(s) t in [0, 1].

        Computed as -c * expm1(a*t), identical to exp(a*t + b) + c but free
        of the cancellation that form suffers when epsilon nears 0.5.
        """
        t = np.asarray(t, dtype=np.float64)
        if self.is_identity:
            return t + 0.0
        return -self.c * np.expm1(self.a * t)


def solve_fraction_map(epsilon: float) -> FractionMap:
    """Solve the exponential curve parameters for a given epsilon in (0, 0.5].

    Closed form: with v = 1/eps - 1, the pins force a = 2*ln(v),
    b = ln(eps/(v-1)), c = -exp(b), and the 0.5-crossing sits at
    t* = ln(1 + 0.5/exp(b)) / a.
    """
    if not (0.0 < epsilon <= 0.5) or not math.isfinite(epsilon):
        raise ValueError(f"epsilon must be in (0, 0.5], got {epsilon}")
    if epsilon == 0.5:
        return FractionMap(epsilon=0.5, a=0.0, b=0.0, c=0.0, threshold=0.5)
    # x = v - 1 computed directly from epsilon; 1 - 2*eps is exact near 0.5
    x = (1.0 - 2.0 * epsilon) / epsilon
    a = 2.0 * math.log1p(x)
    u = epsilon / x
    b = math.log(u)
    c = -u
    threshold = math.log1p(0.5 / u) / a
    return FractionMap(epsilon=epsilon, a=a, b=b, c=c, threshold=threshold)


def quantize_scalar(y: float, fm: FractionMap) -> int:
    """Quantize one value: magnitude rounds up only past the curve threshold.

    q(|y|) = floor(|y|) + (1 if frac(|y|) >= t* else 0), applied with the
    sign of y, so the map is centrosymmetric and never increases magnitude
    relative to half-up rounding.
    """
    if not math.isfinite(y):
        raise ValueError(f"cannot quantize non-finite value {y}")
    mag = abs(y)
    base = math.floor(mag)
    q = base + (1 if mag - base >= fm.threshold else 0)
    return -q if y < 0 else q


def _quantize_array(values: np.ndarray, fm: FractionMap) -> np.ndarray:
    mag = np.abs(values)
    base = np.floor(mag)
    q = base + (mag - base >= fm.threshold)
    return (np.sign(values) * q).astype(np.int64)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _fixed(value: float, scale: int) -> float:
    return _round_half_up(value * scale) / scale


@dataclass(frozen=True)
class GroupProfile:
    """Ordered channel groups with per-group epsilon plus region step scales.

    Invariants: group channel counts are positive and cover the transform's
    channel total, epsilons are non-increasing across groups, and region
    scales are positive and non-decreasing (most salient region = finest
    step). Epsilons and scales are snapped to their bitstream fixed-point
    grids at construction.
    """

    name: str
    groups: tuple[tuple[int, float], ...]
    region_scales: tuple[float, ...] = _DEFAULT_REGION_SCALES

    def __post_init__(self):
        groups = tuple((int(ch), _fixed(float(eps), EPSILON_FIXED_POINT)) for ch, eps in self.groups)
        scales = tuple(_fixed(float(s), SCALE_FIXED_POINT) for s in self.region_scales)
        if not groups:
            raise ValueError("profile needs at least one channel group")
        if any(ch <= 0 for ch, _ in groups):
            raise ValueError("group channel counts must be positive")
        eps = [e for _, e in groups]
        if any(not 0.0 < e <= 0.5 for e in eps):
            raise ValueError("group epsilons must lie in (0, 0.5]")
        if any(e1 < e2 for e1, e2 in zip(eps, eps[1:])):
            raise ValueError("group epsilons must be non-increasing")
        if not scales:
            raise ValueError("profile needs at least one region scale")
        if any(s <= 0 for s in scales):
            raise ValueError("region scales must be positive")
        if any(s2 < s1 for s1, s2 in zip(scales, scales[1:])):
            raise ValueError("region scales must be non-decreasing")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "region_scales", scales)

    @property
    def group_count(self) -> int:
        return len(self.groups)

    @property
    def total_channels(self) -> int:
        return sum(ch for ch, _ in self.groups)

    @property
    def epsilons(self) -> tuple[float, ...]:
        return tuple(e for _, e in self.groups)

    def channel_slices(self) -> list[slice]:
        slices, start = [], 0
        for ch, _ in self.groups:
            slices.append(slice(start, start + ch))
            start += ch
        return slices

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "groups": [{"channels": ch, "epsilon": eps} for ch, eps in self.groups],
                "region_scales": list(self.region_scales),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "GroupProfile":
        try:
            doc = json.loads(text)
            groups = tuple((g["channels"], g["epsilon"]) for g in doc["groups"])
            scales = tuple(doc.get("region_scales", _DEFAULT_REGION_SCALES))
            return cls(name=doc["name"], groups=groups, region_scales=scales)
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise FormatError(f"bad profile config: {exc}") from exc


# Channel-count fractions and epsilon schedules of the built-in profiles.
# layer_1 is the no-adaptation baseline (one group, epsilon 0.5); each later
# profile adds one more group with a smaller epsilon.
_BUILTIN_FRACTIONS = {
    "layer_1": ((1.0,), (0.5,)),
    "layer_2": ((0.1, 0.9), (0.5, 0.4)),
    "layer_3": ((0.1, 0.2, 0.7), (0.5, 0.4, 0.3)),
    "layer_4": ((0.1, 0.2, 0.225, 0.475), (0.5, 0.4, 0.3, 0.2)),
}


def _apportion(fractions: tuple[float, ...], total: int) -> list[int]:
    # Cumulative rounding keeps every partial sum within 0.5 of exact and
    # preserves the total.
    counts, prev = [], 0
    cum = 0.0
    for frac in fractions:
        cum += frac
        edge = _round_half_up(cum * total)
        counts.append(edge - prev)
        prev = edge
    return counts


def builtin_profiles(total_channels: int = 256) -> list[GroupProfile]:
    """Instantiate the four built-in group profiles for a channel total."""
    profiles = []
    for name, (fractions, epsilons) in _BUILTIN_FRACTIONS.items():
        counts = _apportion(fractions, total_channels)
        profiles.append(GroupProfile(name=name, groups=tuple(zip(counts, epsilons))))
    return profiles


def get_profile(name: str, total_channels: int = 256) -> GroupProfile:
    for profile in builtin_profiles(total_channels):
        if profile.name == name:
            return profile
    raise FormatError(f"unknown profile {name!r}")


def _delta_map(profile: GroupProfile, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 2 or not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be a 2-D integer map")
    if labels.min() < 0 or labels.max() >= len(profile.region_scales):
        raise ValueError(
            f"label map uses regions outside the profile's "
            f"{len(profile.region_scales)} scales"
        )
    return np.asarray(profile.region_scales, dtype=np.float64)[labels]


def quantize_latents(lat, profile: GroupProfile, labels: np.ndarray, gain: float) -> np.ndarray:
    """Quantize a latent tensor to integer symbols.

    Channel ch in group g at a position labelled r maps through
    quantize(coeff * gain / scale_r) with group g's curve.
    """
    if gain <= 0:
        raise ValueError("gain must be positive")
    if profile.total_channels != lat.channels:
        raise ValueError(
            f"profile covers {profile.total_channels} channels, tensor has {lat.channels}"
        )
    if labels.shape != (lat.lat_h, lat.lat_w):
        raise ValueError("label map does not match latent spatial dims")
    scaled = lat.data * (gain / _delta_map(profile, labels))
    symbols = np.empty(scaled.shape, dtype=np.int64)
    for sl, (_, eps) in zip(profile.channel_slices(), profile.groups):
        symbols[sl] = _quantize_array(scaled[sl], solve_fraction_map(eps))
    return symbols


def dequantize_latents(
    symbols: np.ndarray,
    profile: GroupProfile,
    labels: np.ndarray,
    gain: float,
    block_size: int,
):
    """Inverse scaling of quantized symbols back to a latent tensor."""
    from .transform import LatentTensor

    symbols = np.asarray(symbols)
    if gain <= 0:
        raise ValueError("gain must be positive")
    if symbols.ndim != 3 or symbols.shape[0] != profile.total_channels:
        raise ValueError("symbol tensor does not match the profile")
    if labels.shape != symbols.shape[1:]:
        raise ValueError("label map does not match symbol spatial dims")
    data = symbols * (_delta_map(profile, labels) / gain)
    return LatentTensor(data, block_size)
