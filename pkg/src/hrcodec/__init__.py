"""hrcodec: region-adaptive still-image codec.

Pipeline: blockwise orthonormal DCT analysis -> hierarchical saliency
regions -> nonlinear channel-group quantization with per-region step
scales -> context-adaptive range coding into independently decodable
per-group segments. Supports progressive (group-prefix) decoding and
object coding (channel groups bound to regions).
"""

from .codec import (
    decode,
    decode_object,
    decode_progressive,
    decode_to_latents,
    encode,
    encode_object_mode,
    parse_header,
    stream_bpp,
)
from .entropy import Segment, decode_segment, encode_segment, segment_bpp
from .errors import CodecError, CorruptBitstreamError, FormatError
from .image_io import Colorspace, Image, convert_colorspace, load_image, save_image
from .metrics import latent_histograms, msssim, psnr
from .quant import (
    FractionMap,
    GroupProfile,
    builtin_profiles,
    dequantize_latents,
    get_profile,
    quantize_latents,
    quantize_scalar,
    solve_fraction_map,
)
from .roi import (
    MaskPyramid,
    binarize,
    build_pyramid,
    downsample_labels,
    load_external_masks,
    saliency_spectral_residual,
)
from .transform import LatentTensor, analyze, synthesize

__version__ = "0.1.0"

__all__ = [
    "Colorspace",
    "Image",
    "load_image",
    "save_image",
    "convert_colorspace",
    "LatentTensor",
    "analyze",
    "synthesize",
    "MaskPyramid",
    "saliency_spectral_residual",
    "binarize",
    "build_pyramid",
    "load_external_masks",
    "downsample_labels",
    "FractionMap",
    "solve_fraction_map",
    "quantize_scalar",
    "GroupProfile",
    "builtin_profiles",
    "get_profile",
    "quantize_latents",
    "dequantize_latents",
    "Segment",
    "encode_segment",
    "decode_segment",
    "segment_bpp",
    "encode",
    "encode_object_mode",
    "decode",
    "decode_progressive",
    "decode_object",
    "decode_to_latents",
    "parse_header",
    "stream_bpp",
    "psnr",
    "msssim",
    "latent_histograms",
    "CodecError",
    "FormatError",
    "CorruptBitstreamError",
    "__version__",
]
