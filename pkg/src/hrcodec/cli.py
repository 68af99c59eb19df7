"""Command-line interface.

Subcommands: encode, decode, stats, roi. Exit codes: 0 success, 2 usage
error, 3 I/O error, 4 corrupt bitstream. Group numbering on the command
line follows the group count: --upto-group and --groups are 1-based, while
--binding pairs use zero-based group and region indices. JSON reports are
written atomically (temp file + rename) and always embed the resolved
configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import codec, metrics
from .errors import CorruptBitstreamError, FormatError
from .image_io import Colorspace, Image, convert_colorspace, load_image, pad_planes, save_image
from .quant import GroupProfile, get_profile
from .roi import (
    MAX_DEPTH,
    MaskPyramid,
    build_pyramid,
    load_external_masks,
    overlay_regions,
    save_label_map,
)
from .transform import analyze

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CORRUPT = 4

_IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")


class UsageError(Exception):
    pass


def _jsonify(obj):
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def _write_json_atomic(path: Path, doc: dict):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(_jsonify(doc), fh, indent=2)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _resolve_profile(name_or_path: str, block_size: int) -> GroupProfile:
    if name_or_path.endswith(".json") or "/" in name_or_path or os.sep in name_or_path:
        path = Path(name_or_path)
        if not path.is_file():
            raise UsageError(f"profile file not found: {name_or_path}")
        return GroupProfile.from_json(path.read_text())
    try:
        return get_profile(name_or_path, block_size * block_size)
    except FormatError as exc:
        raise UsageError(str(exc)) from exc


def _parse_binding(text: str) -> dict[int, int]:
    binding = {}
    try:
        for pair in text.split(","):
            group, region = pair.split(":")
            binding[int(group)] = int(region)
    except ValueError as exc:
        raise UsageError(f"bad --binding (want g:r,g:r,...): {text}") from exc
    return binding


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad integer list: {text}") from exc


def _build_pyramid_for(args, img: Image) -> MaskPyramid | None:
    if getattr(args, "masks", None):
        return load_external_masks(args.masks.split(","), (img.height, img.width))
    if args.roi_depth == 0:
        return None
    return build_pyramid(img, args.roi_depth)


def _quality_report(
    img: Image, rec: Image, data: bytes, pyramid: MaskPyramid | None
) -> dict:
    accounting = codec.stream_bpp(data)
    if pyramid is None:
        pyramid = MaskPyramid.single_region((img.height, img.width))
    per_region = metrics.per_region_psnr(img, rec, pyramid.label_map, pyramid.region_count)
    return {
        "bpp_total": accounting["bpp_total"],
        "bpp_header": accounting["bpp_header"],
        "bpp_per_group": accounting["bpp_per_group"],
        "psnr": metrics.psnr(img, rec),
        "msssim": metrics.msssim(img, rec),
        "psnr_per_region": [
            {"label": lab, "psnr": val, "pixel_count": cnt} for lab, val, cnt in per_region
        ],
        "lpips": None,  # reserved for externally computed values
    }


def cmd_encode(args) -> int:
    img = load_image(args.input)
    profile = _resolve_profile(args.profile, args.block_size)
    if args.region_scales:
        profile = GroupProfile(
            profile.name, profile.groups, tuple(float(s) for s in args.region_scales.split(","))
        )
    pyramid = _build_pyramid_for(args, img)
    binding = None
    if args.object:
        if pyramid is None:
            raise UsageError("--object requires ROI regions (set --roi-depth or --masks)")
        if args.binding:
            binding = _parse_binding(args.binding)
        else:
            # default: group g carries region min(g, background)
            binding = {
                g: min(g, pyramid.region_count - 1) for g in range(profile.group_count)
            }
    elif args.binding:
        raise UsageError("--binding needs --object")
    data = codec.encode(
        img,
        profile,
        pyramid,
        block_size=args.block_size,
        gain=args.gain,
        use_ycbcr=not args.rgb,
        binding=binding,
    )
    Path(args.output).write_bytes(data)
    report = {
        "input": str(args.input),
        "output": str(args.output),
        "config": {
            "profile": profile.name,
            "groups": [{"channels": ch, "epsilon": eps} for ch, eps in profile.groups],
            "region_scales": list(profile.region_scales),
            "block_size": args.block_size,
            "gain": args.gain,
            "colorspace": "rgb" if args.rgb else "ycbcr601",
            "roi_depth": 0 if pyramid is None else pyramid.depth,
            "object_binding": binding,
        },
        **_quality_report(img, codec.decode(data), data, pyramid),
    }
    if args.report:
        _write_json_atomic(Path(args.report), report)
    print(f"{args.output}: {len(data)} bytes, {report['bpp_total']:.4f} bpp, psnr {report['psnr']:.2f}")
    return EXIT_OK


def cmd_decode(args) -> int:
    data = Path(args.input).read_bytes()
    header = codec.parse_header(data)
    note = None
    if args.upto_group is not None and args.groups is not None:
        raise UsageError("--upto-group and --groups are mutually exclusive")
    if args.upto_group is not None:
        rec = codec.decode_progressive(data, args.upto_group)
        mode = {"progressive_upto_group": args.upto_group}
    elif args.groups is not None:
        selected = [g - 1 for g in _parse_int_list(args.groups)]
        rec = codec.decode_object(data, selected)
        mode = {"object_groups": [g + 1 for g in selected]}
        if not header.object_mode:
            note = "selected groups from a stream not encoded in object mode"
    else:
        rec = codec.decode(data)
        mode = {"full": True}
    save_image(rec, args.output)
    if args.report:
        report = {
            "input": str(args.input),
            "output": str(args.output),
            "mode": mode,
            "object_mode_stream": header.object_mode,
            "width": header.width,
            "height": header.height,
            "group_count": header.group_count,
            "bpp_total": codec.stream_bpp(data)["bpp_total"],
        }
        if note:
            report["note"] = note
        _write_json_atomic(Path(args.report), report)
    if note:
        print(f"warning: {note}", file=sys.stderr)
    print(f"{args.output}: {header.width}x{header.height}")
    return EXIT_OK


def _stats_one(path: Path, profiles: list[GroupProfile], args):
    img = load_image(path)
    pyramid = _build_pyramid_for(args, img)
    rows = []
    for profile in profiles:
        data = codec.encode(
            img,
            profile,
            pyramid,
            block_size=args.block_size,
            gain=args.gain,
            use_ycbcr=not args.rgb,
        )
        rec = codec.decode(data)
        rows.append(
            {
                "image": path.name,
                "profile": profile.name,
                "width": img.width,
                "height": img.height,
                "bpp": codec.stream_bpp(data)["bpp_total"],
                "psnr": metrics.psnr(img, rec),
                "msssim": metrics.msssim(img, rec),
            }
        )
    planes = img.planes if args.rgb or img.colorspace is Colorspace.GRAY else convert_colorspace(
        img, Colorspace.YCBCR601
    ).planes
    hist = None
    for plane in pad_planes(planes, args.block_size):
        pair = metrics.latent_histograms(analyze(plane, args.block_size).data * args.gain)
        hist = pair if hist is None else hist.merge(pair)
    return rows, hist


def cmd_stats(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        raise FormatError(f"not a directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    if not files:
        raise FormatError(f"no images in {directory}")
    profiles = [_resolve_profile(name, args.block_size) for name in args.profiles.split(",")]

    threads = int(os.environ.get("HRC_THREADS", "0")) or min(4, os.cpu_count() or 1)
    results: dict[str, tuple] = {}
    errors: list[dict] = []

    def run(path: Path):
        return path.name, _stats_one(path, profiles, args)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(run, path): path for path in files}
        for future, path in futures.items():
            try:
                name, payload = future.result()
                results[name] = payload
            except (FormatError, OSError) as exc:
                errors.append({"image": path.name, "error": str(exc)})
                print(f"warning: skipping {path.name}: {exc}", file=sys.stderr)

    if not results:
        raise FormatError("no readable images")
    rows = []
    hist = None
    for name in sorted(results):
        file_rows, file_hist = results[name]
        rows.extend(file_rows)
        if file_hist is not None:
            hist = file_hist if hist is None else hist.merge(file_hist)

    means = []
    for profile in profiles:
        sub = [r for r in rows if r["profile"] == profile.name]
        finite_psnr = [r["psnr"] for r in sub if math.isfinite(r["psnr"])]
        means.append(
            {
                "profile": profile.name,
                "images": len(sub),
                "bpp": float(np.mean([r["bpp"] for r in sub])),
                "psnr": float(np.mean(finite_psnr)) if finite_psnr else math.inf,
                "msssim": float(np.mean([r["msssim"] for r in sub])),
            }
        )

    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = prefix.with_name(prefix.name + "_stats.csv")
    with open(csv_path, "w") as fh:
        fh.write("image,profile,width,height,bpp,psnr,msssim\n")
        for r in rows:
            fh.write(
                f"{r['image']},{r['profile']},{r['width']},{r['height']},"
                f"{r['bpp']:.6f},{r['psnr']:.4f},{r['msssim']:.6f}\n"
            )
        for m in means:
            fh.write(f"mean,{m['profile']},,,{m['bpp']:.6f},{m['psnr']:.4f},{m['msssim']:.6f}\n")
    if hist is not None:
        hist.write_csv(prefix.with_name(prefix.name + "_hist.csv"))
    _write_json_atomic(
        prefix.with_name(prefix.name + "_stats.json"),
        {
            "directory": str(directory),
            "config": {
                "profiles": [p.name for p in profiles],
                "block_size": args.block_size,
                "gain": args.gain,
                "roi_depth": args.roi_depth,
                "colorspace": "rgb" if args.rgb else "ycbcr601",
            },
            "images": rows,
            "means": means,
            "errors": errors,
            "histograms": hist.to_json_dict() if hist is not None else None,
        },
    )
    for m in means:
        print(f"{m['profile']}: mean bpp {m['bpp']:.4f}, psnr {m['psnr']:.2f}, msssim {m['msssim']:.4f}")
    return EXIT_OK


def cmd_roi(args) -> int:
    img = load_image(args.input)
    pyramid = build_pyramid(img, args.depth)
    prefix = Path(args.out_prefix)
    if prefix.parent != Path("."):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    if pyramid.depth == 0:
        print("warning: no salient regions found; background only", file=sys.stderr)
    written = []
    for i, mask in enumerate(pyramid.fg_masks):
        path = prefix.with_name(prefix.name + f"_f{i + 1}.png")
        save_image(Image(mask[None].astype(np.float64) * 255.0, Colorspace.GRAY), path)
        written.append(path)
    bg_path = prefix.with_name(prefix.name + f"_b{max(pyramid.depth, 1)}.png")
    save_image(Image(pyramid.bg_mask[None].astype(np.float64) * 255.0, Colorspace.GRAY), bg_path)
    written.append(bg_path)
    overlay_path = prefix.with_name(prefix.name + "_overlay.png")
    save_image(overlay_regions(img, pyramid), overlay_path)
    written.append(overlay_path)
    labels_path = prefix.with_name(prefix.name + "_labels.png")
    save_label_map(pyramid, labels_path)
    written.append(labels_path)
    print(f"depth {pyramid.depth}: " + ", ".join(str(p) for p in written))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrcodec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="encode an image to .hrc")
    enc.add_argument("input")
    enc.add_argument("output")
    enc.add_argument("--profile", default="layer_4", help="builtin name or profile JSON path")
    enc.add_argument("--roi-depth", type=int, default=MAX_DEPTH, choices=range(0, MAX_DEPTH + 1))
    enc.add_argument("--masks", help="comma-separated external mask files (overrides --roi-depth)")
    enc.add_argument("--object", action="store_true", help="object-coding mode")
    enc.add_argument("--binding", help="object mode group:region pairs, zero-based (g:r,...)")
    enc.add_argument("--block-size", type=int, default=codec.DEFAULT_BLOCK_SIZE, choices=(8, 16))
    enc.add_argument("--gain", type=float, default=codec.DEFAULT_GAIN)
    enc.add_argument("--rgb", action="store_true", help="skip YCbCr conversion")
    enc.add_argument("--region-scales", help="override region step scales (comma-separated)")
    enc.add_argument("--report", help="write a JSON report here")
    enc.set_defaults(func=cmd_encode)

    dec = sub.add_parser("decode", help="decode an .hrc file to an image")
    dec.add_argument("input")
    dec.add_argument("output")
    dec.add_argument("--upto-group", type=int, help="progressive decode of the first N groups")
    dec.add_argument("--groups", help="object decode of these 1-based groups (i,j,...)")
    dec.add_argument("--report", help="write a JSON report here")
    dec.set_defaults(func=cmd_decode)

    st = sub.add_parser("stats", help="rate/quality table over a directory of images")
    st.add_argument("directory")
    st.add_argument("--profiles", default="layer_1,layer_2,layer_3,layer_4")
    st.add_argument("--out", default="hrcodec", help="output path prefix")
    st.add_argument("--roi-depth", type=int, default=0, choices=range(0, MAX_DEPTH + 1))
    st.add_argument("--block-size", type=int, default=codec.DEFAULT_BLOCK_SIZE, choices=(8, 16))
    st.add_argument("--gain", type=float, default=codec.DEFAULT_GAIN)
    st.add_argument("--rgb", action="store_true")
    st.set_defaults(func=cmd_stats, masks=None)

    roi = sub.add_parser("roi", help="write region masks and an overlay")
    roi.add_argument("input")
    roi.add_argument("--depth", type=int, default=MAX_DEPTH, choices=range(1, MAX_DEPTH + 1))
    roi.add_argument("--out-prefix", default="roi")
    roi.set_defaults(func=cmd_roi)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorruptBitstreamError as exc:
        print(f"error: corrupt bitstream: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
