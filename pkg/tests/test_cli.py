import json

import numpy as np
import pytest

from hrcodec import codec
from hrcodec.cli import EXIT_CORRUPT, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from hrcodec.image_io import load_image, save_image

from conftest import natural_image, salient_image


@pytest.fixture()
def png(tmp_path):
    path = tmp_path / "in.png"
    save_image(natural_image(50, 96, 128), path)
    return path


def test_encode_decode_cycle(tmp_path, png):
    out = tmp_path / "out.hrc"
    rec = tmp_path / "rec.png"
    report = tmp_path / "report.json"
    assert main(["encode", str(png), str(out), "--report", str(report)]) == EXIT_OK
    assert main(["decode", str(out), str(rec)]) == EXIT_OK
    assert load_image(rec).planes.shape == load_image(png).planes.shape
    doc = json.loads(report.read_text())
    assert {"bpp_total", "bpp_header", "bpp_per_group", "psnr", "msssim",
            "psnr_per_region", "lpips", "config"} <= set(doc)
    assert doc["lpips"] is None
    assert doc["config"]["profile"] == "layer_4"
    assert sum(r["pixel_count"] for r in doc["psnr_per_region"]) == 96 * 128


def test_encode_layer_1_group_count(tmp_path, png):
    out = tmp_path / "out.hrc"
    report = tmp_path / "r.json"
    assert main(["encode", str(png), str(out), "--profile", "layer_1",
                 "--roi-depth", "0", "--report", str(report)]) == EXIT_OK
    assert codec.parse_header(out.read_bytes()).group_count == 1
    doc = json.loads(report.read_text())
    assert len(doc["bpp_per_group"]) == 1


def test_encode_with_external_masks(tmp_path, png):
    img = load_image(png)
    m1 = np.zeros((1, img.height, img.width))
    m1[0, :30, :40] = 255.0
    m2 = np.zeros((1, img.height, img.width))
    m2[0, 50:70, 60:100] = 255.0
    from hrcodec.image_io import Colorspace, Image

    p1, p2 = tmp_path / "f1.png", tmp_path / "f2.png"
    save_image(Image(m1, Colorspace.GRAY), p1)
    save_image(Image(m2, Colorspace.GRAY), p2)
    out = tmp_path / "out.hrc"
    assert main(["encode", str(png), str(out), "--masks", f"{p1},{p2}"]) == EXIT_OK
    assert codec.parse_header(out.read_bytes()).region_count == 3


def test_encode_object_mode_with_binding(tmp_path):
    src = tmp_path / "s.png"
    save_image(salient_image(), src)
    out = tmp_path / "o.hrc"
    report = tmp_path / "r.json"
    rc = main(["encode", str(src), str(out), "--object",
               "--binding", "0:0,1:1,2:2,3:3", "--report", str(report)])
    assert rc == EXIT_OK
    header = codec.parse_header(out.read_bytes())
    assert header.object_mode
    doc = json.loads(report.read_text())
    assert len(doc["bpp_per_group"]) == 4
    assert doc["config"]["object_binding"] == {"0": 0, "1": 1, "2": 2, "3": 3}


def test_decode_progressive_and_object_flags(tmp_path, png):
    out = tmp_path / "out.hrc"
    assert main(["encode", str(png), str(out)]) == EXIT_OK
    rec1 = tmp_path / "g1.png"
    assert main(["decode", str(out), str(rec1), "--upto-group", "1"]) == EXIT_OK
    bg = tmp_path / "bg.png"
    report = tmp_path / "r.json"
    assert main(["decode", str(out), str(bg), "--groups", "4",
                 "--report", str(report)]) == EXIT_OK
    doc = json.loads(report.read_text())
    assert doc["mode"] == {"object_groups": [4]}
    assert "note" in doc  # plain stream, flagged
    assert main(["decode", str(out), str(bg), "--upto-group", "1",
                 "--groups", "2"]) == EXIT_USAGE


def test_exit_codes(tmp_path, png):
    assert main(["encode", str(tmp_path / "none.png"), str(tmp_path / "x.hrc")]) == EXIT_IO
    assert main(["encode", str(png), str(tmp_path / "x.hrc"),
                 "--profile", "layer_9"]) == EXIT_USAGE
    bad = tmp_path / "bad.hrc"
    bad.write_bytes(b"junkjunkjunk")
    assert main(["decode", str(bad), str(tmp_path / "y.png")]) == EXIT_CORRUPT
    assert main(["encode", str(png), str(tmp_path / "x.hrc"),
                 "--binding", "0:0"]) == EXIT_USAGE
    assert main(["nonsense"]) == EXIT_USAGE
    truncated = tmp_path / "trunc.hrc"
    assert main(["encode", str(png), str(truncated)]) == EXIT_OK
    truncated.write_bytes(truncated.read_bytes()[:-5])
    assert main(["decode", str(truncated), str(tmp_path / "z.png")]) == EXIT_CORRUPT


def test_roi_writes_masks(tmp_path):
    src = tmp_path / "s.png"
    save_image(salient_image(), src)
    prefix = tmp_path / "regions"
    assert main(["roi", str(src), "--depth", "3", "--out-prefix", str(prefix)]) == EXIT_OK
    for name in ("regions_f1.png", "regions_f2.png", "regions_f3.png",
                 "regions_b3.png", "regions_overlay.png"):
        assert (tmp_path / name).is_file(), name
    mask = load_image(tmp_path / "regions_f1.png")
    assert set(np.unique(mask.planes)) <= {0.0, 255.0}


def test_roi_depth_one(tmp_path):
    src = tmp_path / "s.png"
    save_image(salient_image(), src)
    prefix = tmp_path / "d1"
    assert main(["roi", str(src), "--depth", "1", "--out-prefix", str(prefix)]) == EXIT_OK
    assert (tmp_path / "d1_f1.png").is_file()
    assert (tmp_path / "d1_b1.png").is_file()


def test_roi_constant_image_warns(tmp_path, capsys):
    from hrcodec.image_io import Colorspace, Image

    src = tmp_path / "flat.png"
    save_image(Image(np.full((1, 32, 32), 60.0), Colorspace.GRAY), src)
    prefix = tmp_path / "flat"
    assert main(["roi", str(src), "--out-prefix", str(prefix)]) == EXIT_OK
    assert "background only" in capsys.readouterr().err
    assert (tmp_path / "flat_b1.png").is_file()


def test_stats_two_profiles(tmp_path, monkeypatch):
    folder = tmp_path / "imgs"
    folder.mkdir()
    for seed in range(3):
        save_image(natural_image(60 + seed, 96, 112), folder / f"im{seed}.png")
    monkeypatch.setenv("HRC_THREADS", "2")
    prefix = tmp_path / "report" / "run"
    rc = main(["stats", str(folder), "--profiles", "layer_1,layer_4",
               "--out", str(prefix)])
    assert rc == EXIT_OK
    csv_text = (tmp_path / "report" / "run_stats.csv").read_text().splitlines()
    assert csv_text[0] == "image,profile,width,height,bpp,psnr,msssim"
    assert len([l for l in csv_text[1:] if l.startswith("im")]) == 6
    assert len([l for l in csv_text if l.startswith("mean")]) == 2
    doc = json.loads((tmp_path / "report" / "run_stats.json").read_text())
    assert len(doc["images"]) == 6
    assert doc["errors"] == []
    assert (tmp_path / "report" / "run_hist.csv").is_file()


def test_stats_single_image_and_skip(tmp_path, capsys):
    folder = tmp_path / "imgs"
    folder.mkdir()
    save_image(natural_image(70, 64, 64), folder / "good.png")
    (folder / "bad.png").write_bytes(b"\x89PNG\r\n\x1a\nnope")
    rc = main(["stats", str(folder), "--profiles", "layer_1", "--out", str(tmp_path / "s")])
    assert rc == EXIT_OK
    assert "skipping bad.png" in capsys.readouterr().err
    doc = json.loads((tmp_path / "s_stats.json").read_text())
    assert len(doc["images"]) == 1
    assert doc["errors"][0]["image"] == "bad.png"


def test_stats_empty_directory(tmp_path):
    folder = tmp_path / "empty"
    folder.mkdir()
    assert main(["stats", str(folder), "--out", str(tmp_path / "s")]) == EXIT_IO


def test_profile_json_file(tmp_path, png):
    from hrcodec.quant import get_profile

    path = tmp_path / "custom.json"
    path.write_text(get_profile("layer_2").to_json())
    out = tmp_path / "o.hrc"
    assert main(["encode", str(png), str(out), "--profile", str(path)]) == EXIT_OK
    assert codec.parse_header(out.read_bytes()).group_count == 2


def test_region_scales_override(tmp_path, png):
    out = tmp_path / "o.hrc"
    rc = main(["encode", str(png), str(out), "--roi-depth", "1",
               "--region-scales", "1.0,3.0,3.0,3.0"])
    assert rc == EXIT_OK
    header = codec.parse_header(out.read_bytes())
    assert header.region_scales_fp[0] == 256
