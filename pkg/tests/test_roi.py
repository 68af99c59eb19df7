import numpy as np
import pytest

from hrcodec.errors import FormatError
from hrcodec.image_io import Colorspace, Image, save_image
from hrcodec.roi import (
    MaskPyramid,
    binarize,
    build_pyramid,
    downsample_labels,
    load_external_masks,
    overlay_regions,
    saliency_spectral_residual,
)

from conftest import natural_image, salient_image


def test_constant_image_has_zero_saliency():
    img = Image(np.full((1, 40, 40), 77.0), Colorspace.GRAY)
    sal = saliency_spectral_residual(img)
    assert sal.shape == (40, 40)
    assert (sal == 0).all()


def test_bright_square_peaks_inside_square():
    planes = np.zeros((1, 64, 64))
    planes[0, 24:32, 30:38] = 255.0
    sal = saliency_spectral_residual(Image(planes, Colorspace.GRAY))
    peak = np.unravel_index(np.argmax(sal), sal.shape)
    assert 20 <= peak[0] <= 36 and 26 <= peak[1] <= 42


def test_saliency_normalized():
    for seed in (0, 1):
        sal = saliency_spectral_residual(natural_image(seed, 100, 140))
        assert sal.min() >= 0.0 and sal.max() <= 1.0


def test_binarize_trivial_maps():
    assert not binarize(np.zeros((30, 30))).any()
    assert binarize(np.ones((30, 30))).all()


def test_binarize_removes_small_speck():
    sal = np.zeros((100, 100))
    sal[50, 50:53] = 1.0  # 3-pixel speck, below 0.001 * 10000 = 10 pixels
    mask = binarize(sal, threshold=0.5, min_area_frac=0.001, morph_radius=0)
    assert not mask.any()


def test_binarize_keeps_large_component():
    sal = np.zeros((100, 100))
    sal[20:60, 20:60] = 1.0
    mask = binarize(sal, threshold=0.5, min_area_frac=0.001, morph_radius=2)
    assert mask[40, 40]
    assert not mask[80, 80]


def test_binarize_validates_params():
    with pytest.raises(ValueError):
        binarize(np.zeros((4, 4)), threshold=0.0)
    with pytest.raises(ValueError):
        binarize(np.zeros((4, 4)), min_area_frac=0.9)


def test_constant_image_pyramid_degrades_to_background():
    img = Image(np.full((3, 48, 64), 120.0), Colorspace.RGB)
    pyr = build_pyramid(img, 3)
    assert pyr.depth == 0
    assert pyr.bg_mask.all()
    assert (pyr.label_map == 0).all()


def test_structured_image_full_depth_partition():
    pyr = build_pyramid(salient_image(), 3)
    assert pyr.depth == 3
    labels = pyr.label_map
    assert set(np.unique(labels)) == {0, 1, 2, 3}
    total = np.zeros(labels.shape, dtype=int)
    for mask in pyr.fg_masks:
        total += mask
    total += pyr.bg_mask
    assert (total == 1).all()


def test_depth_one_pyramid():
    pyr = build_pyramid(salient_image(), 1)
    assert pyr.depth == 1
    assert set(np.unique(pyr.label_map)) <= {0, 1}


def test_foreground_levels_are_disjoint_and_deterministic():
    img = natural_image(4, 120, 160)
    pyr1 = build_pyramid(img, 3)
    pyr2 = build_pyramid(img, 3)
    assert np.array_equal(pyr1.label_map, pyr2.label_map)
    for i, a in enumerate(pyr1.fg_masks):
        for b in pyr1.fg_masks[i + 1 :]:
            assert not (a & b).any()


def test_custom_saliency_operator():
    img = Image(np.zeros((1, 32, 32)), Colorspace.GRAY)

    def top_half(image):
        sal = np.zeros((image.height, image.width))
        sal[: image.height // 2] = 1.0
        return sal

    pyr = build_pyramid(img, 2, saliency_fn=top_half, min_area_frac=0.0, morph_radius=0)
    assert pyr.depth == 1  # second pass re-selects only claimed pixels -> empty
    assert pyr.fg_masks[0][:16].all()
    assert pyr.bg_mask[16:].all()


def test_pyramid_invariants_enforced():
    good = np.zeros((4, 4), dtype=bool)
    good[:2] = True
    with pytest.raises(ValueError):
        MaskPyramid(fg_masks=(good,), bg_mask=good, label_map=np.zeros((4, 4), dtype=int))


def test_external_masks_priority_and_background(tmp_path):
    shape = (20, 30)
    m1 = np.zeros(shape)
    m1[:10, :] = 255.0
    m2 = np.zeros(shape)
    m2[5:15, :] = 255.0  # overlaps m1 in rows 5..9
    p1, p2 = tmp_path / "m1.png", tmp_path / "m2.png"
    save_image(Image(m1[None], Colorspace.GRAY), p1)
    save_image(Image(m2[None], Colorspace.GRAY), p2)
    pyr = load_external_masks([p1, p2], shape)
    assert pyr.depth == 2
    assert pyr.fg_masks[0][7, 0] and not pyr.fg_masks[1][7, 0]
    assert pyr.fg_masks[1][12, 0]
    assert pyr.bg_mask[18, 0]


def test_external_full_white_mask(tmp_path):
    shape = (8, 8)
    path = tmp_path / "full.png"
    save_image(Image(np.full((1, *shape), 255.0), Colorspace.GRAY), path)
    pyr = load_external_masks([path], shape)
    assert pyr.fg_masks[0].all()
    assert not pyr.bg_mask.any()


def test_external_masks_errors(tmp_path):
    shape = (8, 8)
    path = tmp_path / "m.png"
    save_image(Image(np.zeros((1, 4, 4)), Colorspace.GRAY), path)
    with pytest.raises(FormatError):
        load_external_masks([path], shape)
    with pytest.raises(FormatError):
        load_external_masks([path] * 4, (4, 4))
    assert load_external_masks([], shape).depth == 0


def test_downsample_uniform_labels():
    labels = np.full((32, 32), 2, dtype=np.int64)
    out = downsample_labels(labels, 16)
    assert out.shape == (2, 2)
    assert (out == 2).all()


def test_downsample_tie_breaks_toward_salient():
    labels = np.full((16, 16), 3, dtype=np.int64)
    labels[:8, :] = 0  # exactly half the block
    assert downsample_labels(labels, 16)[0, 0] == 0


def test_downsample_checkerboard_majority():
    yy, xx = np.mgrid[0:16, 0:16]
    labels = ((yy + xx) % 2).astype(np.int64)  # perfect F1/F2 checkerboard
    assert downsample_labels(labels, 16)[0, 0] == 0
    # brute-force majority oracle with the tie rule
    counts = [(labels == lab).sum() for lab in range(2)]
    best = max(range(2), key=lambda lab: (counts[lab], -lab))
    assert best == 0


def test_downsample_from_pyramid_and_validation():
    pyr = MaskPyramid.single_region((32, 32))
    assert (downsample_labels(pyr, 16) == 0).all()
    with pytest.raises(ValueError):
        downsample_labels(np.zeros((30, 32), dtype=np.int64), 16)


def test_overlay_shapes():
    img = salient_image()
    pyr = build_pyramid(img, 2)
    over = overlay_regions(img, pyr)
    assert over.colorspace is Colorspace.RGB
    assert over.planes.shape == img.planes.shape


def test_label_map_indexed_png(tmp_path):
    from PIL import Image as PILImage

    from hrcodec.roi import save_label_map

    pyr = build_pyramid(salient_image(), 2)
    path = tmp_path / "labels.png"
    save_label_map(pyr, path)
    pil = PILImage.open(path)
    assert pil.mode == "P"
    assert np.array_equal(np.asarray(pil), pyr.label_map.astype(np.uint8))
