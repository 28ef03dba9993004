import numpy as np
import pytest

from config import Config
from exceptions import DimensionMismatchError, MaskParamsError
from mask_generator import (box_mask, ca_mask, ca_step, dilate, freeform_mask, generate_mask, mask_for_assignment,
                            missing_fraction, sample_ca_params, upscale_nearest)
from models import MASK_TYPES, BoxParams, BrushParams, CaParams, GeneratorParams, MaskAssignment, MaskGrid
from utils.image_io import save_mask
from utils.rng import SeededRng


def _bbox(mask):
    ys, xs = np.nonzero(mask.cells)
    return xs.max() - xs.min() + 1, ys.max() - ys.min() + 1


def _majority_oracle(cells):
    padded = np.pad(cells, 1, mode="edge")
    out = np.zeros_like(cells)
    for y in range(cells.shape[0]):
        for x in range(cells.shape[1]):
            out[y, x] = int(padded[y:y + 3, x:x + 3].sum() >= 5)
    return out


def _dilate_oracle(cells, r):
    h, w = cells.shape
    out = np.zeros_like(cells)
    for y in range(h):
        for x in range(w):
            out[y, x] = cells[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1].max()
    return out


# ----------------------------------------------------------------------------
# Box
# ----------------------------------------------------------------------------
def test_box_extents_within_fraction_range():
    for seed in range(50):
        w, h = _bbox(box_mask(100, 100, BoxParams(), SeededRng(seed)))
        assert 30 <= w <= 70 and 30 <= h <= 70


def test_box_area_fraction_bounds():
    for seed in range(1000):
        mask = box_mask(256, 256, BoxParams(), SeededRng(seed, "box"))
        assert 0.09 <= missing_fraction(mask) <= 0.49
        w, h = _bbox(mask)
        assert missing_fraction(mask) == w * h / 256 ** 2  # one filled rectangle


def test_box_collapsed_range():
    mask = box_mask(100, 100, BoxParams(fraction_range=(0.5, 0.5)), SeededRng(1))
    assert int(mask.cells.sum()) == 2500
    assert _bbox(mask) == (50, 50)


def test_box_regenerates():
    assert box_mask(100, 100, BoxParams(), SeededRng(42)) == box_mask(100, 100, BoxParams(), SeededRng(42))


def test_box_golden_rectangle(golden):
    mask = box_mask(100, 100, BoxParams(), SeededRng(42))
    ys, xs = np.nonzero(mask.cells)
    x0, y0 = int(xs.min()), int(ys.min())
    w, h = _bbox(mask)
    assert int(mask.cells.sum()) == w * h
    golden("box_100x100_seed42", {"x0": x0, "y0": y0, "width": int(w), "height": int(h)})


def test_box_too_small():
    with pytest.raises(MaskParamsError):
        box_mask(3, 10, BoxParams(), SeededRng(0))


# ----------------------------------------------------------------------------
# Cellular automata
# ----------------------------------------------------------------------------
def test_ca_step_fixed_points():
    assert ca_step(MaskGrid.zeros(6, 5)) == MaskGrid.zeros(6, 5)
    assert ca_step(MaskGrid.ones(6, 5)) == MaskGrid.ones(6, 5)
    single = np.zeros((5, 5), dtype=np.uint8)
    single[2, 2] = 1
    assert ca_step(MaskGrid(single)) == MaskGrid.zeros(5, 5)


def test_ca_step_matches_brute_force():
    rs = np.random.RandomState(0)
    for _ in range(10000):
        h, w = rs.randint(1, 17, size=2)
        cells = (rs.rand(h, w) < rs.rand()).astype(np.uint8)
        assert np.array_equal(ca_step(MaskGrid(cells)).cells, _majority_oracle(cells))


@pytest.mark.parametrize("density, expected", [(0.0, 0), (1.0, 1)])
def test_ca_density_extremes(density, expected):
    mask = ca_mask(40, 24, CaParams(init_density=density), SeededRng(5))
    assert np.all(mask.cells == expected)


def test_ca_mask_default_sanity_band():
    mask = ca_mask(256, 256, CaParams(), SeededRng(7))
    assert (mask.width, mask.height) == (256, 256)
    assert 0.2 <= missing_fraction(mask) <= 0.8
    assert ca_mask(256, 256, CaParams(), SeededRng(7)) == mask


def test_ca_mask_golden(golden, cells_digest):
    mask = ca_mask(256, 256, CaParams(), SeededRng(7))
    golden("ca_256x256_seed7", {"missing_fraction": missing_fraction(mask), "cells_sha256": cells_digest(mask)})


def test_ca_step_reaches_fixed_point_within_bound():
    rs = np.random.RandomState(12)
    for _ in range(200):
        h, w = rs.randint(1, 17, size=2)
        grid = MaskGrid((rs.rand(h, w) < rs.rand()).astype(np.uint8))
        for _ in range(w * h):
            nxt = ca_step(grid)
            if nxt == grid:
                break
            grid = nxt
        assert ca_step(grid) == grid


def test_ca_mask_non_divisible_size():
    mask = ca_mask(37, 21, CaParams(downscale=8), SeededRng(2))
    assert (mask.width, mask.height) == (37, 21)


def test_ca_mask_smaller_than_downscale():
    with pytest.raises(MaskParamsError):
        ca_mask(4, 4, CaParams(downscale=8), SeededRng(0))


def test_sample_ca_params_choices():
    rng = SeededRng(1)
    drawn = [sample_ca_params(rng) for _ in range(200)]
    assert {p.downscale for p in drawn} == set(Config.CA_DOWNSCALE_CHOICES)
    assert {p.steps for p in drawn} == set(Config.CA_STEP_CHOICES)


# ----------------------------------------------------------------------------
# Free-form
# ----------------------------------------------------------------------------
def test_freeform_no_strokes():
    mask = freeform_mask(64, 64, BrushParams(stroke_count_range=(0, 0)), SeededRng(0))
    assert mask == MaskGrid.zeros(64, 64)


def test_freeform_clipped_and_deterministic():
    for seed in range(20):
        mask = freeform_mask(48, 32, BrushParams(segment_length_range=(0.3, 0.6)), SeededRng(seed))
        assert mask.cells.shape == (32, 48)
    first = freeform_mask(256, 256, BrushParams(), SeededRng(11))
    assert first == freeform_mask(256, 256, BrushParams(), SeededRng(11))
    assert first.cells.any()


def test_freeform_golden(golden, cells_digest):
    mask = freeform_mask(256, 256, BrushParams(), SeededRng(11))
    golden("freeform_256x256_seed11", {"missing_fraction": missing_fraction(mask), "cells_sha256": cells_digest(mask)})


def test_freeform_too_small():
    with pytest.raises(MaskParamsError):
        freeform_mask(15, 64, BrushParams(), SeededRng(0))


# ----------------------------------------------------------------------------
# Morphology
# ----------------------------------------------------------------------------
def test_dilate_examples():
    assert dilate(MaskGrid.zeros(9, 9), 3) == MaskGrid.zeros(9, 9)
    single = np.zeros((11, 11), dtype=np.uint8)
    single[5, 5] = 1
    expected = np.zeros((11, 11), dtype=np.uint8)
    expected[4:7, 4:7] = 1
    assert np.array_equal(dilate(MaskGrid(single), 1).cells, expected)
    with pytest.raises(MaskParamsError):
        dilate(MaskGrid(single), -1)


def test_dilate_matches_window_scan():
    rs = np.random.RandomState(4)
    for _ in range(20):
        cells = (rs.rand(32, 32) < 0.05).astype(np.uint8)
        assert np.array_equal(dilate(MaskGrid(cells), 2).cells, _dilate_oracle(cells, 2))


def test_dilate_laws():
    rs = np.random.RandomState(9)
    for _ in range(1000):
        a = (rs.rand(32, 32) < 0.03).astype(np.uint8)
        b = a | (rs.rand(32, 32) < 0.03).astype(np.uint8)
        r1, r2 = rs.randint(0, 4, size=2)
        da = dilate(MaskGrid(a), r1).cells
        assert np.all(da >= a)  # extensive
        assert np.all(dilate(MaskGrid(b), r1).cells >= da)  # monotone
        assert np.array_equal(dilate(MaskGrid(da), r2).cells, dilate(MaskGrid(a), r1 + r2).cells)


def test_upscale_nearest():
    grid = MaskGrid(np.array([[1, 0], [0, 1]]))
    assert upscale_nearest(grid, 1) == grid
    expected = np.kron(np.eye(2, dtype=np.uint8), np.ones((2, 2), dtype=np.uint8))
    assert np.array_equal(upscale_nearest(grid, 2).cells, expected)

    cells = np.random.RandomState(1).randint(0, 2, (5, 7))
    up = upscale_nearest(MaskGrid(cells), 4).cells
    ys, xs = np.mgrid[0:20, 0:28]
    assert np.array_equal(up, cells[ys // 4, xs // 4])


def test_missing_fraction():
    assert missing_fraction(MaskGrid.ones(10, 10)) == 1.0
    assert missing_fraction(MaskGrid.zeros(10, 10)) == 0.0
    cells = np.zeros((100, 100), dtype=np.uint8)
    cells[10:40, 20:60] = 1
    assert missing_fraction(MaskGrid(cells)) == 0.12


# ----------------------------------------------------------------------------
# Dispatch and regeneration
# ----------------------------------------------------------------------------
def test_generate_mask_mixed_records_family():
    seen = set()
    for seed in range(30):
        gen = generate_mask("mixed", 64, 64, GeneratorParams(), SeededRng(seed), randomize_ca=True)
        assert gen.mask_type in MASK_TYPES
        seen.add(gen.mask_type)
    assert seen == set(MASK_TYPES)


def test_generate_mask_unknown_type():
    with pytest.raises(MaskParamsError, match="unknown mask type"):
        generate_mask("triangle", 64, 64)


def test_regenerate_from_assignment():
    gen = generate_mask("ca", 96, 64, GeneratorParams(), SeededRng(5, "mask/a"), randomize_ca=True)
    assignment = MaskAssignment(image_id="a", mask_type=gen.mask_type, seed=5, stream="mask/a", params=gen.params)
    assert mask_for_assignment(assignment, 96, 64) == gen.mask


def test_assignment_from_file(tmp_path):
    mask = box_mask(20, 10, BoxParams(), SeededRng(0))
    save_mask(mask, tmp_path / "a.png")
    assignment = MaskAssignment(image_id="a", mask_type="box", mask_path="a.png")
    assert mask_for_assignment(assignment, 20, 10, root=tmp_path) == mask
    with pytest.raises(DimensionMismatchError):
        mask_for_assignment(assignment, 10, 20, root=tmp_path)


def test_family_coverage_ordering():
    params = GeneratorParams()
    fractions = {t: [] for t in MASK_TYPES}
    for seed in range(40):
        for mask_type in MASK_TYPES:
            gen = generate_mask(mask_type, 128, 128, params, SeededRng(seed, mask_type), randomize_ca=True)
            fractions[mask_type].append(missing_fraction(gen.mask))
    mean = {t: np.mean(v) for t, v in fractions.items()}
    assert mean["cellular_automata"] > mean["box"] > mean["free_form"]


def test_ca_covers_more_than_box_at_full_size():
    ca = [missing_fraction(ca_mask(256, 256, CaParams(), SeededRng(seed, "ca"))) for seed in range(500)]
    box = [missing_fraction(box_mask(256, 256, BoxParams(), SeededRng(seed, "box"))) for seed in range(500)]
    assert np.mean(ca) > np.mean(box)
