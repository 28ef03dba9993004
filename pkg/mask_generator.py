import logging
import math
from typing import NamedTuple, Optional

import numpy as np
from PIL import Image, ImageDraw
from pydantic import ValidationError
from scipy import ndimage

from config import Config
from exceptions import DimensionMismatchError, MaskParamsError
from models import (MASK_TYPES, BoxParams, BrushParams, CaParams, GeneratorParams, MaskAssignment, MaskGrid,
                    resolve_path)
from utils.image_io import load_mask
from utils.logger_config import LOGGER
from utils.rng import SeededRng

MOORE = np.ones((3, 3), dtype=np.int32)  # 3x3 neighbourhood, centre included
MAJORITY = 5  # of 9 votes
EPS = 1e-9  # absorbs float noise in fraction * dimension

TYPE_ALIASES = {
    "box": "box",
    "ca": "cellular_automata",
    "cellular_automata": "cellular_automata",
    "freeform": "free_form",
    "free_form": "free_form",
    "mixed": "mixed",
}


class GeneratedMask(NamedTuple):
    mask: MaskGrid
    mask_type: str
    params: dict


def _extent_bounds(dim, low, high):
    return max(1, math.ceil(low * dim - EPS)), math.floor(high * dim + EPS)


def box_mask(width: int, height: int, params: Optional[BoxParams] = None, rng: Optional[SeededRng] = None) -> MaskGrid:
    """One axis-aligned filled rectangle, extents drawn per axis from params.fraction_range"""
    params = params or BoxParams()
    rng = rng or SeededRng(0, "box")
    if width < 4 or height < 4:
        raise MaskParamsError(f"box mask needs an image of at least 4x4, got {width}x{height}")
    low, high = params.fraction_range
    w_lo, w_hi = _extent_bounds(width, low, high)
    h_lo, h_hi = _extent_bounds(height, low, high)
    if w_lo > w_hi or h_lo > h_hi:
        raise MaskParamsError(f"image {width}x{height} too small to fit the minimum rectangle for {params.fraction_range}")

    rect_w = int(rng.integers(w_lo, w_hi))
    rect_h = int(rng.integers(h_lo, h_hi))
    x0 = int(rng.integers(0, width - rect_w))
    y0 = int(rng.integers(0, height - rect_h))

    cells = np.zeros((height, width), dtype=np.uint8)
    cells[y0:y0 + rect_h, x0:x0 + rect_w] = 1
    return MaskGrid(cells)


def ca_step(grid: MaskGrid) -> MaskGrid:
    """Majority of the 9-cell Moore neighbourhood with replicate padding"""
    votes = ndimage.correlate(grid.cells.astype(np.int32), MOORE, mode="nearest")
    return MaskGrid((votes >= MAJORITY).astype(np.uint8))


def dilate(grid: MaskGrid, radius: int) -> MaskGrid:
    """Square structuring element of side 2*radius+1; outside the grid counts as 0"""
    if radius < 0:
        raise MaskParamsError(f"dilation radius must be >= 0, got {radius}")
    if radius == 0:
        return grid
    size = 2 * radius + 1
    return MaskGrid(ndimage.maximum_filter(grid.cells, size=size, mode="constant", cval=0))


def upscale_nearest(grid: MaskGrid, factor: int) -> MaskGrid:
    if factor < 1:
        raise MaskParamsError(f"upscale factor must be >= 1, got {factor}")
    if factor == 1:
        return grid
    return MaskGrid(np.repeat(np.repeat(grid.cells, factor, axis=0), factor, axis=1))


def ca_mask(width: int, height: int, params: Optional[CaParams] = None, rng: Optional[SeededRng] = None) -> MaskGrid:
    params = params or CaParams()
    rng = rng or SeededRng(0, "ca")
    d = params.downscale
    if width < d or height < d:
        raise MaskParamsError(f"image {width}x{height} is smaller than the downscale factor {d}")

    coarse_w, coarse_h = -(-width // d), -(-height // d)
    grid = MaskGrid((rng.random((coarse_h, coarse_w)) < params.init_density).astype(np.uint8))
    for _ in range(params.steps):
        grid = ca_step(grid)

    # ceil-division grid always covers W x H, so cropping never pads
    grid = MaskGrid(upscale_nearest(grid, d).cells[:height, :width])
    if d > 1:
        grid = dilate(grid, params.dilation_radius)
    return grid


def freeform_mask(width: int, height: int, params: Optional[BrushParams] = None,
                  rng: Optional[SeededRng] = None) -> MaskGrid:
    """Random thick polylines with disc caps at every vertex, clipped to the image"""
    params = params or BrushParams()
    rng = rng or SeededRng(0, "free_form")
    if width < 16 or height < 16:
        raise MaskParamsError(f"free-form mask needs an image of at least 16x16, got {width}x{height}")

    unit = min(width, height)
    canvas = Image.new("L", (width, height), 0)
    draw = ImageDraw.Draw(canvas)

    for _ in range(int(rng.integers(*params.stroke_count_range))):
        n_vertices = int(rng.integers(*params.vertices_per_stroke))
        brush = max(1, int(round(rng.uniform(*params.brush_width_range) * unit)))
        x, y = rng.uniform(0, width), rng.uniform(0, height)
        angle = rng.uniform(0, 2 * math.pi)

        points = [(x, y)]
        for _ in range(n_vertices - 1):
            angle += rng.uniform(-params.angle_jitter, params.angle_jitter)
            length = rng.uniform(*params.segment_length_range) * unit
            x, y = x + length * math.cos(angle), y + length * math.sin(angle)
            points.append((x, y))

        points = [(int(round(px)), int(round(py))) for px, py in points]
        if len(points) > 1:
            draw.line(points, fill=255, width=brush)
        r = brush // 2
        for px, py in points:
            draw.ellipse((px - r, py - r, px + r, py + r), fill=255)

    return MaskGrid((np.asarray(canvas) > 0).astype(np.uint8))


def missing_fraction(mask: MaskGrid) -> float:
    return int(np.count_nonzero(mask.cells)) / (mask.width * mask.height)


def sample_ca_params(rng: SeededRng, base: Optional[CaParams] = None) -> CaParams:
    """Per-mask randomisation: downscale from {1, 2, 4, 8}, steps from 2..5"""
    base = base or CaParams()
    return CaParams(**{**base.model_dump(),
                       "downscale": int(rng.choice(Config.CA_DOWNSCALE_CHOICES)),
                       "steps": int(rng.choice(Config.CA_STEP_CHOICES))})


def normalize_type(name: str) -> str:
    try:
        return TYPE_ALIASES[name]
    except KeyError:
        raise MaskParamsError(f"unknown mask type '{name}', expected one of {sorted(TYPE_ALIASES)}") from None


def generate_mask(mask_type: str, width: int, height: int, params: Optional[GeneratorParams] = None,
                  rng: Optional[SeededRng] = None, randomize_ca: bool = False) -> GeneratedMask:
    """Dispatch over the three families; 'mixed' picks one uniformly per call.

    Family choice and CA parameter draws come from child streams, so a mask
    regenerates from (seed, stream, realised params) without replaying them.
    """
    params = params or GeneratorParams()
    rng = rng or SeededRng(0, "mask")
    mask_type = normalize_type(mask_type)
    if mask_type == "mixed":
        mask_type = rng.split("family").choice(MASK_TYPES)

    if mask_type == "box":
        used = params.box
        mask = box_mask(width, height, used, rng)
    elif mask_type == "cellular_automata":
        used = sample_ca_params(rng.split("params"), params.ca) if randomize_ca else params.ca
        if width < used.downscale or height < used.downscale:
            LOGGER.warning(f"Downscale {used.downscale} exceeds {width}x{height}, falling back to 1")
            used = CaParams(**{**used.model_dump(), "downscale": 1})
        mask = ca_mask(width, height, used, rng)
    else:
        used = params.brush
        mask = freeform_mask(width, height, used, rng)

    if LOGGER.isEnabledFor(logging.DEBUG):
        LOGGER.debug(f"{mask_type} mask {width}x{height} from {rng!r}: missing {missing_fraction(mask):.3f}")
    return GeneratedMask(mask, mask_type, used.model_dump(mode="json"))


def params_from_assignment(mask_type: str, params: Optional[dict]) -> GeneratorParams:
    field = {"box": "box", "free_form": "brush", "cellular_automata": "ca"}[mask_type]
    try:
        return GeneratorParams(**{field: params or {}})
    except ValidationError as e:
        raise MaskParamsError(f"invalid {mask_type} parameters {params}: {e}") from e


def mask_for_assignment(assignment: MaskAssignment, width: int, height: int, root=None) -> MaskGrid:
    """Load the recorded mask PNG, or regenerate it from the recorded seed and parameters"""
    if assignment.mask_path is not None:
        mask = load_mask(resolve_path(assignment.mask_path, root))
    else:
        rng = SeededRng(assignment.seed, assignment.stream or f"mask/{assignment.image_id}")
        params = params_from_assignment(assignment.mask_type, assignment.params)
        mask = generate_mask(assignment.mask_type, width, height, params, rng).mask
    if (mask.width, mask.height) != (width, height):
        raise DimensionMismatchError(
            f"mask for '{assignment.image_id}' is {mask.width}x{mask.height}, image is {width}x{height}")
    return mask
