import math
from functools import lru_cache
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from config import Config
from exceptions import BenchError, DimensionMismatchError, EmptyInputError, ManifestError, MetricError, PluginError
from mask_generator import mask_for_assignment, missing_fraction
from models import (AggregateStats, ImageBuffer, ImageEntry, MaskGrid, MetricRecord, PluginSpec, RunLevel,
                    RunManifest, resolve_path)
from plugin_runner import run_plugin_metric
from utils.general import parallel_map
from utils.image_io import load_image
from utils.logger_config import LOGGER

PSNR_INF = math.inf  # sentinel for identical images
DATA_RANGE = 1.0


def _check_pair(a: ImageBuffer, b: ImageBuffer):
    if a.data.shape != b.data.shape:
        raise DimensionMismatchError(
            f"images differ in shape: {a.width}x{a.height}x{a.channels} vs {b.width}x{b.height}x{b.channels}")


def mae(a: ImageBuffer, b: ImageBuffer) -> float:
    _check_pair(a, b)
    return float(np.mean(np.abs(a.data - b.data)))


def mse(a: ImageBuffer, b: ImageBuffer) -> float:
    _check_pair(a, b)
    return float(np.mean((a.data - b.data) ** 2))


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    err = mse(a, b)
    if err == 0:
        return PSNR_INF
    return 10.0 * math.log10(DATA_RANGE ** 2 / err)


def to_luma(image: ImageBuffer) -> np.ndarray:
    if image.channels == 1:
        return image.data[:, :, 0]
    return image.data @ np.asarray(Config.LUMA_WEIGHTS)


@lru_cache(maxsize=8)
def gaussian_kernel(size: int = Config.SSIM_WINDOW, sigma: float = Config.SSIM_SIGMA) -> np.ndarray:
    """Normalised 1-D Gaussian; the 2-D window is its outer product"""
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    g.setflags(write=False)
    return g


def _window_mean(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable filtering; mode='nearest' is replicate padding
    return ndimage.correlate1d(ndimage.correlate1d(x, g, axis=0, mode="nearest"), g, axis=1, mode="nearest")


def ssim_map(a: ImageBuffer, b: ImageBuffer) -> np.ndarray:
    _check_pair(a, b)
    size = Config.SSIM_WINDOW
    if min(a.width, a.height) < size:
        raise MetricError(f"SSIM needs images of at least {size}x{size}, got {a.width}x{a.height}")

    x, y = to_luma(a), to_luma(b)
    g = gaussian_kernel(size, Config.SSIM_SIGMA)
    c1 = (Config.SSIM_K1 * DATA_RANGE) ** 2
    c2 = (Config.SSIM_K2 * DATA_RANGE) ** 2

    mu_x, mu_y = _window_mean(x, g), _window_mean(y, g)
    s_xx = _window_mean(x * x, g) - mu_x * mu_x
    s_yy = _window_mean(y * y, g) - mu_y * mu_y
    s_xy = _window_mean(x * y, g) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * s_xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (s_xx + s_yy + c2)
    return num / den


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    return float(np.clip(ssim_map(a, b).mean(), -1.0, 1.0))


def aggregate(values: Iterable[float], name: Optional[str] = None) -> AggregateStats:
    """Mean and population std; infinite values are excluded with a warning"""
    vals = np.asarray([float(v) for v in values], dtype=np.float64)
    if vals.size == 0:
        raise EmptyInputError(f"cannot aggregate an empty list{f' of {name}' if name else ''}")
    finite = vals[np.isfinite(vals)]
    excluded = int(vals.size - finite.size)
    if excluded:
        LOGGER.warning(f"Excluded {excluded} non-finite value(s){f' of {name}' if name else ''} from aggregate")
    if finite.size == 0:
        raise EmptyInputError(f"all {excluded} value(s){f' of {name}' if name else ''} are non-finite")
    return AggregateStats(mean=float(finite.mean()), std=float(finite.std()), n=int(finite.size), excluded=excluded)


def score_pair(image_id: str, gt: ImageBuffer, output: ImageBuffer, mask: MaskGrid, mask_type: str) -> MetricRecord:
    """Whole-image PSNR/SSIM/MAE of output against ground truth, tagged with mask metadata"""
    _check_pair(gt, output)
    return MetricRecord(
        image_id=image_id,
        mask_type=mask_type,
        missing_fraction=missing_fraction(mask),
        psnr=psnr(gt, output),
        ssim=ssim(gt, output),
        mae=mae(gt, output),
    )


def require_assignments(manifest: RunManifest):
    missing = [entry.id for entry in manifest.images if manifest.assignment_for(entry.id) is None]
    if missing:
        raise ManifestError(f"images without a mask assignment: {missing[:10]}")


def evaluate_run(manifest: RunManifest, outputs_dir, root=None, jobs: Optional[int] = None) -> List[MetricRecord]:
    """Score one submission: ``<outputs_dir>/<image_id>.png`` per manifest image, records sorted by id"""
    require_assignments(manifest)
    outputs_dir = Path(outputs_dir)

    def evaluate_one(entry: ImageEntry) -> MetricRecord:
        assignment = manifest.assignment_for(entry.id)
        out_path = outputs_dir / f"{entry.id}.png"
        if not out_path.is_file():
            LOGGER.warning(f"No output for '{entry.id}' ({out_path}), marked absent")
            return MetricRecord(image_id=entry.id, mask_type=assignment.mask_type, status="absent",
                                error="missing output file")
        try:
            gt = load_image(resolve_path(entry.image, root))
            mask = mask_for_assignment(assignment, gt.width, gt.height, root)
            output = load_image(out_path)
            record = score_pair(entry.id, gt, output, mask, assignment.mask_type)
        except BenchError as e:
            LOGGER.error(f"Image '{entry.id}': {e}")
            return MetricRecord(image_id=entry.id, mask_type=assignment.mask_type, status="error", error=str(e))
        LOGGER.debug(f"{entry.id}: psnr {record.psnr:.2f} ssim {record.ssim:.4f} mae {record.mae:.4f}")
        return record

    entries = sorted(manifest.images, key=lambda e: e.id)
    return parallel_map(evaluate_one, entries, jobs=jobs, desc="Evaluating")


def apply_plugins(records: List[MetricRecord], plugins: List[PluginSpec], gt_dir, out_dir) -> Tuple[List[MetricRecord], RunLevel]:
    """Run plug-ins one after another; a failing plug-in never drops the native metrics"""
    run_level = RunLevel()
    expected = [r.image_id for r in records if r.status == "ok"]
    for spec in plugins:
        try:
            result = run_plugin_metric(spec.name, spec.command, gt_dir, out_dir, expected_ids=expected)
        except PluginError as e:
            LOGGER.error(str(e))
            run_level.failures.append(e.to_dict())
            continue
        if result.scalar is not None:
            run_level.values[spec.name] = result.scalar
        if result.per_image:
            records = [r.model_copy(update={"plugin_values": {**r.plugin_values, spec.name: result.per_image[r.image_id]}})
                       if r.image_id in result.per_image else r
                       for r in records]
    return records, run_level
