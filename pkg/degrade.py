from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from exceptions import DimensionMismatchError, ManifestError, MisPairedError
from models import ImageBuffer, ImageEntry, MaskAssignment, MaskGrid, SemanticMap
from utils.general import relpath
from utils.image_io import save_image, save_mask, save_semantic

HOLE_VALUE = 0.0  # I_in = I_gt * (1 - M)


def _check_dims(image: ImageBuffer, other, what: str):
    if (image.width, image.height) != (other.width, other.height):
        raise DimensionMismatchError(
            f"{what} is {other.width}x{other.height}, image is {image.width}x{image.height}")


def apply_mask(gt: ImageBuffer, mask: MaskGrid) -> ImageBuffer:
    _check_dims(gt, mask, "mask")
    holes = mask.cells.astype(bool)[:, :, None]
    return ImageBuffer(np.where(holes, HOLE_VALUE, gt.data))


def compose_output(input: ImageBuffer, pred: ImageBuffer, mask: MaskGrid) -> ImageBuffer:
    """I_out = I_in + I_pred * M; known pixels come from input, holes from pred"""
    _check_dims(input, mask, "mask")
    _check_dims(input, pred, "prediction")
    if input.channels != pred.channels:
        raise DimensionMismatchError(f"prediction has {pred.channels} channels, input has {input.channels}")
    holes = mask.cells.astype(bool)
    leaked = int(np.count_nonzero(np.any(input.data[holes] != HOLE_VALUE, axis=-1)))
    if leaked:
        raise MisPairedError(
            f"input is nonzero on {leaked} masked pixels; input and mask are probably mis-paired")
    return ImageBuffer(np.where(holes[:, :, None], pred.data, input.data))


@dataclass(frozen=True)
class DegradedRecord:
    """Degraded input with the mask (and, for track 2, the semantic map) it was built from"""
    input: ImageBuffer
    mask: MaskGrid
    semantic: Optional[SemanticMap] = None

    @property
    def track(self) -> int:
        return 2 if self.semantic is not None else 1

    def write(self, image_id: str, gt_path, out_dir, mask_type: str, seed: Optional[int] = None,
              stream: Optional[str] = None, params: Optional[dict] = None) -> Tuple[ImageEntry, MaskAssignment]:
        """Write input/mask (and semantic) PNGs; paths in the returned entries are relative to out_dir"""
        out_dir = Path(out_dir)
        input_path = out_dir / "inputs" / f"{image_id}.png"
        mask_path = out_dir / "masks" / f"{image_id}.png"
        for p in (input_path, mask_path):
            p.parent.mkdir(parents=True, exist_ok=True)
        save_image(self.input, input_path)
        save_mask(self.mask, mask_path)

        semantic = None
        if self.semantic is not None:
            semantic_path = out_dir / "semantics" / f"{image_id}.png"
            semantic_path.parent.mkdir(parents=True, exist_ok=True)
            save_semantic(self.semantic, semantic_path)
            semantic = relpath(semantic_path, out_dir)

        entry = ImageEntry(id=image_id, image=relpath(gt_path, out_dir), semantic=semantic,
                           input=relpath(input_path, out_dir))
        assignment = MaskAssignment(image_id=image_id, mask_type=mask_type, mask_path=relpath(mask_path, out_dir),
                                    seed=seed, stream=stream, params=params)
        return entry, assignment


def degrade_pair(gt: ImageBuffer, semantic: Optional[SemanticMap], mask: MaskGrid,
                 track: Optional[int] = None) -> DegradedRecord:
    """X_m = apply_mask(gt, M), bundled as (X_m, M) for track 1 or (X_m, M, S) for track 2"""
    if track == 2 and semantic is None:
        raise ManifestError("track 2 record needs a semantic map")
    if track == 1 and semantic is not None:
        raise ManifestError("track 1 record must not carry a semantic map")
    if semantic is not None:
        _check_dims(gt, semantic, "semantic map")
    return DegradedRecord(apply_mask(gt, mask), mask, semantic)
