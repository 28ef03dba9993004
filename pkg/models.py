import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_serializer, field_validator, model_validator

from config import Config
from exceptions import ManifestError
from utils.general import relpath, write_text
from utils.rng import SeededRng

MaskType = Literal["box", "cellular_automata", "free_form"]
SplitTag = Literal["track1-only", "track2-only", "shared"]

MASK_TYPES: Tuple[str, ...] = ("box", "cellular_automata", "free_form")
SPLIT_TAGS: Tuple[str, ...] = ("track1-only", "track2-only", "shared")
NATIVE_METRICS: Tuple[str, ...] = ("psnr", "ssim", "mae")


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# ----------------------------------------------------------------------------
# Pixel grids
# ----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """H x W x C intensities in [0, 1]; C is 1 (gray) or 3 (RGB)"""
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"image data must be HxWx1 or HxWx3, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must be at least 1x1, got {arr.shape[1]}x{arr.shape[0]}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen_array(arr, np.float64))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height}x{self.channels})"


@dataclass(frozen=True, eq=False)
class MaskGrid:
    """H x W binary grid; 1 = masked/unknown, 0 = known"""
    cells: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.cells)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask cells must be a non-empty HxW grid, got shape {arr.shape}")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("mask cells must be 0 or 1")
        object.__setattr__(self, "cells", _frozen_array(arr, np.uint8))

    @classmethod
    def zeros(cls, width: int, height: int) -> "MaskGrid":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def ones(cls, width: int, height: int) -> "MaskGrid":
        return cls(np.ones((height, width), dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MaskGrid):
            return NotImplemented
        return self.cells.shape == other.cells.shape and bool(np.array_equal(self.cells, other.cells))

    def __repr__(self):
        return f"MaskGrid({self.width}x{self.height}, masked={int(self.cells.sum())})"


@dataclass(frozen=True, eq=False)
class SemanticMap:
    """H x W grid of non-negative class identifiers"""
    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"semantic labels must be a non-empty HxW grid, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.mod(arr, 1) == 0):
                raise ValueError("semantic labels must be integers")
        if arr.min() < 0:
            raise ValueError("semantic labels must be non-negative")
        object.__setattr__(self, "labels", _frozen_array(arr, np.int64))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SemanticMap):
            return NotImplemented
        return self.labels.shape == other.labels.shape and bool(np.array_equal(self.labels, other.labels))

    def __repr__(self):
        return f"SemanticMap({self.width}x{self.height})"


# ----------------------------------------------------------------------------
# Generator parameters
# ----------------------------------------------------------------------------
def _check_interval(value, name, positive=False, non_negative=False):
    low, high = value
    if low > high:
        raise ValueError(f"{name}: low {low} exceeds high {high}")
    if positive and low <= 0:
        raise ValueError(f"{name}: values must be strictly positive")
    if non_negative and low < 0:
        raise ValueError(f"{name}: values must be non-negative")
    return value


class BoxParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    fraction_range: Tuple[float, float] = Config.BOX_FRACTION_RANGE

    @field_validator("fraction_range")
    @classmethod
    def _check_range(cls, v):
        low, high = _check_interval(v, "fraction_range")
        if not 0 < low <= high <= 1:
            raise ValueError("fraction_range must satisfy 0 < low <= high <= 1")
        return v


class BrushParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    stroke_count_range: Tuple[int, int] = Config.BRUSH_STROKE_COUNT
    vertices_per_stroke: Tuple[int, int] = Config.BRUSH_VERTICES
    segment_length_range: Tuple[float, float] = Config.BRUSH_SEGMENT_LENGTH
    brush_width_range: Tuple[float, float] = Config.BRUSH_WIDTH
    angle_jitter: float = Config.BRUSH_ANGLE_JITTER

    @field_validator("stroke_count_range")
    @classmethod
    def _check_strokes(cls, v):
        return _check_interval(v, "stroke_count_range", non_negative=True)

    @field_validator("vertices_per_stroke")
    @classmethod
    def _check_vertices(cls, v):
        return _check_interval(v, "vertices_per_stroke", positive=True)

    @field_validator("segment_length_range", "brush_width_range")
    @classmethod
    def _check_lengths(cls, v, info):
        return _check_interval(v, info.field_name, positive=True)

    @field_validator("angle_jitter")
    @classmethod
    def _check_jitter(cls, v):
        if v < 0:
            raise ValueError("angle_jitter must be non-negative")
        return v


class CaParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    downscale: int = Config.CA_DOWNSCALE
    steps: int = Config.CA_STEPS
    init_density: float = Config.CA_INIT_DENSITY
    dilation_radius: int = Config.CA_DILATION_RADIUS

    @field_validator("downscale")
    @classmethod
    def _check_downscale(cls, v):
        if v not in Config.CA_DOWNSCALE_CHOICES:
            raise ValueError(f"downscale must be one of {Config.CA_DOWNSCALE_CHOICES}")
        return v

    @field_validator("steps")
    @classmethod
    def _check_steps(cls, v):
        if v not in Config.CA_STEP_CHOICES:
            raise ValueError(f"steps must be one of {Config.CA_STEP_CHOICES}")
        return v

    @field_validator("init_density")
    @classmethod
    def _check_density(cls, v):
        if not 0.0 <= v <= 1.0:
            raise ValueError("init_density must lie in [0, 1]")
        return v

    @field_validator("dilation_radius")
    @classmethod
    def _check_radius(cls, v):
        if v < 0:
            raise ValueError("dilation_radius must be non-negative")
        return v


class GeneratorParams(BaseModel):
    """Per-run overrides for all three families, as read from a YAML file"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    box: BoxParams = BoxParams()
    brush: BrushParams = BrushParams()
    ca: CaParams = CaParams()

    def for_type(self, mask_type: str):
        return {"box": self.box, "free_form": self.brush, "cellular_automata": self.ca}[mask_type]


# ----------------------------------------------------------------------------
# Run manifest
# ----------------------------------------------------------------------------
def canonical_json(payload) -> str:
    """Sorted keys, 2-space indent, UTF-8 text, trailing newline"""
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


class ImageEntry(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str
    image: str
    semantic: Optional[str] = None
    input: Optional[str] = None  # degraded image written by `degrade`


class MaskAssignment(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    image_id: str
    mask_type: MaskType
    mask_path: Optional[str] = None
    seed: Optional[int] = None
    stream: Optional[str] = None
    params: Optional[dict] = None

    @model_validator(mode="after")
    def _needs_source(self):
        if self.mask_path is None and self.seed is None:
            raise ValueError(f"mask assignment for '{self.image_id}' needs a mask path or a generation seed")
        return self


class RunManifest(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    images: List[ImageEntry]
    mask_assignments: List[MaskAssignment] = []
    track: Literal[1, 2] = 1
    split_tag: Optional[SplitTag] = None
    rng_algorithm: str = SeededRng.ALGORITHM

    @model_validator(mode="after")
    def _check_consistency(self):
        ids = [entry.id for entry in self.images]
        if len(set(ids)) != len(ids):
            raise ValueError("image ids must be unique")
        declared = set(ids)
        seen = set()
        for assignment in self.mask_assignments:
            if assignment.image_id not in declared:
                raise ValueError(f"mask assignment references undeclared image id '{assignment.image_id}'")
            if assignment.image_id in seen:
                raise ValueError(f"image id '{assignment.image_id}' has more than one mask assignment")
            seen.add(assignment.image_id)
        if self.track == 2:
            missing = [entry.id for entry in self.images if entry.semantic is None]
            if missing:
                raise ValueError(f"track 2 requires a semantic map for every image, missing: {missing[:5]}")
        return self

    def assignment_for(self, image_id: str) -> Optional[MaskAssignment]:
        for assignment in self.mask_assignments:
            if assignment.image_id == image_id:
                return assignment
        return None

    def subset(self, ids, split_tag: Optional[str] = None) -> "RunManifest":
        """Manifest restricted to ``ids`` (order of this manifest), tagged with ``split_tag``"""
        wanted = set(ids)
        unknown = sorted(wanted - {entry.id for entry in self.images})
        if unknown:
            raise ManifestError(f"ids not in the manifest: {unknown[:10]}")
        return self.model_copy(update={
            "images": [e for e in self.images if e.id in wanted],
            "mask_assignments": [a for a in self.mask_assignments if a.image_id in wanted],
            "split_tag": split_tag,
        })

    def rebased(self, src_root, dst_root) -> "RunManifest":
        """Rewrite relative paths so they resolve from ``dst_root`` instead of ``src_root``"""
        def move(value):
            if value is None or Path(value).is_absolute():
                return value
            return relpath(Path(src_root) / value, dst_root)

        images = [e.model_copy(update={"image": move(e.image), "semantic": move(e.semantic), "input": move(e.input)})
                  for e in self.images]
        assignments = [a.model_copy(update={"mask_path": move(a.mask_path)}) for a in self.mask_assignments]
        return self.model_copy(update={"images": images, "mask_assignments": assignments})

    def to_json(self) -> str:
        return canonical_json(self.model_dump(mode="json"))

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        try:
            return cls.model_validate(json.loads(text))
        except (ValidationError, json.JSONDecodeError) as e:
            raise ManifestError(f"invalid run manifest: {e}") from e

    def save(self, path):
        write_text(path, self.to_json())

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        if not path.is_file():
            raise ManifestError(f"{path}: manifest not found")
        return cls.from_json(path.read_text(encoding="utf-8"))


def resolve_path(value: str, root) -> Path:
    """Manifest paths are relative to the manifest's directory unless absolute"""
    p = Path(value)
    return p if p.is_absolute() or root is None else Path(root) / p


# ----------------------------------------------------------------------------
# Metric records and aggregates
# ----------------------------------------------------------------------------
def _parse_inf(v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return v


class MetricRecord(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    image_id: str
    mask_type: MaskType
    missing_fraction: Optional[float] = None
    psnr: Optional[float] = None
    ssim: Optional[float] = None
    mae: Optional[float] = None
    plugin_values: Dict[str, float] = {}
    status: Literal["ok", "absent", "error"] = "ok"
    error: Optional[str] = None

    @field_validator("psnr", mode="before")
    @classmethod
    def _read_inf(cls, v):
        return _parse_inf(v)

    @field_validator("psnr")
    @classmethod
    def _check_psnr(cls, v):
        if v is not None and (math.isnan(v) or v < 0):
            raise ValueError("psnr must be >= 0 or +inf")
        return v

    @field_validator("ssim")
    @classmethod
    def _check_ssim(cls, v):
        if v is not None and not -1.0 <= v <= 1.0:
            raise ValueError("ssim must lie in [-1, 1]")
        return v

    @field_validator("mae", "missing_fraction")
    @classmethod
    def _check_unit(cls, v, info):
        if v is not None and not 0.0 <= v <= 1.0:
            raise ValueError(f"{info.field_name} must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def _ok_has_metrics(self):
        if self.status == "ok" and None in (self.psnr, self.ssim, self.mae, self.missing_fraction):
            raise ValueError(f"record '{self.image_id}' is ok but lacks native metric values")
        return self

    @field_serializer("psnr", when_used="json")
    def _write_inf(self, v):
        return "inf" if v is not None and math.isinf(v) else v

    def value(self, metric: str) -> Optional[float]:
        if metric in NATIVE_METRICS:
            return getattr(self, metric)
        return self.plugin_values.get(metric)


class AggregateStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float
    std: float  # population standard deviation
    n: int
    excluded: int = 0  # infinite values left out

    @model_validator(mode="after")
    def _check(self):
        if self.std < 0 or self.n < 1:
            raise ValueError("AggregateStats needs std >= 0 and n >= 1")
        return self


class MaskTypeRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    mask_type: MaskType
    count: int
    metrics: Dict[str, Optional[AggregateStats]]  # None when every value was infinite
    excluded: Dict[str, int] = {}


class MaskTypeTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    metric_order: List[str]
    rows: List[MaskTypeRow]

    def row(self, mask_type: str) -> MaskTypeRow:
        for row in self.rows:
            if row.mask_type == mask_type:
                return row
        raise KeyError(mask_type)


class ScatterPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    missing_fraction: float
    value: float
    mask_type: MaskType
    image_id: str


class ComparisonRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    image_id: str
    run_a: MetricRecord
    run_b: MetricRecord
    deltas: Dict[str, Optional[float]]


class RunComparison(BaseModel):
    model_config = ConfigDict(frozen=True)

    metrics: List[str]
    rows: List[ComparisonRow]
    summary: Dict[str, Optional[AggregateStats]]


class PluginResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    scalar: Optional[float] = None
    per_image: Optional[Dict[str, float]] = None


@dataclass
class PluginSpec:
    """``name=command`` as given on the command line"""
    name: str
    command: str

    @classmethod
    def parse(cls, text: str) -> "PluginSpec":
        name, sep, command = text.partition("=")
        if not sep or not name.strip() or not command.strip():
            raise ValueError(f"plugin must be given as name=command, got '{text}'")
        return cls(name.strip(), command.strip())


@dataclass
class RunLevel:
    """Set-level plug-in values and plug-in failures of one evaluation"""
    values: Dict[str, float] = field(default_factory=dict)
    failures: List[dict] = field(default_factory=list)

    def to_dict(self):
        return {"values": dict(sorted(self.values.items())), "plugin_failures": self.failures}
