from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator

from config import Config
from exceptions import EmptyInputError, ManifestError
from models import SemanticMap
from utils.general import write_text
from utils.logger_config import LOGGER
from utils.rng import SeededRng


class ClassStats(BaseModel):
    """Per class id: images containing it and total pixels labelled with it"""
    model_config = ConfigDict(frozen=True)

    n_images: int = 0
    image_count: Dict[int, int] = {}
    pixel_count: Dict[int, int] = {}

    def merge(self, other: "ClassStats") -> "ClassStats":
        classes = sorted(set(self.image_count) | set(other.image_count))
        return ClassStats(
            n_images=self.n_images + other.n_images,
            image_count={c: self.image_count.get(c, 0) + other.image_count.get(c, 0) for c in classes},
            pixel_count={c: self.pixel_count.get(c, 0) + other.pixel_count.get(c, 0) for c in classes},
        )

    def without(self, classes: Iterable[int]) -> "ClassStats":
        drop = set(classes)
        return ClassStats(
            n_images=self.n_images,
            image_count={c: n for c, n in self.image_count.items() if c not in drop},
            pixel_count={c: n for c, n in self.pixel_count.items() if c not in drop},
        )

    @classmethod
    def of_map(cls, semantic: SemanticMap) -> "ClassStats":
        classes, counts = np.unique(semantic.labels, return_counts=True)
        return cls(
            n_images=1,
            image_count={int(c): 1 for c in classes},
            pixel_count={int(c): int(n) for c, n in zip(classes, counts)},
        )


class LabelMapping(BaseModel):
    """Source class -> target class; anything unmapped becomes ``unmapped_id``"""
    model_config = ConfigDict(frozen=True)

    pairs: Dict[int, int]
    unmapped_id: int = Config.UNMAPPED_LABEL

    @field_validator("pairs")
    @classmethod
    def _non_negative(cls, v):
        if any(k < 0 or t < 0 for k, t in v.items()):
            raise ValueError("class ids must be non-negative")
        return v

    @classmethod
    def identity(cls, classes: Iterable[int]) -> "LabelMapping":
        return cls(pairs={int(c): int(c) for c in classes})


def compute_class_stats(maps: Iterable[SemanticMap]) -> ClassStats:
    stats, seen = ClassStats(), 0
    for semantic in maps:
        stats = stats.merge(ClassStats.of_map(semantic))
        seen += 1
    if seen == 0:
        raise EmptyInputError("class statistics need at least one semantic map")
    return stats


def _top_k(counts: Dict[int, int], k: int) -> List[int]:
    # ties broken by lower class id
    return [c for c, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


def select_classes(stats: ClassStats, k_image: int, k_pixel: int) -> FrozenSet[int]:
    """Union of the top-k_image classes by image count and top-k_pixel by pixel count"""
    if k_image < 1 or k_pixel < 1:
        raise ValueError(f"k_image and k_pixel must be >= 1, got {k_image}, {k_pixel}")
    return frozenset(_top_k(stats.image_count, k_image)) | frozenset(_top_k(stats.pixel_count, k_pixel))


def class_coverage(semantic: SemanticMap, allowed: Iterable[int]) -> float:
    allowed = np.fromiter((int(c) for c in allowed), dtype=np.int64)
    covered = int(np.count_nonzero(np.isin(semantic.labels, allowed)))
    return covered / semantic.labels.size


def filter_by_coverage(pairs: Iterable[Tuple[str, SemanticMap]], allowed: Iterable[int],
                       threshold: float = Config.COVERAGE_THRESHOLD) -> List[str]:
    """Keep an image iff its allowed-class coverage is >= threshold (and > 0)"""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    allowed = frozenset(int(c) for c in allowed)
    kept = []
    for image_id, semantic in pairs:
        coverage = class_coverage(semantic, allowed)
        if coverage > 0 and coverage >= threshold:
            kept.append(image_id)
        else:
            LOGGER.debug(f"Dropped '{image_id}': coverage {coverage:.3f} < {threshold}")
    return kept


def three_way_split(ids: List[str], rng: SeededRng) -> Tuple[List[str], List[str], List[str]]:
    """Random permutation cut into (track1_only, track2_only, shared); remainder goes track1, then track2"""
    ids = list(ids)
    if len(ids) < 3:
        raise EmptyInputError(f"three-way split needs at least 3 ids, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ManifestError("ids to split must be unique")
    order = [ids[i] for i in rng.permutation(len(ids))]
    base, rem = divmod(len(ids), 3)
    sizes = [base + (i < rem) for i in range(3)]
    first, second = sizes[0], sizes[0] + sizes[1]
    return order[:first], order[first:second], order[second:]


def translate_labels(semantic: SemanticMap, mapping: LabelMapping) -> Tuple[SemanticMap, Dict[int, int]]:
    """Pointwise relabelling; returns the translated map and a pixel tally per unmapped source class"""
    labels = semantic.labels
    table = np.full(int(labels.max()) + 1, mapping.unmapped_id, dtype=np.int64)
    mapped = np.zeros(table.size, dtype=bool)
    for source, target in mapping.pairs.items():
        if source < table.size:
            table[source] = target
            mapped[source] = True

    classes, counts = np.unique(labels, return_counts=True)
    tally = {int(c): int(n) for c, n in zip(classes, counts) if not mapped[c]}
    if tally:
        LOGGER.warning(f"{sum(tally.values())} pixel(s) of unmapped classes {sorted(tally)} set to {mapping.unmapped_id}")
    return SemanticMap(table[labels]), tally


def load_label_mapping(path, unmapped_id: int = Config.UNMAPPED_LABEL) -> LabelMapping:
    """Two-column UTF-8 text: ``source target`` per line, whitespace or comma separated, '#' comments"""
    pairs = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.replace(",", " ").split()
            if len(fields) != 2:
                raise ManifestError(f"{path}:{lineno}: expected two columns, got {len(fields)}")
            try:
                source, target = int(fields[0]), int(fields[1])
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: class ids must be integers") from None
            if source in pairs:
                raise ManifestError(f"{path}:{lineno}: duplicate source class {source}")
            pairs[source] = target
    LOGGER.info(f"Loaded {len(pairs)} label pairs from {Path(path).name}")
    return LabelMapping(pairs=pairs, unmapped_id=unmapped_id)


def class_stats_to_csv(stats: ClassStats, selected: Iterable[int] = (), path=None) -> str:
    selected = set(selected)
    df = pd.DataFrame([{"class_id": c, "image_count": stats.image_count[c], "pixel_count": stats.pixel_count[c],
                        "selected": int(c in selected)} for c in sorted(stats.image_count)],
                      columns=["class_id", "image_count", "pixel_count", "selected"])
    text = df.to_csv(index=False, lineterminator="\n")
    if path is not None:
        write_text(path, text)
    return text
