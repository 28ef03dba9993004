import math
from typing import Dict, List, Optional

import pandas as pd
from pydantic import ValidationError

from degrade import apply_mask
from exceptions import EmptyInputError, ManifestError, MetricError
from mask_generator import mask_for_assignment
from metrics import require_assignments, aggregate, score_pair
from models import (MASK_TYPES, NATIVE_METRICS, ComparisonRow, MaskTypeRow, MaskTypeTable, MetricRecord, RunComparison,
                    RunManifest, ScatterPoint, canonical_json, resolve_path)
from utils.general import parallel_map, write_text
from utils.image_io import load_image
from utils.logger_config import LOGGER

RECORD_COLUMNS = ["image_id", "mask_type", "missing_fraction", "psnr", "ssim", "mae"]
TRAILING_COLUMNS = ["status", "error"]
MASK_TYPE_LABELS = {"box": "Box", "cellular_automata": "Cellular Automata", "free_form": "Free-Form"}


def _ok(records: List[MetricRecord]) -> List[MetricRecord]:
    return [r for r in records if r.status == "ok"]


def _plugin_names(records: List[MetricRecord]) -> List[str]:
    return sorted({name for r in records for name in r.plugin_values})


def metric_order(records: List[MetricRecord]) -> List[str]:
    """LPIPS (when a plug-in supplies it), PSNR, SSIM, MAE, then other plug-in metrics"""
    plugins = _plugin_names(records)
    head = ["lpips"] if "lpips" in plugins else []
    return head + list(NATIVE_METRICS) + [p for p in plugins if p != "lpips"]


def _summarize(values: List[float], name: str):
    finite = [v for v in values if math.isfinite(v)]
    if not values:
        return None, 0
    if not finite:
        LOGGER.warning(f"All {len(values)} value(s) of {name} are infinite; no aggregate")
        return None, len(values)
    stats = aggregate(values, name=name)
    return stats, stats.excluded


def per_mask_type_table(records: List[MetricRecord]) -> MaskTypeTable:
    ok = _ok(records)
    if not ok:
        raise EmptyInputError("per-mask-type table needs at least one scored record")
    order = metric_order(ok)
    rows = []
    for mask_type in MASK_TYPES:
        group = sorted((r for r in ok if r.mask_type == mask_type), key=lambda r: r.image_id)
        if not group:
            continue
        metrics, excluded = {}, {}
        for metric in order:
            values = [r.value(metric) for r in group if r.value(metric) is not None]
            metrics[metric], excluded[metric] = _summarize(values, f"{mask_type} {metric}")
        rows.append(MaskTypeRow(mask_type=mask_type, count=len(group), metrics=metrics, excluded=excluded))
    return MaskTypeTable(metric_order=order, rows=rows)


def masked_baseline_records(manifest: RunManifest, root=None, jobs: Optional[int] = None) -> List[MetricRecord]:
    """Metrics of each degraded input apply_mask(gt, M) against its own ground truth"""
    require_assignments(manifest)

    def score_one(entry):
        assignment = manifest.assignment_for(entry.id)
        gt = load_image(resolve_path(entry.image, root))
        mask = mask_for_assignment(assignment, gt.width, gt.height, root)
        return score_pair(entry.id, gt, apply_mask(gt, mask), mask, assignment.mask_type)

    return parallel_map(score_one, sorted(manifest.images, key=lambda e: e.id), jobs=jobs, desc="Baseline")


def masked_baseline(manifest: RunManifest, root=None, jobs: Optional[int] = None) -> MaskTypeTable:
    return per_mask_type_table(masked_baseline_records(manifest, root, jobs))


def scatter_series(records: List[MetricRecord], metric: str) -> List[ScatterPoint]:
    ok = _ok(records)
    if metric not in NATIVE_METRICS and metric not in _plugin_names(ok):
        raise MetricError(f"unknown metric '{metric}', available: {metric_order(ok)}")
    points = [ScatterPoint(missing_fraction=r.missing_fraction, value=r.value(metric), mask_type=r.mask_type,
                           image_id=r.image_id)
              for r in ok if r.value(metric) is not None]
    return sorted(points, key=lambda p: (p.missing_fraction, p.image_id))


def _delta(a: Optional[float], b: Optional[float]) -> Optional[float]:
    if a is None or b is None:
        return None
    if a == b:
        return 0.0  # also covers inf == inf
    return b - a


def compare_runs(run_a: List[MetricRecord], run_b: List[MetricRecord]) -> RunComparison:
    """Pair records by image id over the shared subset; delta = run_b - run_a"""
    by_a = {r.image_id: r for r in _ok(run_a)}
    by_b = {r.image_id: r for r in _ok(run_b)}
    shared = sorted(set(by_a) & set(by_b))
    if not shared:
        raise EmptyInputError("the two runs share no scored image id")

    plugins = set(_plugin_names([by_a[i] for i in shared])) & set(_plugin_names([by_b[i] for i in shared]))
    metrics = metric_order([by_a[i] for i in shared])
    metrics = [m for m in metrics if m in NATIVE_METRICS or m in plugins]

    rows = []
    for image_id in shared:
        a, b = by_a[image_id], by_b[image_id]
        rows.append(ComparisonRow(image_id=image_id, run_a=a, run_b=b,
                                  deltas={m: _delta(a.value(m), b.value(m)) for m in metrics}))

    summary = {}
    for metric in metrics:
        values = [row.deltas[metric] for row in rows if row.deltas[metric] is not None]
        summary[metric], _ = _summarize(values, f"delta {metric}")
    return RunComparison(metrics=metrics, rows=rows, summary=summary)


# ----------------------------------------------------------------------------
# Writers and readers
# ----------------------------------------------------------------------------
def _csv_text(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, lineterminator="\n")


def records_to_csv(records: List[MetricRecord], path=None) -> str:
    plugins = _plugin_names(records)
    rows = []
    for r in sorted(records, key=lambda r: r.image_id):
        row = {c: getattr(r, c) for c in RECORD_COLUMNS}
        row.update({p: r.plugin_values.get(p) for p in plugins})
        row.update({"status": r.status, "error": r.error})
        rows.append(row)
    text = _csv_text(pd.DataFrame(rows, columns=RECORD_COLUMNS + plugins + TRAILING_COLUMNS))
    if path is not None:
        write_text(path, text)
    return text


def records_from_csv(path) -> List[MetricRecord]:
    try:
        df = pd.read_csv(path, dtype={"image_id": str, "mask_type": str, "status": str, "error": str},
                         float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ManifestError(f"{path}: cannot read metric records ({e})") from e
    missing = [c for c in RECORD_COLUMNS if c not in df.columns]
    if missing:
        raise ManifestError(f"{path}: metric records lack columns {missing}")
    plugins = [c for c in df.columns if c not in RECORD_COLUMNS + TRAILING_COLUMNS]
    records = []
    for row in df.to_dict(orient="records"):
        clean = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()}
        try:
            records.append(MetricRecord(
                **{c: clean.get(c) for c in RECORD_COLUMNS},
                plugin_values={p: float(clean[p]) for p in plugins if clean.get(p) is not None},
                status=clean.get("status") or "ok",
                error=clean.get("error"),
            ))
        except ValidationError as e:
            raise ManifestError(f"{path}: invalid record for '{clean.get('image_id')}': {e}") from e
    return records


def records_to_json(records: List[MetricRecord], path=None) -> str:
    text = canonical_json([r.model_dump(mode="json") for r in sorted(records, key=lambda r: r.image_id)])
    if path is not None:
        write_text(path, text)
    return text


def table_to_frame(table: MaskTypeTable) -> pd.DataFrame:
    rows = []
    for row in table.rows:
        out = {"mask_type": row.mask_type, "count": row.count}
        for metric in table.metric_order:
            stats = row.metrics.get(metric)
            out[f"{metric}_mean"] = stats.mean if stats else None
            out[f"{metric}_std"] = stats.std if stats else None
            out[f"{metric}_n"] = stats.n if stats else 0
            out[f"{metric}_excluded"] = row.excluded.get(metric, 0)
        rows.append(out)
    return pd.DataFrame(rows)


def table_to_csv(table: MaskTypeTable, path=None) -> str:
    text = _csv_text(table_to_frame(table))
    if path is not None:
        write_text(path, text)
    return text


def _cell(stats, excluded: int, digits: int) -> str:
    if stats is None:
        return f"inf ({excluded} excluded)" if excluded else "-"
    text = f"{stats.mean:.{digits}f} ± {stats.std:.{digits}f}"
    return text + (f" ({excluded} inf excluded)" if excluded else "")


def table_to_text(table: MaskTypeTable, title: Optional[str] = None, digits: int = 2) -> str:
    rows = []
    for row in table.rows:
        out = {"Mask Type": MASK_TYPE_LABELS[row.mask_type], "N": row.count}
        for metric in table.metric_order:
            out[metric.upper()] = _cell(row.metrics.get(metric), row.excluded.get(metric, 0), digits)
        rows.append(out)
    body = pd.DataFrame(rows).to_string(index=False)
    return (f"{title}\n" if title else "") + body + "\n"


def scatter_to_csv(points: List[ScatterPoint], path=None) -> str:
    df = pd.DataFrame([p.model_dump() for p in points], columns=["missing_fraction", "value", "mask_type", "image_id"])
    text = _csv_text(df)
    if path is not None:
        write_text(path, text)
    return text


def comparison_to_csv(comparison: RunComparison, path=None) -> str:
    rows = []
    for row in comparison.rows:
        out = {"image_id": row.image_id}
        for metric in comparison.metrics:
            out[f"{metric}_a"] = row.run_a.value(metric)
            out[f"{metric}_b"] = row.run_b.value(metric)
            out[f"{metric}_delta"] = row.deltas[metric]
        rows.append(out)
    text = _csv_text(pd.DataFrame(rows))
    if path is not None:
        write_text(path, text)
    return text


def comparison_summary_text(comparison: RunComparison, digits: int = 4) -> str:
    lines = [f"shared images: {len(comparison.rows)}"]
    for metric in comparison.metrics:
        stats = comparison.summary.get(metric)
        value = "-" if stats is None else f"{stats.mean:.{digits}f} ± {stats.std:.{digits}f} (n={stats.n})"
        lines.append(f"delta {metric}: {value}")
    return "\n".join(lines) + "\n"


def table_to_dict(table: MaskTypeTable) -> Dict:
    return table.model_dump(mode="json")
