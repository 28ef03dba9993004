import argparse
import json
import shutil
import sys
import tempfile
from pathlib import Path
from typing import NamedTuple

import yaml
from pydantic import ValidationError

from analysis import (comparison_summary_text, comparison_to_csv, compare_runs, masked_baseline, per_mask_type_table,
                      records_from_csv, records_to_csv, records_to_json, scatter_series, scatter_to_csv, table_to_csv,
                      table_to_dict, table_to_text)
from config import Config
from dataset import (class_stats_to_csv, compute_class_stats, filter_by_coverage, load_label_mapping, select_classes,
                     three_way_split, translate_labels)
from degrade import degrade_pair
from exceptions import BenchError, ManifestError, MaskParamsError
from mask_generator import generate_mask, missing_fraction, normalize_type
from metrics import apply_plugins, evaluate_run
from models import (SPLIT_TAGS, GeneratorParams, ImageEntry, PluginSpec, RunLevel, RunManifest, canonical_json,
                    resolve_path)
from utils.dataloaders import LoadImages, read_id_list
from utils.general import colorstr, parallel_map, relpath, write_text
from utils.image_io import load_image, load_mask, load_semantic, save_mask, save_semantic
from utils.logger_config import LOGGER, set_logging
from utils.rng import MAX_SEED, SeededRng

MASK_CHOICES = ("box", "ca", "freeform", "mixed")
RUN_RECORD = "run_record.json"


class GeneratorSettings(NamedTuple):
    params: GeneratorParams
    randomize_ca: bool


# ----------------------------------------------------------------------------
# Argument types
# ----------------------------------------------------------------------------
def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed '{text}'") from None
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64 - 1], got {value}")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer '{text}'") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _unit_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number '{text}'") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {value}")
    return value


def _plugin(text):
    try:
        return PluginSpec.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _add_generator_flags(p):
    p.add_argument("--params", type=Path, default=None, help="YAML file overriding generator parameters (box, brush, ca)")
    p.add_argument("--ca-downscale", type=int, choices=Config.CA_DOWNSCALE_CHOICES, default=None,
                   help="pin the CA downscale factor (default: drawn per mask)")
    p.add_argument("--ca-steps", type=int, choices=Config.CA_STEP_CHOICES, default=None,
                   help="pin the number of CA steps (default: drawn per mask)")
    p.add_argument("--ca-density", type=_unit_float, default=None, help="initial CA fill density")
    p.add_argument("--ca-dilation", type=int, default=None, help="CA dilation radius after upscaling")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0, help="64-bit run seed")
    common.add_argument("--jobs", type=_positive_int, default=Config.JOBS, help="worker count")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="per-image logging and progress bars")
    verbosity.add_argument("--quiet", action="store_true", help="warnings and errors only")

    parser = argparse.ArgumentParser(prog="inpaint-bench", description="Extreme image inpainting benchmark toolkit")
    parser.add_argument("--version", action="version", version=f"{Config.NAME} {Config.VERSION}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    commands = {}

    p = sub.add_parser("genmask", parents=[common], help="generate mask PNGs")
    p.add_argument("--type", dest="mask_type", choices=MASK_CHOICES, required=True)
    p.add_argument("--width", type=_positive_int, required=True)
    p.add_argument("--height", type=_positive_int, required=True)
    p.add_argument("--count", type=_positive_int, default=1)
    _add_generator_flags(p)
    p.set_defaults(handler=cmd_genmask)
    commands["genmask"] = p

    p = sub.add_parser("degrade", parents=[common], help="build degraded inputs and a run manifest")
    p.add_argument("--images", type=Path, required=True, help="directory of ground-truth PNGs")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--masks", type=Path, help="directory of mask PNGs, paired in sorted order")
    source.add_argument("--gen", choices=MASK_CHOICES, help="generate one mask per image")
    p.add_argument("--mask-type", choices=MASK_CHOICES[:3], default=None,
                   help="family of the masks in --masks when it has no masks.json")
    p.add_argument("--track", type=int, choices=(1, 2), default=1)
    p.add_argument("--semantics", type=Path, default=None, help="directory of <id>.png semantic maps (track 2)")
    _add_generator_flags(p)
    p.set_defaults(handler=cmd_degrade)
    commands["degrade"] = p

    p = sub.add_parser("filter", parents=[common], help="select frequent classes and keep well-covered images")
    p.add_argument("--semantics", type=Path, required=True)
    p.add_argument("--k-image", type=_positive_int, required=True)
    p.add_argument("--k-pixel", type=_positive_int, required=True)
    p.add_argument("--threshold", type=_unit_float, default=Config.COVERAGE_THRESHOLD)
    p.add_argument("--mapping", type=Path, default=None, help="two-column label mapping applied before counting")
    p.add_argument("--images", type=Path, default=None, help="ground-truth PNGs; also write a manifest of the kept ids")
    p.set_defaults(handler=cmd_filter)
    commands["filter"] = p

    p = sub.add_parser("split", parents=[common], help="three-way split of image ids")
    p.add_argument("--ids", type=Path, required=True, help="text file, one image id per line")
    p.add_argument("--manifest", type=Path, default=None, help="also partition this run manifest")
    p.set_defaults(handler=cmd_split)
    commands["split"] = p

    p = sub.add_parser("evaluate", parents=[common], help="score a submission against a run manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--outputs", type=Path, required=True, help="directory of <id>.png inpainted outputs")
    p.add_argument("--plugin", type=_plugin, action="append", default=[], help="name=command, repeatable")
    p.add_argument("--baseline", action="store_true", help="also score the masked inputs themselves")
    p.set_defaults(handler=cmd_evaluate)
    commands["evaluate"] = p

    p = sub.add_parser("report", parents=[common], help="tables, scatter series and run comparisons")
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--by-mask-type", action="store_true")
    p.add_argument("--scatter", action="append", default=[], metavar="METRIC")
    p.add_argument("--compare", type=Path, default=None, metavar="OTHER_CSV")
    p.set_defaults(handler=cmd_report)
    commands["report"] = p

    return parser, commands


def _check_args(args):
    if args.command == "degrade":
        if args.track == 2 and args.semantics is None:
            return "--track 2 needs --semantics"
        if args.track == 1 and args.semantics is not None:
            return "--semantics is only used with --track 2"
        if args.gen is not None and args.mask_type is not None:
            return "--mask-type only applies to --masks"
    return None


# ----------------------------------------------------------------------------
# Shared helpers
# ----------------------------------------------------------------------------
def load_generator_settings(args) -> GeneratorSettings:
    raw = {}
    if getattr(args, "params", None) is not None:
        try:
            with open(args.params, encoding="utf-8") as f:
                raw = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise MaskParamsError(f"{args.params}: cannot read generator parameters ({e})") from e
        if not isinstance(raw, dict):
            raise MaskParamsError(f"{args.params}: expected a mapping with keys box, brush, ca")

    ca = dict(raw.get("ca") or {})
    pinned = "downscale" in ca or "steps" in ca
    for key, flag in (("downscale", "ca_downscale"), ("steps", "ca_steps"), ("init_density", "ca_density"),
                      ("dilation_radius", "ca_dilation")):
        value = getattr(args, flag, None)
        if value is not None:
            ca[key] = value
            pinned |= key in ("downscale", "steps")
    if ca:
        raw = {**raw, "ca": ca}

    try:
        params = GeneratorParams(**raw)
    except (ValidationError, TypeError) as e:
        raise MaskParamsError(f"invalid generator parameters: {e}") from e
    return GeneratorSettings(params, Config.CA_RANDOMIZE and not pinned)


def _images(path, what="images"):
    try:
        files = LoadImages(path)
    except (FileNotFoundError, ValueError) as e:
        raise ManifestError(f"{what}: {e}") from e
    if len(files) == 0:
        raise ManifestError(f"{what}: no PNG files in {path}")
    return list(files)


def _mask_sources(args, ids):
    """image id -> (mask path, mask type, seed, stream, params), paired in sorted order"""
    index = args.masks / "masks.json"
    if index.is_file():
        try:
            entries = sorted(json.loads(index.read_text(encoding="utf-8")), key=lambda e: e["file"])
            sources = [(args.masks / e["file"], normalize_type(e["mask_type"]), e.get("seed"), e.get("stream"),
                        e.get("params")) for e in entries]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ManifestError(f"{index}: invalid mask index ({e})") from e
    else:
        if args.mask_type is None:
            raise ManifestError(f"{args.masks} has no masks.json; give the mask family with --mask-type")
        mask_type = normalize_type(args.mask_type)
        sources = [(path, mask_type, None, None, None) for _, path in _images(args.masks, "masks")]

    if len(sources) < len(ids):
        raise ManifestError(f"{len(ids)} images but only {len(sources)} masks in {args.masks}")
    if len(sources) > len(ids):
        LOGGER.warning(f"{len(sources) - len(ids)} mask(s) in {args.masks} left unused")
    return dict(zip(ids, sources))


def run_record(args, settings, status, error=None):
    """Resolved arguments with paths relative to --out; nothing machine-dependent"""
    arguments = {}
    for key, value in sorted(vars(args).items()):
        if key in ("handler", "jobs", "verbose", "quiet"):
            continue
        if isinstance(value, Path):
            value = relpath(value, args.out)
        elif key == "plugin":
            value = [f"{p.name}={p.command}" for p in value]
        arguments[key] = value
    return {
        "toolkit": Config.NAME,
        "version": Config.VERSION,
        "command": args.command,
        "seed": args.seed,
        "rng_algorithm": SeededRng.ALGORITHM,
        "arguments": arguments,
        "generator": None if settings is None else {"params": settings.params.model_dump(mode="json"),
                                                    "randomize_ca": settings.randomize_ca},
        "config": Config.log_config(),
        "status": status,
        "error": error,
    }


# ----------------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------------
def cmd_genmask(args, settings):
    out = args.out
    masks_dir = out / "masks"
    masks_dir.mkdir(parents=True, exist_ok=True)

    def make(i):
        stream = f"genmask/{i}"
        gen = generate_mask(args.mask_type, args.width, args.height, settings.params, SeededRng(args.seed, stream),
                            randomize_ca=settings.randomize_ca)
        file = f"mask_{i:05d}.png"
        save_mask(gen.mask, masks_dir / file)
        return {"file": file, "mask_type": gen.mask_type, "seed": args.seed, "stream": stream, "params": gen.params,
                "missing_fraction": missing_fraction(gen.mask)}

    entries = parallel_map(make, range(args.count), jobs=args.jobs, desc="Generating masks")
    write_text(masks_dir / "masks.json", canonical_json(entries))
    LOGGER.info(f"Wrote {len(entries)} {args.mask_type} masks to {masks_dir}")


def cmd_degrade(args, settings):
    out = args.out
    images = _images(args.images)
    sources = _mask_sources(args, [image_id for image_id, _ in images]) if args.masks is not None else None

    def degrade_one(item):
        image_id, gt_path = item
        try:
            gt = load_image(gt_path)
            semantic = load_semantic(args.semantics / f"{image_id}.png") if args.track == 2 else None
            if sources is None:
                stream = f"mask/{image_id}"
                gen = generate_mask(args.gen, gt.width, gt.height, settings.params, SeededRng(args.seed, stream),
                                    randomize_ca=settings.randomize_ca)
                mask, mask_type, seed, params = gen.mask, gen.mask_type, args.seed, gen.params
            else:
                mask_path, mask_type, seed, stream, params = sources[image_id]
                mask = load_mask(mask_path)
            record = degrade_pair(gt, semantic, mask, track=args.track)
            return record.write(image_id, gt_path, out, mask_type, seed=seed, stream=stream, params=params)
        except BenchError as e:
            LOGGER.error(f"Image '{image_id}': {e}")
            raise

    results = parallel_map(degrade_one, images, jobs=args.jobs, desc="Degrading")
    manifest = RunManifest(images=[entry for entry, _ in results],
                           mask_assignments=[assignment for _, assignment in results],
                           track=args.track)
    manifest.save(out / "manifest.json")
    LOGGER.info(f"Degraded {len(results)} images (track {args.track}), manifest {out / 'manifest.json'}")


def _kept_manifest(kept, semantic_paths, translated, args) -> RunManifest:
    """Track 2 manifest of the kept ids; semantic maps point at the translated copies when a mapping ran"""
    images = dict(_images(args.images))
    missing = [image_id for image_id in kept if image_id not in images]
    if missing:
        raise ManifestError(f"kept ids without an image in {args.images}: {missing[:10]}")
    entries = []
    for image_id in kept:
        semantic = args.out / "semantics" / f"{image_id}.png" if translated else semantic_paths[image_id]
        entries.append(ImageEntry(id=image_id, image=relpath(images[image_id], args.out),
                                  semantic=relpath(semantic, args.out)))
    return RunManifest(images=entries, track=2)


def cmd_filter(args, settings):
    out = args.out
    files = _images(args.semantics, "semantic maps")
    mapping = load_label_mapping(args.mapping) if args.mapping is not None else None

    def load_one(item):
        image_id, path = item
        semantic, tally = load_semantic(path), {}
        if mapping is not None:
            semantic, tally = translate_labels(semantic, mapping)
            save_semantic(semantic, out / "semantics" / f"{image_id}.png")
        return image_id, semantic, tally

    if mapping is not None:
        (out / "semantics").mkdir(parents=True, exist_ok=True)
    loaded = parallel_map(load_one, files, jobs=args.jobs, desc="Reading maps")

    stats = compute_class_stats(semantic for _, semantic, _ in loaded)
    unmapped = {}
    if mapping is not None:
        stats = stats.without([mapping.unmapped_id])
        for _, _, tally in loaded:
            for c, n in tally.items():
                unmapped[c] = unmapped.get(c, 0) + n

    selected = select_classes(stats, args.k_image, args.k_pixel)
    kept = filter_by_coverage(((image_id, semantic) for image_id, semantic, _ in loaded), selected, args.threshold)

    class_stats_to_csv(stats, selected, out / "class_stats.csv")
    write_text(out / "classes.json", canonical_json({
        "classes": sorted(selected),
        "k_image": args.k_image,
        "k_pixel": args.k_pixel,
        "threshold": args.threshold,
        "n_images": stats.n_images,
        "n_kept": len(kept),
        "unmapped_pixels": {str(c): n for c, n in sorted(unmapped.items())},
    }))
    write_text(out / "kept.txt", "".join(f"{image_id}\n" for image_id in kept))
    if args.images is not None:
        _kept_manifest(kept, dict(files), mapping is not None, args).save(out / "manifest.json")
    LOGGER.info(f"{len(selected)} classes selected, kept {len(kept)}/{stats.n_images} images")


def cmd_split(args, settings):
    out = args.out
    try:
        ids = read_id_list(args.ids)
    except OSError as e:
        raise ManifestError(f"{args.ids}: cannot read id list ({e})") from e
    parts = dict(zip(SPLIT_TAGS, three_way_split(ids, SeededRng(args.seed, "split"))))

    write_text(out / "split.json", canonical_json({"seed": args.seed, "stream": "split",
                                                   "rng_algorithm": SeededRng.ALGORITHM, "parts": parts}))
    for tag, part in parts.items():
        write_text(out / f"{tag}.txt", "".join(f"{image_id}\n" for image_id in part))

    if args.manifest is not None:
        manifest = RunManifest.load(args.manifest)
        for tag, part in parts.items():
            manifest.subset(part, tag).rebased(args.manifest.parent, out).save(out / f"manifest_{tag}.json")
    LOGGER.info("Split sizes: " + ", ".join(f"{tag} {len(part)}" for tag, part in parts.items()))


def _stage(manifest, records, root, outputs_dir, staging: Path):
    # Plug-ins see <id>.png pairs of the scored images only
    gt_dir, out_dir = staging / "gt", staging / "outputs"
    gt_dir.mkdir()
    out_dir.mkdir()
    scored = {r.image_id for r in records if r.status == "ok"}
    for entry in manifest.images:
        if entry.id in scored:
            shutil.copyfile(resolve_path(entry.image, root), gt_dir / f"{entry.id}.png")
            shutil.copyfile(Path(outputs_dir) / f"{entry.id}.png", out_dir / f"{entry.id}.png")
    return gt_dir, out_dir


def cmd_evaluate(args, settings):
    out = args.out
    manifest = RunManifest.load(args.manifest)
    root = args.manifest.parent
    if not args.outputs.is_dir():
        raise ManifestError(f"{args.outputs}: outputs directory not found")

    records = evaluate_run(manifest, args.outputs, root, jobs=args.jobs)
    run_level = RunLevel()
    if args.plugin:
        with tempfile.TemporaryDirectory(prefix="inpaint-bench-") as staging:
            gt_dir, out_dir = _stage(manifest, records, root, args.outputs, Path(staging))
            records, run_level = apply_plugins(records, args.plugin, gt_dir, out_dir)

    records_to_csv(records, out / "records.csv")
    records_to_json(records, out / "records.json")
    write_text(out / "run_level.json", canonical_json(run_level.to_dict()))

    scored = sum(r.status == "ok" for r in records)
    if scored:
        table = per_mask_type_table(records)
        table_to_csv(table, out / "table.csv")
        write_text(out / "table.txt", table_to_text(table, title="Submission"))
    else:
        LOGGER.warning("No image could be scored; per-mask-type table skipped")

    if args.baseline:
        baseline = masked_baseline(manifest, root, jobs=args.jobs)
        table_to_csv(baseline, out / "baseline_table.csv")
        write_text(out / "baseline_table.txt", table_to_text(baseline, title="Masked Images"))
    LOGGER.info(f"Scored {scored}/{len(records)} images, {len(run_level.failures)} plugin failure(s)")


def cmd_report(args, settings):
    out = args.out
    records = records_from_csv(args.records)

    if args.by_mask_type or not (args.scatter or args.compare):
        table = per_mask_type_table(records)
        table_to_csv(table, out / "table.csv")
        write_text(out / "table.txt", table_to_text(table, title="Per mask type"))
        write_text(out / "table.json", canonical_json(table_to_dict(table)))

    for metric in args.scatter:
        scatter_to_csv(scatter_series(records, metric), out / f"scatter_{metric}.csv")

    if args.compare is not None:
        comparison = compare_runs(records, records_from_csv(args.compare))
        comparison_to_csv(comparison, out / "comparison.csv")
        write_text(out / "comparison.txt", comparison_summary_text(comparison))
    LOGGER.info(f"Report written to {out}")


# ----------------------------------------------------------------------------
# Entry point
# ----------------------------------------------------------------------------
def main(argv=None) -> int:
    parser, commands = build_parser()
    try:
        args = parser.parse_args(argv)
        problem = _check_args(args)
        if problem:
            commands[args.command].error(problem)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    set_logging(verbose=not args.quiet, debug=args.verbose)
    LOGGER.info(f"{colorstr(Config.NAME)} {Config.VERSION}: {args.command} (seed {args.seed})")
    if args.verbose:
        LOGGER.debug(f"Configuration: {Config.log_config()}")

    status, error, settings = "ok", None, None
    try:
        if args.command in ("genmask", "degrade"):
            settings = load_generator_settings(args)
        args.handler(args, settings)
    except (BenchError, OSError) as e:
        LOGGER.error(f"{args.command} failed: {e}")
        status, error = "error", str(e)

    try:
        write_text(args.out / RUN_RECORD, canonical_json(run_record(args, settings, status, error)))
    except OSError as e:
        LOGGER.error(f"Cannot write {RUN_RECORD}: {e}")
        return 1
    return 0 if status == "ok" else 1


if __name__ == "__main__":
    sys.exit(main())
