"""``fershape`` command line: extract, train, predict, evaluate and synth.

Exit codes: 0 success, 1 usage, 2 I/O, 3 data, 4 feature layout mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .contour import SPECTRUM_MODES
from .errors import FershapeError, LayoutMismatchError
from .evaluation import DEFAULT_C_GRID, DEFAULT_GAMMA_GRID, FOLD_MODES, EvalConfig, confusion, evaluate
from .geometry import CONTOUR_SOURCES
from .pipeline import (
    ExtractionConfig,
    FeatureMatrix,
    build_feature_matrix,
    read_feature_csv,
    write_feature_csv,
)
from .regions import SCHEMES, RegionMap, default_region_map
from .svm import check_layout, load_model, ova_train, save_model
from .synth import write_synthetic_dataset

log = logging.getLogger("fershape")

EXIT_USAGE, EXIT_IO, EXIT_DATA, EXIT_LAYOUT = 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0 or not np.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _float_list(text):
    try:
        values = tuple(_positive_float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated positive numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("grid must not be empty")
    return values


def _add_extraction(p):
    g = p.add_argument_group("extraction")
    g.add_argument("--scheme", choices=sorted(SCHEMES), default="ibug68")
    g.add_argument("--region-map", type=Path, help="JSON region map (default: built-in map for --scheme)")
    g.add_argument("--contour-source", choices=CONTOUR_SOURCES, default="fitted_ellipse")
    g.add_argument("--contour-points", type=_positive_int, default=64)
    g.add_argument("--harmonics", type=_positive_int, default=10)
    g.add_argument("--spectrum-mode", choices=SPECTRUM_MODES, default="spectrum_vector")
    g.add_argument("--radial-freqs", type=_positive_int, default=4)
    g.add_argument("--angular-freqs", type=_positive_int, default=9)
    g.add_argument("--resolution", type=_positive_int, default=64)
    g.add_argument("--margin", type=int, default=2)
    g.add_argument("--strict", action="store_true", help="abort on the first sample that fails")
    g.add_argument("--workers", type=_positive_int, default=1)
    g.add_argument("--dump-masks", type=Path, metavar="DIR", help="write region masks as PGM files")


def _add_svm(p):
    p.add_argument("--C", type=_positive_float, default=1.0)
    p.add_argument("--gamma", type=_positive_float, help="RBF width (default: 1 / n_features)")
    p.add_argument("--tol", type=_positive_float, default=1e-3)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fershape", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="landmark manifest -> feature CSV")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_extraction(p)

    p = sub.add_parser("train", help="features or manifest -> model file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--features", type=Path)
    src.add_argument("--manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    _add_svm(p)
    _add_extraction(p)

    p = sub.add_parser("predict", help="model + features or manifest -> prediction CSV")
    p.add_argument("--model", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--features", type=Path)
    src.add_argument("--manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    _add_extraction(p)

    p = sub.add_parser("evaluate", help="cross-validated grid search and confusion report")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--features", type=Path)
    src.add_argument("--manifest", type=Path)
    p.add_argument("--out", type=Path, required=True, help="report directory")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--mode", choices=FOLD_MODES, default="stratified")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--C-grid", type=_float_list, default=DEFAULT_C_GRID)
    p.add_argument("--gamma-grid", type=_float_list, default=DEFAULT_GAMMA_GRID)
    p.add_argument("--tol", type=_positive_float, default=1e-3)
    p.add_argument("--no-six-class", action="store_true", help="skip the rerun without neutral samples")
    _add_extraction(p)

    p = sub.add_parser("synth", help="write a synthetic landmark dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--classes", type=_positive_int, default=7)
    p.add_argument("--per-class", type=_positive_int, default=30)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=42)
    return parser


def _extraction(args) -> ExtractionConfig:
    try:
        return ExtractionConfig(
            contour_source=args.contour_source,
            contour_points=args.contour_points,
            n_harmonics=args.harmonics,
            spectrum_mode=args.spectrum_mode,
            radial_freqs=args.radial_freqs,
            angular_freqs=args.angular_freqs,
            resolution=args.resolution,
            margin=args.margin,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _region_map(args) -> RegionMap:
    if args.region_map is not None:
        rm = RegionMap.load(args.region_map)
        if rm.scheme != args.scheme:
            log.info("region map scheme %s overrides --scheme %s", rm.scheme, args.scheme)
        return rm
    return default_region_map(args.scheme)


def _extract(args, manifest, config=None, region_map=None) -> FeatureMatrix:
    config = config or _extraction(args)
    region_map = region_map or _region_map(args)
    fm = build_feature_matrix(manifest, region_map, config, strict=args.strict,
                              workers=args.workers, dump_masks=args.dump_masks)
    for sid, err in fm.failures:
        print(f"failed {sid}: {err}", file=sys.stderr)
    return fm


def _extraction_echo(config: ExtractionConfig, region_map: RegionMap) -> dict:
    return {"config": config.to_dict(), "region_map": region_map.to_dict()}


def cmd_extract(args) -> int:
    fm = _extract(args, args.manifest)
    write_feature_csv(args.out, fm)
    print(f"extracted {len(fm)} samples, {fm.X.shape[1]} features, {len(fm.failures)} failures -> {args.out}")
    return EXIT_DATA if fm.failures else 0


def cmd_train(args) -> int:
    extraction = None
    if args.features is not None:
        fm = read_feature_csv(args.features)
    else:
        config, region_map = _extraction(args), _region_map(args)
        fm = _extract(args, args.manifest, config, region_map)
        extraction = _extraction_echo(config, region_map)
    if len(fm) == 0:
        raise FershapeError("no usable training samples")
    gamma = args.gamma if args.gamma is not None else 1.0 / fm.X.shape[1]
    model = ova_train(fm.X, fm.labels, args.C, gamma, tol=args.tol, standardize=True,
                      layout_fingerprint=fm.fingerprint, extraction=extraction)
    save_model(model, args.out)
    acc = float(np.mean(np.array(model.predict(fm.X)) == np.array(fm.labels)))
    unconverged = sum(not m.converged for m in model.binary_models)
    print(f"trained on {len(fm)} samples, C={args.C:g} gamma={gamma:g}, "
          f"training accuracy {100 * acc:.1f}% -> {args.out}")
    if unconverged:
        print(f"warning: {unconverged} binary machine(s) hit the iteration limit", file=sys.stderr)
    return EXIT_DATA if fm.failures else 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    if args.features is not None:
        fm = read_feature_csv(args.features)
    else:
        echo = model.extraction or {}
        if "config" in echo:
            config = ExtractionConfig.from_dict(echo["config"])
            region_map = RegionMap.from_dict(echo["region_map"])
        else:
            config, region_map = _extraction(args), _region_map(args)
        fm = _extract(args, args.manifest, config, region_map)
    check_layout(model, fm.fingerprint)
    scores = model.decision_matrix(fm.X) if len(fm) else np.zeros((0, len(model.classes)))
    with args.out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "predicted", *(f"decision_{c}" for c in model.classes)])
        for sid, row in zip(fm.sample_ids, scores):
            writer.writerow([sid, model.classes[int(np.argmax(row))], *map(repr, row.tolist())])
    predicted = [model.classes[int(np.argmax(r))] for r in scores]
    if len(fm):
        acc = confusion(fm.labels, predicted, model.classes).accuracy
        print(f"predicted {len(fm)} samples, accuracy against manifest labels {100 * acc:.1f}% -> {args.out}")
    return EXIT_DATA if fm.failures else 0


def cmd_evaluate(args) -> int:
    if args.folds < 2:
        raise UsageError("--folds must be >= 2")
    config = EvalConfig(k=args.folds, mode=args.mode, seed=args.seed, C_grid=tuple(args.C_grid),
                        gamma_grid=tuple(args.gamma_grid), tol=args.tol,
                        six_class=not args.no_six_class)
    extraction, region_map = _extraction(args), None
    if args.features is not None:
        fm = read_feature_csv(args.features)
    else:
        region_map = _region_map(args)
        fm = _extract(args, args.manifest, extraction, region_map)
    report = evaluate(fm, config, extraction=extraction, region_map=region_map)
    report.write(args.out)
    line = f"seed {args.seed}: 7-class accuracy {100 * report.seven.accuracy:.1f}%"
    if report.six is not None:
        line += f", 6-class accuracy {100 * report.six.accuracy:.1f}%"
    print(f"{line} -> {args.out}")
    return EXIT_DATA if report.partial else 0


def cmd_synth(args) -> int:
    if args.classes < 2 or args.classes > 7:
        raise UsageError("--classes must be between 2 and 7")
    if args.noise < 0:
        raise UsageError("--noise must be >= 0")
    manifest = write_synthetic_dataset(args.out, args.classes, args.per_class, args.noise, args.seed)
    params = {"classes": args.classes, "per_class": args.per_class, "noise": args.noise, "seed": args.seed}
    (Path(args.out) / "synth.json").write_text(json.dumps(params, sort_keys=True) + "\n", encoding="utf-8")
    print(f"seed {args.seed}: wrote {args.classes * args.per_class} samples -> {manifest}")
    return 0


COMMANDS = {
    "extract": cmd_extract,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"fershape: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LayoutMismatchError as exc:
        print(f"fershape: layout mismatch: {exc}", file=sys.stderr)
        return EXIT_LAYOUT
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"fershape: I/O error: {exc.strerror or exc} {name}".rstrip(), file=sys.stderr)
        return EXIT_IO
    except (FershapeError, ValueError) as exc:
        print(f"fershape: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
