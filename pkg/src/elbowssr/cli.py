"""Command-line entry point: ``elbowssr {refine,measure,evaluate,simulate,prompts}``.

Errors are reported as a single line on stderr::

    elbowssr: error code=<code> message="<text>"

Exit status is 0 on success, 1 on a runtime error (or any failed image in
``refine``), and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .errors import ElbowSSRError, InvalidConfigurationError
from .harness import DEFAULT_RHOS, HarnessConfig, run_experiment
from .io import (
    format_landmark_table,
    load_fold_specs,
    load_heatmaps,
    load_landmark_table,
    load_run_config,
    participant_of,
    save_landmark_table,
)
from .metrics import JOINT_SPACE, LandmarkSet, evaluate_folds, joint_space_length
from .prompts import DuplicatePromptWarning, generate_prompts
from .ssr import build_reference_bank, per_image_bank_factory, refine_batch


class UsageError(Exception):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(code, message, stream):
    print(f"elbowssr: error code={code} message={json.dumps(str(message))}", file=stream)


def _write_text(path, text, stdout):
    if path is None or path == "-":
        stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="\n")


def _overrides(args, mapping):
    return {key: getattr(args, attr, None) for attr, key in mapping.items()}


def _add_run_flags(p):
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("--mm-per-pixel", type=float)


def cmd_refine(args, stdout, stderr):
    cfg = load_run_config(args.config, _overrides(args, {
        "r": "decode.r", "D": "decode.D", "max_candidates": "decode.max_candidates",
        "scale_convention": "decode.scale_convention",
        "fraction": "ssr.fraction", "seed": "ssr.seed", "budget": "ssr.budget",
        "reference": "paths.reference",
    }) | ({"ssr.enabled": False} if args.no_ssr else {})
      | ({"ssr.resample_per_image": True} if args.resample_per_image else {}))
    for p in args.heatmaps:
        if not Path(p).exists():
            raise InvalidConfigurationError(f"heatmap file {p} does not exist")
    stacks = {Path(p).stem: load_heatmaps(p) for p in args.heatmaps}
    if len(stacks) != len(args.heatmaps):
        raise InvalidConfigurationError("heatmap file stems (image ids) must be unique")
    bank, factory = None, None
    if cfg.ssr.enabled:
        ref = cfg.paths.get("reference")
        if ref is None:
            raise InvalidConfigurationError("SSR needs --reference (or paths.reference); use --no-ssr to skip")
        training = load_landmark_table(ref)
        if cfg.ssr.resample_per_image:
            factory = per_image_bank_factory(training, cfg.ssr.fraction, cfg.ssr.seed)
        else:
            bank = build_reference_bank(training, cfg.ssr.fraction, cfg.ssr.seed)
    results, failures = refine_batch(stacks, cfg.decode, tuple(args.image_size), bank=bank,
                                     bank_factory=factory, budget=cfg.ssr.budget,
                                     use_ssr=cfg.ssr.enabled)
    sets = [LandmarkSet(i, r.points) for i, r in results.items()]
    if args.out in (None, "-"):
        stdout.write(format_landmark_table(sets))
    else:
        save_landmark_table(args.out, sets)
    for image_id, exc in failures.items():
        code = getattr(exc, "code", "error")
        print(f"elbowssr: image-failed id={image_id} code={code} message={json.dumps(str(exc))}",
              file=stderr)
    return 1 if failures else 0


def cmd_measure(args, stdout, stderr):
    cfg = load_run_config(args.config, _overrides(args, {"mm_per_pixel": "scale.mm_per_pixel"}))
    sets = load_landmark_table(args.landmarks)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["image_id", "length_px", "length_mm"])
    for s in sets:
        px = joint_space_length(s.points, *JOINT_SPACE)
        w.writerow([s.image_id, repr(px), repr(px * cfg.scale.mm_per_pixel)])
    _write_text(args.out, buf.getvalue(), stdout)
    return 0


def _fold_membership(args, image_ids):
    if not args.folds:
        return {"all": list(image_ids)}
    participant = {}
    if args.participant_map:
        with open(args.participant_map, encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != ["image_id", "participant_id"]:
                raise InvalidConfigurationError("participant map header must be image_id,participant_id")
            participant = {row["image_id"]: row["participant_id"] for row in reader}
    folds = {}
    for spec in load_fold_specs(args.folds):
        test = set(spec.test)
        folds[spec.fold] = [i for i in image_ids
                            if participant.get(i, participant_of(i, args.participant_sep)) in test]
        if not folds[spec.fold]:
            raise InvalidConfigurationError(f"fold {spec.fold} selects no images")
    return folds


def cmd_evaluate(args, stdout, stderr):
    cfg = load_run_config(args.config, _overrides(args, {"mm_per_pixel": "scale.mm_per_pixel"}))
    preds = load_landmark_table(args.predictions)
    gts = load_landmark_table(args.ground_truth)
    folds = _fold_membership(args, sorted(g.image_id for g in gts))
    report = evaluate_folds(preds, gts, folds, cfg.scale, ddof=args.ddof)
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold", "metric", "mean", "std"])
        for fold, metric, mean, std in report.rows():
            w.writerow([fold, metric, repr(mean), repr(std)])
        _write_text(args.csv, buf.getvalue(), stdout)
    text = json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n"
    if args.json or not args.csv:
        _write_text(args.json, text, stdout)
    return 0


def cmd_simulate(args, stdout, stderr):
    data = {}
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            data = json.load(f)
    for attr, key in (("seed", "seed"), ("n_test", "n_test"), ("n_train", "n_train")):
        if getattr(args, attr) is not None:
            data[key] = getattr(args, attr)
    cfg = HarnessConfig.from_dict(data)
    rhos = args.rho if args.rho else DEFAULT_RHOS
    result = run_experiment(cfg, rhos, dump_dir=args.dump_heatmaps)
    _write_text(args.out, result.to_csv(), stdout)
    if args.summary:
        _write_text(args.summary, result.to_json(), stdout)
    return 0


def cmd_prompts(args, stdout, stderr):
    sets = load_landmark_table(args.landmarks)
    if args.image_id is not None:
        sets = [s for s in sets if s.image_id == args.image_id]
        if not sets:
            raise InvalidConfigurationError(f"image {args.image_id!r} not in {args.landmarks}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DuplicatePromptWarning)
        prompts = {s.image_id: generate_prompts(s) for s in sets}
    print("elbowssr: warning code=duplicate-negative message=\"negative prompts 1 and 2 coincide\"",
          file=stderr)
    if args.image_id is not None:
        payload = prompts[args.image_id].to_payload()
    else:
        payload = {i: p.to_payload() for i, p in sorted(prompts.items())}
    _write_text(args.out, json.dumps(payload, indent=2) + "\n", stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="elbowssr", description="Landmark refinement and joint-space measurement.")
    parser.add_argument("--version", action="version", version=f"elbowssr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("refine", help="decode heatmaps (.hmt) into refined landmarks")
    p.add_argument("heatmaps", nargs="+", help=".hmt files; the file stem is the image id")
    p.add_argument("--reference", help="training landmark CSV for the reference bank")
    p.add_argument("--image-size", type=int, nargs=2, metavar=("W", "H"), required=True)
    p.add_argument("--out", "-o", help="output landmark CSV (default stdout)")
    p.add_argument("--no-ssr", action="store_true", help="plain argmax + sub-pixel pipeline")
    p.add_argument("--resample-per-image", action="store_true",
                   help="draw a fresh reference bank for every image")
    p.add_argument("--r", type=float, help="candidate value threshold (fraction of channel max)")
    p.add_argument("--D", type=float, help="candidate separation in heatmap px")
    p.add_argument("--max-candidates", type=int)
    p.add_argument("--scale-convention", choices=("udp", "plain"))
    p.add_argument("--fraction", type=float, help="fraction of training shapes in the bank")
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int, help="maximum number of candidate combinations")
    _add_run_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("measure", help="joint-space length (landmarks 1-2) per image")
    p.add_argument("landmarks")
    p.add_argument("--out", "-o")
    _add_run_flags(p)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("evaluate", help="MAE / EDE report against ground truth")
    p.add_argument("predictions")
    p.add_argument("ground_truth")
    p.add_argument("--folds", help="fold-spec JSON (object or list of objects)")
    p.add_argument("--participant-map", help="CSV image_id,participant_id")
    p.add_argument("--participant-sep", default="_",
                   help="without a map, the participant is the image id prefix before this separator")
    p.add_argument("--ddof", type=int, default=0, help="0 = population std (default), 1 = sample std")
    p.add_argument("--json", help="report JSON path (default stdout)")
    p.add_argument("--csv", help="report CSV path")
    _add_run_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="synthetic naive-vs-SSR experiment")
    p.add_argument("--config", help="harness configuration JSON")
    p.add_argument("--rho", type=float, nargs="+", help="spurious-peak rates (default 0 0.1 0.3 0.6)")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--n-train", type=int)
    p.add_argument("--out", "-o", help="experiment CSV (default stdout)")
    p.add_argument("--summary", help="JSON summary path")
    p.add_argument("--dump-heatmaps", help="directory for .hmt dumps of every test image")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("prompts", help="segmentation point prompts from eight landmarks")
    p.add_argument("landmarks")
    p.add_argument("--image-id", help="emit the bare payload for one image")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_prompts)
    return parser


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _fail("usage", exc, stderr)
        return 2
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return args.func(args, stdout, stderr)
    except ElbowSSRError as exc:
        _fail(exc.code, exc, stderr)
    except FileNotFoundError as exc:
        _fail("missing-file", exc, stderr)
    except (OSError, json.JSONDecodeError) as exc:
        _fail("io", exc, stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
