"""Command-line interface.

Subcommands:
  transform  print gamma-entmax distributions for logits read from stdin
  calibrate  fit a conformal threshold on a calibration CSV
  evaluate   score a calibrated predictor on a test CSV
  sweep      run a full multi-split experiment from a JSON config

Exit codes: 0 success, 2 parse/validation error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .activations import EntmaxConfig, entmax
from .conformal import CalibratedPredictor, calibrate, predict_sets
from .errors import EntconformError, ParseError, ValidationError
from .harness import ExperimentConfig, load_dataset, run_sweep
from .metrics import EvaluationRun, SizeBins, compute_report
from .scores import RapsParams, ScoreKind

_SCORE_CHOICES = ("sparsemax", "entmax", "log-margin", "inv-prob", "raps")


def _kind_from_args(args) -> ScoreKind:
    score = args.score.replace("-", "_")
    if score == "entmax":
        if args.gamma is None:
            raise ValidationError("--score entmax requires --gamma")
        return ScoreKind.entmax(args.gamma)
    if score == "raps":
        return ScoreKind.raps(
            RapsParams(
                lambda_reg=args.lambda_reg,
                k_reg=args.k_reg,
                randomized=args.randomized,
                rng_seed=args.seed,
            )
        )
    return ScoreKind(score)


def _read_logits_stdin() -> np.ndarray:
    """Logits from stdin CSV: either the dataset format or bare z0,z1,..."""
    import csv as _csv

    reader = _csv.reader(sys.stdin)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input: missing header", line=1) from None
    header = [h.strip() for h in header]
    if header and header[0] == "label":
        skip_label, width = True, len(header) - 1
    elif header == [f"z{i}" for i in range(len(header))]:
        skip_label, width = False, len(header)
    else:
        raise ParseError(
            "header must be label,z0,... or z0,z1,...", line=1
        )
    if width < 2:
        raise ParseError("need at least two classes", line=1)
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        values = row[1:] if skip_label else row
        if len(values) != width:
            raise ParseError(f"expected {width} score fields", line=lineno)
        try:
            rows.append([float(v) for v in values])
        except ValueError:
            raise ParseError(f"bad score value in {values!r}", line=lineno) from None
    return np.asarray(rows, dtype=np.float64).reshape(-1, width)


def _cmd_transform(args) -> int:
    logits = _read_logits_stdin()
    cfg = EntmaxConfig(gamma=args.gamma)
    if args.beta < 0.0:
        raise ValidationError(f"beta must be nonnegative, got {args.beta}")
    print(",".join(f"p{i}" for i in range(logits.shape[1])))
    for row in logits:
        dist = entmax(args.beta * row, cfg)
        print(",".join(f"{p:.6f}" for p in dist.probs))
    return 0


def _cmd_calibrate(args) -> int:
    data = load_dataset(args.input)
    kind = _kind_from_args(args)
    pred = calibrate(data, kind, args.alpha)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(pred.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"calibrated {kind.variant} on n={pred.calib_n}: q_hat={pred.q_hat}")
    return 0


def _cmd_evaluate(args) -> int:
    with open(args.predictor, "r", encoding="utf-8") as fh:
        pred = CalibratedPredictor.from_json_dict(json.load(fh))
    data = load_dataset(args.input)
    sets = predict_sets(data.logits, pred)
    run = EvaluationRun(
        sets=tuple(sets),
        labels=data.labels,
        alpha=pred.alpha,
        method_name=pred.score_kind.variant,
    )
    report = compute_report(run, SizeBins.default(data.num_classes))
    doc = {
        "method": pred.score_kind.variant,
        "alpha": pred.alpha,
        "n": data.n,
        **report.to_json_dict(),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"coverage={report.coverage:.4f} avg_set_size={report.avg_set_size:.4f}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = ExperimentConfig.from_json_file(args.config)
    out_dir = args.out_dir if args.out_dir is not None else cfg.output_path
    report_path, plot_path = run_sweep(cfg, out_dir)
    print(f"wrote {report_path} and {plot_path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entconform",
        description="Conformal prediction sets from sparse activations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="print entmax distributions for stdin logits")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.set_defaults(func=_cmd_transform)

    p = sub.add_parser("calibrate", help="fit a conformal threshold")
    p.add_argument("--input", required=True)
    p.add_argument("--score", required=True, choices=_SCORE_CHOICES)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda-reg", dest="lambda_reg", type=float, default=0.01)
    p.add_argument("--k-reg", dest="k_reg", type=int, default=5)
    p.add_argument("--randomized", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("evaluate", help="evaluate a calibrated predictor")
    p.add_argument("--predictor", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="run a full experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EntconformError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc!r}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
