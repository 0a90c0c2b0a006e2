"""Command-line entry point: ``cka``, ``distill``, ``eval``, ``gradcheck`` and ``ablate``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .attention import QueryPolicy, SegmentSpans, check_attention_map, token_weights
from .config import ExperimentConfig
from .metrics import compute_metrics
from .similarity import awcka, linear_cka
from .tensor_io import read_tensor, save_params

LOSS_COLUMNS = ("step", "ce", "dp", "da", "dr", "total")


def _matrix_file(path) -> np.ndarray:
    arr = read_tensor(path)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected a 2-dim L x E tensor, got shape {arr.shape}")
    return arr


def cmd_cka(args) -> int:
    teacher = _matrix_file(args.teacher)
    student = _matrix_file(args.student)
    if teacher.shape[0] != student.shape[0]:
        raise ValueError(f"row counts differ: {teacher.shape[0]} vs {student.shape[0]}")
    if args.attention is None:
        value = linear_cka(teacher, student)
    else:
        if args.spans is None:
            raise ValueError("--attention requires --spans La,Lp,Lr")
        spans = SegmentSpans.parse(args.spans)
        if spans.audio != teacher.shape[0]:
            raise ValueError(f"spans give {spans.audio} audio tokens but embeddings have {teacher.shape[0]} rows")
        scores = check_attention_map(read_tensor(args.attention))
        w = token_weights(scores, spans, QueryPolicy(args.query_policy))
        value = awcka(teacher, student, w)
    print(f"{value:.10f}")
    return 0


def _read_labels(path) -> list[int]:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        return [int(ln) for ln in lines]
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def cmd_eval(args) -> int:
    report = compute_metrics(_read_labels(args.true_file), _read_labels(args.pred_file), args.num_classes)
    sys.stdout.write(report.to_text())
    return 0


def write_loss_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOSS_COLUMNS)
        for step, bundle in enumerate(history):
            writer.writerow([step, *(repr(float(v)) for v in bundle.as_row())])


def cmd_distill(args) -> int:
    from .toy.experiment import prepare, run_student

    config = ExperimentConfig.load(args.config)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config.to_text())
    prepared = prepare(config)
    (out / "teacher_metrics.txt").write_text(prepared.teacher_report.to_text())
    result = run_student(prepared, config)
    write_loss_csv(out / "losses.csv", result.history)
    (out / "metrics.txt").write_text(result.report.to_text())
    (out / "metrics.json").write_text(result.report.to_json())
    save_params(out / "student", result.params, extra={"model": config.student_model().to_dict()})
    print(f"teacher ua={prepared.teacher_report.ua:.10f}")
    sys.stdout.write(result.report.to_text())
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    results = run_gradcheck(args.seed, args.trials, bias=args.perturb_bias)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name} max_rel_err={r.max_error:.3e} trials={r.trials} worst_shape={r.worst_shape} {status}")
    failed = [r for r in results if not r.passed]
    for r in failed:
        for shape, err in r.failures:
            print(f"gradcheck failed: {r.name} shape={shape} rel_err={err:.3e}", file=sys.stderr)
    return 1 if failed else 0


def cmd_ablate(args) -> int:
    from .toy.experiment import median_ua, run_ablation

    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    seeds = range(args.first_seed, args.first_seed + args.seeds)

    def progress(row):
        cols = " ".join(f"{k}={v:.4f}" for k, v in row.student_ua.items())
        print(f"seed={row.seed} teacher_ua={row.teacher_ua:.4f} cue_mass={row.cue_mass:.4f} {cols}", flush=True)

    rows = run_ablation(config, seeds, progress=progress)
    medians = median_ua(rows)
    print("median " + " ".join(f"{k}={v:.4f}" for k, v in medians.items()))
    if args.json:
        payload = {"rows": [vars(r) for r in rows], "median": medians}
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cka-distill", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cka", help="CKA, or attention-weighted CKA, between two embedding tensor files")
    p.add_argument("teacher")
    p.add_argument("student")
    p.add_argument("--attention", help="attention map tensor (heads x L x L or L x L)")
    p.add_argument("--spans", help="segment lengths La,Lp,Lr of the attention map")
    p.add_argument("--query-policy", default=QueryPolicy.FIRST_RESPONSE_TOKEN.value,
                   choices=[q.value for q in QueryPolicy])
    p.set_defaults(func=cmd_cka)

    p = sub.add_parser("distill", help="pretrain a teacher and distill a student from a config file")
    p.add_argument("config")
    p.add_argument("output_dir")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("eval", help="metrics from newline-delimited label files")
    p.add_argument("true_file")
    p.add_argument("pred_file")
    p.add_argument("num_classes", type=_positive_int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=_positive_int, default=20)
    p.add_argument("--perturb-bias", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="median student UA of LDistOnly / LDistPlusCKA / PLDistill over seeds")
    p.add_argument("config", nargs="?")
    p.add_argument("--seeds", type=_positive_int, default=5)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--json", help="also write per-seed results here")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, FloatingPointError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
