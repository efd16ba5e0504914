"""Batch command line: gen-synth, compute-prior, train, eval, predict.

Exit codes: 0 success, 2 validation / usage error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import ConfigError, TrainConfig
from .data import DataError, SynthRule, gen_synthetic, load_dataset, sidecar_paths, write_dataset
from .prior import PriorFormatError, compute_prior, export_prior
from .trainer import DivergenceError, evaluate, predict, train

log = logging.getLogger("milqt")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _input_files(dataset: Path) -> list[Path]:
    files = [dataset] + [p for p in sidecar_paths(dataset).values() if p.exists()]
    refs = set()
    for line in dataset.read_text().splitlines():
        parts = line.split("\t")
        if len(parts) == 5 and not parts[4].startswith("inline:"):
            refs.add(parts[4].rpartition("#")[0])
    files += [dataset.parent / r for r in sorted(refs) if (dataset.parent / r).exists()]
    return files


def _config_from_args(args) -> TrainConfig:
    base = TrainConfig.load(args.config).to_dict() if args.config else {}
    overrides = {
        "seed": args.seed,
        "epochs": args.epochs,
        "learning_rate": args.lr,
        "batch_size": args.batch_size,
        "alpha": args.alpha,
        "fusion": args.fusion,
        "h_mode": args.h_mode,
        "interaction": args.interaction,
    }
    if args.prior is not None:
        overrides["prior"] = args.prior == "on"
    if args.hypotheses is not None:
        overrides["hypotheses"] = [k for k in args.hypotheses.split(",") if k]
    if args.stop_gradient_h:
        overrides["stop_gradient_h"] = True
    if args.no_inference_weighting:
        overrides["inference_weighting"] = False
    base.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(base)


# ---------------------------------------------------------------- commands


def cmd_gen_synth(args) -> int:
    if args.p > args.a:
        args.parser.error(f"--p ({args.p}) must not exceed --a ({args.a})")
    offsets = tuple(int(x) for x in args.dim_offsets.split(",")) if args.dim_offsets else None
    rule = SynthRule(noise=args.noise, overlap=args.overlap, dim_offsets=offsets)
    seed = args.seed if args.seed is not None else 0
    try:
        bundle = gen_synthetic(seed, args.q, args.p, args.a, args.k, args.dv, rule, split=args.name)
    except ValueError as exc:
        args.parser.error(str(exc))
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(bundle, out / f"{args.name}.tsv", feature_path=f"{args.name}.features.txt")
    print(out / f"{args.name}.tsv")
    return EXIT_OK


def cmd_compute_prior(args) -> int:
    bundle = load_dataset(args.dataset)
    out = Path(args.out or "prior.csv")
    export_prior(compute_prior(bundle), out)
    print(out)
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config_from_args(args)
    dataset = Path(args.dataset)
    bundle = load_dataset(dataset)
    out = Path(args.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    learned = config.interaction == "learned" and config.J >= 2
    outputs = {"checkpoint": "checkpoint", "epoch_checkpoints": "checkpoints", "log": "train.log"}
    if learned:
        outputs["w_mil"] = "w_mil.csv"
    manifest = {
        "command": "train",
        "config": config.to_dict(),
        "inputs": {str(p): _sha256(p) for p in _input_files(dataset)},
        "outputs": outputs,
        "started_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    if not learned:
        manifest["note"] = (f"interaction={config.interaction} with {config.J} hypothesis(es): "
                            "baseline combination, no w_mil readout")
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    result = train(config, bundle, out)
    for line in result.log_lines[-3:]:
        log.info(line)
    print(out / "checkpoint")
    return EXIT_OK


def cmd_eval(args) -> int:
    bundle = load_dataset(args.dataset)
    weighting = False if args.no_inference_weighting else None
    report = evaluate(args.checkpoint, bundle, inference_weighting=weighting)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    if args.by_type:
        sys.stdout.write(report.by_type_table())
    else:
        print(f"overall_accuracy={report.overall_accuracy!r} arithmetic_mpt={report.arithmetic_mpt!r} "
              f"harmonic_mpt={report.harmonic_mpt!r} "
              f"qtype_accuracy={report.qtype_classification_accuracy!r}")
    return EXIT_OK


def cmd_predict(args) -> int:
    bundle = load_dataset(args.dataset)
    preds = predict(args.checkpoint, bundle,
                    inference_weighting=False if args.no_inference_weighting else None)
    out = Path(args.out or "predictions.tsv")
    out.write_text("".join(p.to_line() + "\n" for p in preds))
    bad = sum(p.error is not None for p in preds)
    if bad:
        print(f"warning: {bad} question(s) could not be predicted", file=sys.stderr)
    print(out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", default=None, help="JSON training config")
    common.add_argument("--out", default=None, help="output file or directory")

    parser = argparse.ArgumentParser(prog="milqt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", parents=[common], help="write a seeded synthetic dataset")
    p.add_argument("--q", type=int, default=2000)
    p.add_argument("--p", type=int, default=3)
    p.add_argument("--a", type=int, default=6)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--dv", type=int, default=8)
    p.add_argument("--name", default="data")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--overlap", action="store_true")
    p.add_argument("--dim-offsets", default=None, help="comma-separated planted offset per type")
    p.set_defaults(func=cmd_gen_synth, parser=p)

    p = sub.add_parser("compute-prior", parents=[common], help="type/answer prior as CSV")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_compute_prior)

    p = sub.add_parser("train", parents=[common], help="train on a dataset")
    p.add_argument("dataset")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--alpha", type=float, nargs=3, metavar=("HYP", "VQA", "QT"))
    p.add_argument("--fusion", choices=["EWM", "EWA", "none"])
    p.add_argument("--prior", choices=["on", "off"])
    p.add_argument("--h-mode", choices=["predicted", "groundtruth"])
    p.add_argument("--hypotheses", help="comma-separated kinds")
    p.add_argument("--interaction", choices=["learned", "averaging", "single"])
    p.add_argument("--stop-gradient-h", action="store_true")
    p.add_argument("--no-inference-weighting", action="store_true")
    p.set_defaults(func=cmd_train)

    for name, fn, helptext in (("eval", cmd_eval, "metrics report"),
                               ("predict", cmd_predict, "per-question predictions")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("checkpoint")
        p.add_argument("dataset")
        p.add_argument("--no-inference-weighting", action="store_true")
        if name == "eval":
            p.add_argument("--by-type", action="store_true", help="print the per-type table")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        threads = int(os.environ.get("MILQT_THREADS", "1"))
    except ValueError:
        print("error: MILQT_THREADS must be an integer", file=sys.stderr)
        return EXIT_INVALID
    try:
        with threadpool_limits(limits=max(threads, 1)):
            return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, ConfigError, PriorFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
