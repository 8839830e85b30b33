"""Command-line entry points: synth, train, eval, ablate-alpha, trace.

All commands take a JSON config file; flags override config values. Exit
code is 0 on success, 1 with a one-line diagnostic on stderr otherwise.
"""

from __future__ import annotations

import argparse
import json
import pathlib
import sys
from dataclasses import replace

from . import pipeline
from .curriculum import CompetenceSchedule
from .data import Dataset, load_dataset
from .metrics import evaluate
from .model import Model
from .synth import SynthConfig, split_dataset, write_synth


def _load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _load_data(data_path: str):
    """A synth output directory (dataset + manifest) or a bare JSONL file."""
    p = pathlib.Path(data_path)
    if p.is_dir():
        dataset = load_dataset(p / "dataset.jsonl")
        manifest = json.loads((p / "manifest.json").read_text(encoding="utf-8"))
        return dataset, split_dataset(dataset, manifest)
    dataset = load_dataset(p)
    return dataset, None


def _cmd_synth(args) -> int:
    raw = _load_config(args.config)
    cfg = SynthConfig(**raw.get("synth", raw))
    data_path, manifest_path = write_synth(cfg, args.out)
    print(f"wrote {data_path} ({cfg.n_samples} samples) and {manifest_path}")
    return 0


def _build_run_config(args) -> pipeline.RunConfig:
    cfg = pipeline.run_config_from_dict(_load_config(args.config))
    if getattr(args, "data", None):
        cfg.data_path = args.data
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "mode", None):
        cfg.curriculum = args.mode  # argparse already restricts to valid modes
    if getattr(args, "alpha", None) is not None:
        cfg.alpha = args.alpha
    sched = cfg.resolved_schedule()
    lambda_init = args.lambda_init if getattr(args, "lambda_init", None) is not None \
        else sched.lambda_init
    T = args.T if getattr(args, "T", None) is not None else sched.T
    cfg.schedule = CompetenceSchedule(lambda_init=lambda_init, T=T)
    if getattr(args, "seed", None) is not None:
        cfg.model = replace(cfg.model, seed=args.seed)
    return cfg


def _cmd_train(args) -> int:
    cfg = _build_run_config(args)
    if not cfg.data_path:
        raise ValueError("no dataset: set --data or the config's 'data' key")
    if not cfg.out_dir:
        raise ValueError("no output directory: set --out or the config's 'out' key")
    _, splits = _load_data(cfg.data_path)
    if splits is None:
        raise ValueError("training needs a synth directory with a manifest")
    result = pipeline.run_training(cfg, splits["train"], splits["dev"], splits["test"])
    paths = pipeline.write_run_outputs(result, cfg.out_dir)
    echo = pathlib.Path(cfg.out_dir) / "config_echo.json"
    echo.write_text(json.dumps(pipeline.run_config_to_dict(cfg), indent=2) + "\n",
                    encoding="utf-8")
    last = result.traces[-1]
    print(f"trained {cfg.model.epochs} epochs; final train_loss={last.train_loss:.4f} "
          f"dev JMASA F1={last.dev_f1:.4f}; outputs in {paths['trace'].parent}")
    return 0


def _cmd_eval(args) -> int:
    with open(args.params, "r", encoding="utf-8") as fh:
        model = Model.from_state(json.load(fh))
    dataset, splits = _load_data(args.data)
    samples = splits[args.split] if splits is not None else list(dataset.samples)
    if args.task == "MASC":
        preds = {s.id: model.predict_given_spans(s) for s in samples}
    else:
        preds = {s.id: model.predict(s) for s in samples}
    report = evaluate(Dataset(samples), preds, args.task)
    print(json.dumps({"split": args.split if splits is not None else "all",
                      **report.as_dict()}))
    return 0


def _cmd_ablate_alpha(args) -> int:
    cfg = _build_run_config(args)
    if not cfg.data_path:
        raise ValueError("no dataset: set --data or the config's 'data' key")
    _, splits = _load_data(cfg.data_path)
    if splits is None:
        raise ValueError("ablation needs a synth directory with a manifest")
    alphas = [float(x) for x in args.alphas.split(",") if x.strip() != ""]
    seeds = [int(x) for x in args.seeds.split(",") if x.strip() != ""]
    rows = pipeline.run_alpha_ablation(cfg, alphas, seeds,
                                       splits["train"], splits["dev"])
    out_dir = pathlib.Path(cfg.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "alpha_ablation.csv"
    pipeline.write_ablation_csv(rows, out_path)
    print(f"wrote {out_path} ({len(rows)} rows)")
    return 0


def _cmd_trace(args) -> int:
    rows = pipeline.read_trace_csv(pathlib.Path(args.run) / "trace.csv")
    print(",".join(pipeline.TRACE_COLUMNS))
    for row in rows:
        print(row.row())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualdenoise",
        description="curriculum-denoised multimodal aspect-sentiment experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="run curriculum training")
    p.add_argument("--config", required=True)
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--mode", choices=pipeline.CURRICULUM_MODES)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda-init", dest="lambda_init", type=float)
    p.add_argument("--T", dest="T", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate saved parameters on a dataset")
    p.add_argument("--params", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task", required=True, choices=("JMASA", "MATE", "MASC"))
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate-alpha", help="dev-F1 grid over composite weights")
    p.add_argument("--config", required=True)
    p.add_argument("--alphas", default="0.0,0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--seeds", default="0,1")
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ablate_alpha)

    p = sub.add_parser("trace", help="re-emit a run's epoch trace as CSV")
    p.add_argument("--run", required=True)
    p.set_defaults(func=_cmd_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
