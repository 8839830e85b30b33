"""Training orchestration: curriculum selection per epoch, SGD, and run artifacts.

One run: compute the static similarity difficulty once, then per epoch
refresh per-sample losses, select the subset admitted by the competence
threshold, take shuffled minibatch SGD steps on it, and log one trace row.
After the final epoch the model is scored on dev and test. Everything is
deterministic for a fixed config and dataset.
"""

from __future__ import annotations

import copy
import json
import pathlib
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import curriculum as cur
from .autodiff import backward
from .data import Dataset, MultimodalSample
from .errors import ContractError
from .metrics import TASKS, evaluate
from .model import Model, ModelConfig, batch_mean_loss, build_vocab

CURRICULUM_MODES = ("hcd", "none", "antihcd", "static-d_s-only", "dynamic-d_l-only")

TRACE_COLUMNS = ("epoch", "p", "selected", "mean_ds_selected",
                 "mean_dc_selected", "train_loss", "dev_f1")

# Documentation-only reference from the source experiments; never asserted.
ALPHA_REFERENCE_CLAIM = ('the 0.8-0.2 ratio "achieves the highest F1-score of '
                         '67.1" in the original full-scale experiments')


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: Optional[cur.CompetenceSchedule] = None  # None: lambda 0.1, T = epochs // 2
    alpha: float = 0.8
    curriculum: str = "hcd"
    min_selection: Optional[int] = None  # None: one optimizer batch
    data_path: str = ""
    out_dir: str = ""
    eval_tasks: tuple[str, ...] = TASKS
    difficulty_every: int = 1

    def __post_init__(self):
        if self.curriculum not in CURRICULUM_MODES:
            raise ContractError(
                f"unknown curriculum mode {self.curriculum!r}; "
                f"expected one of {CURRICULUM_MODES}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ContractError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.difficulty_every < 1:
            raise ContractError("difficulty_every must be >= 1")
        for task in self.eval_tasks:
            if task not in TASKS:
                raise ContractError(f"unknown eval task {task!r}")

    def resolved_schedule(self) -> cur.CompetenceSchedule:
        if self.schedule is not None:
            return self.schedule
        return cur.CompetenceSchedule(lambda_init=0.1, T=max(1, self.model.epochs // 2))

    def resolved_min_selection(self, train_size: int) -> int:
        floor = self.min_selection if self.min_selection is not None \
            else self.model.batch_size
        return max(1, min(floor, train_size))


@dataclass(frozen=True)
class EpochTrace:
    epoch: int
    p: float
    selected: int
    mean_ds_selected: float
    mean_dc_selected: float
    train_loss: float
    dev_f1: float

    def row(self) -> str:
        return (f"{self.epoch},{self.p!r},{self.selected},"
                f"{self.mean_ds_selected!r},{self.mean_dc_selected!r},"
                f"{self.train_loss!r},{self.dev_f1!r}")


@dataclass
class TrainingResult:
    model: Model
    traces: list[EpochTrace]
    metrics: list[dict]  # one {"split", "task", ...} object per task per split

    def metric(self, split: str, task: str) -> dict:
        for m in self.metrics:
            if m["split"] == split and m["task"] == task:
                return m
        raise KeyError(f"no metrics for split={split} task={task}")


def compute_epoch_difficulties(model: Model, samples: Sequence[MultimodalSample],
                               d_s: Sequence[float], alpha: float) -> list[cur.DifficultyRecord]:
    """Forward-only losses over the train set, turned into difficulty records."""
    if len(d_s) != len(samples):
        raise ContractError(
            f"d_s length {len(d_s)} != sample count {len(samples)}")
    losses = [model.sequence_loss(s).item() for s in samples]
    d_l = cur.loss_difficulty(losses)
    return cur.make_records([s.id for s in samples], list(d_s), d_l, alpha)


def _select(records: Sequence[cur.DifficultyRecord], mode: str, p: float,
            min_size: int) -> list[int]:
    if mode == "none":
        return list(range(len(records)))
    if mode == "antihcd":
        return cur.select_anti_subset(records, p, min_size)
    return cur.select_training_subset(records, p, min_size)


def _sgd_step(model: Model, batch: Sequence[MultimodalSample], lr: float) -> float:
    for _, node in model.named_parameters():
        node.grad = None
    loss = batch_mean_loss(model, batch)
    backward(loss)
    for _, node in model.named_parameters():
        if node.grad is not None:
            node.value -= lr * node.grad
    return loss.item()


def _dev_f1(model: Model, dev: Sequence[MultimodalSample]) -> float:
    if not dev:
        return 0.0
    preds = {s.id: model.predict(s) for s in dev}
    return evaluate(Dataset(list(dev)), preds, "JMASA").f1


def run_training(cfg: RunConfig, train: Sequence[MultimodalSample],
                 dev: Sequence[MultimodalSample],
                 test: Sequence[MultimodalSample] = ()) -> TrainingResult:
    train = list(train)
    dev = list(dev)
    test = list(test)
    if not train:
        raise ContractError("training split is empty")
    model_cfg = cfg.model
    if model_cfg.image_feat_dim is None:
        model_cfg = replace(model_cfg, image_feat_dim=int(train[0].image_blocks.shape[1]))
    model = Model(model_cfg, build_vocab(train), model_cfg.image_feat_dim)
    sched = cfg.resolved_schedule()
    min_size = cfg.resolved_min_selection(len(train))

    alpha_eff = {"static-d_s-only": 0.0, "dynamic-d_l-only": 1.0}.get(
        cfg.curriculum, cfg.alpha)
    d_s = cur.similarity_difficulty([s.text_embed for s in train],
                                    [s.image_embed for s in train],
                                    ids=[s.id for s in train])
    traces: list[EpochTrace] = []
    records: list[cur.DifficultyRecord] = []
    for epoch in range(model_cfg.epochs):
        if epoch % cfg.difficulty_every == 0 or not records:
            records = compute_epoch_difficulties(model, train, d_s, alpha_eff)
        p = cur.competence(epoch, sched)
        selected = _select(records, cfg.curriculum, p, min_size)
        epoch_rng = np.random.default_rng([model_cfg.seed, epoch])
        order = [selected[i] for i in epoch_rng.permutation(len(selected))]
        loss_sum = 0.0
        for lo in range(0, len(order), model_cfg.batch_size):
            batch = [train[i] for i in order[lo:lo + model_cfg.batch_size]]
            loss_sum += _sgd_step(model, batch, model_cfg.learning_rate) * len(batch)
        traces.append(EpochTrace(
            epoch=epoch,
            p=p,
            selected=len(selected),
            mean_ds_selected=float(np.mean([records[i].d_s for i in selected])),
            mean_dc_selected=float(np.mean([records[i].d_c for i in selected])),
            train_loss=loss_sum / len(order),
            dev_f1=_dev_f1(model, dev),
        ))
    metrics = []
    for split_name, samples in (("dev", dev), ("test", test)):
        if not samples:
            continue
        split = Dataset(samples)
        free_preds = {s.id: model.predict(s) for s in samples}
        span_preds = {s.id: model.predict_given_spans(s) for s in samples}
        for task in cfg.eval_tasks:
            preds = span_preds if task == "MASC" else free_preds
            report = evaluate(split, preds, task)
            metrics.append({"split": split_name, **report.as_dict()})
    return TrainingResult(model=model, traces=traces, metrics=metrics)


# -- run artifacts -----------------------------------------------------------


def write_trace_csv(traces: Sequence[EpochTrace], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for t in traces:
            fh.write(t.row() + "\n")


def read_trace_csv(path) -> list[EpochTrace]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != ",".join(TRACE_COLUMNS):
            raise ContractError(f"unexpected trace header: {header!r}")
        rows = []
        for line in fh:
            if not line.strip():
                continue
            parts = line.strip().split(",")
            rows.append(EpochTrace(int(parts[0]), float(parts[1]), int(parts[2]),
                                   float(parts[3]), float(parts[4]),
                                   float(parts[5]), float(parts[6])))
    return rows


def write_metrics_jsonl(metrics: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for m in metrics:
            fh.write(json.dumps(m) + "\n")


def write_run_outputs(result: TrainingResult, out_dir) -> dict[str, pathlib.Path]:
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trace": out / "trace.csv",
             "metrics": out / "metrics.jsonl",
             "params": out / "params.json"}
    write_trace_csv(result.traces, paths["trace"])
    write_metrics_jsonl(result.metrics, paths["metrics"])
    with open(paths["params"], "w", encoding="utf-8") as fh:
        json.dump(result.model.state_dict(), fh)
    return paths


def run_alpha_ablation(cfg: RunConfig, alphas: Sequence[float], seeds: Sequence[int],
                       train: Sequence[MultimodalSample],
                       dev: Sequence[MultimodalSample]) -> list[tuple[float, int, float]]:
    """Grid of (alpha, seed, final dev JMASA F1) over full training runs."""
    if any(not (0.0 <= a <= 1.0) for a in alphas):
        raise ContractError("alphas must lie in [0, 1]")
    rows = []
    for alpha in alphas:
        for seed in seeds:
            run_cfg = copy.deepcopy(cfg)
            run_cfg.alpha = float(alpha)
            run_cfg.model = replace(run_cfg.model, seed=int(seed))
            result = run_training(run_cfg, train, dev)
            rows.append((float(alpha), int(seed), result.traces[-1].dev_f1))
    return rows


def write_ablation_csv(rows: Sequence[tuple[float, int, float]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# reference claim (documentation only, not asserted): "
                 f"{ALPHA_REFERENCE_CLAIM}\n")
        fh.write("alpha,seed,dev_f1\n")
        for alpha, seed, f1 in rows:
            fh.write(f"{alpha!r},{seed},{f1!r}\n")


# -- config file parsing ----------------------------------------------------


def run_config_from_dict(raw: dict) -> RunConfig:
    model = ModelConfig(**raw.get("model", {}))
    schedule = None
    if "schedule" in raw:
        schedule = cur.CompetenceSchedule(
            lambda_init=raw["schedule"].get("lambda_init", 0.1),
            T=raw["schedule"].get("T", max(1, model.epochs // 2)))
    return RunConfig(
        model=model,
        schedule=schedule,
        alpha=raw.get("alpha", 0.8),
        curriculum=raw.get("curriculum", "hcd"),
        min_selection=raw.get("min_selection"),
        data_path=raw.get("data", ""),
        out_dir=raw.get("out", ""),
        eval_tasks=tuple(raw.get("eval_tasks", TASKS)),
        difficulty_every=raw.get("difficulty_every", 1),
    )


def run_config_to_dict(cfg: RunConfig) -> dict:
    sched = cfg.resolved_schedule()
    return {"model": asdict(cfg.model),
            "schedule": {"lambda_init": sched.lambda_init, "T": sched.T},
            "alpha": cfg.alpha,
            "curriculum": cfg.curriculum,
            "min_selection": cfg.min_selection,
            "data": cfg.data_path,
            "out": cfg.out_dir,
            "eval_tasks": list(cfg.eval_tasks),
            "difficulty_every": cfg.difficulty_every}
