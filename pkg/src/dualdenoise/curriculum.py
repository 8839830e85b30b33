"""Competence-scheduled curriculum over noisy sentence-image pairs.

Per-sample difficulty has two ingredients: a static score from
text-image embedding similarity (misaligned pairs are hard) and a dynamic
score from the model's current per-sample loss, refreshed every epoch.
Their convex combination is compared against a competence threshold that
grows from ``lambda_init`` to 1 over ``T`` epochs, so training sees clean
pairs first and the full set once competent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .autodiff import cosine
from .errors import ContractError, DegenerateInputError

SIMILARITY_FLOOR = 1e-6  # raw cosines are clamped into [FLOOR, 1] before normalizing


@dataclass(frozen=True)
class DifficultyRecord:
    sample_id: str
    d_s: float  # static, similarity-based
    d_l: float  # dynamic, loss-based
    d_c: float  # composite


@dataclass(frozen=True)
class CompetenceSchedule:
    lambda_init: float
    T: int

    def __post_init__(self):
        if not (0.0 < self.lambda_init <= 1.0):
            raise ContractError(f"lambda_init must be in (0, 1], got {self.lambda_init}")
        if self.T < 1:
            raise ContractError(f"T must be >= 1, got {self.T}")


def similarity_difficulty(text_embeds: Sequence[np.ndarray],
                          image_embeds: Sequence[np.ndarray],
                          ids: Optional[Sequence[str]] = None) -> list[float]:
    """Static difficulty: 1 - S_i / max_k S_k over clamped cosine similarities.

    The best-aligned sample gets difficulty 0; everything lands in [0, 1).
    """
    if len(text_embeds) != len(image_embeds) or not text_embeds:
        raise ContractError("need equal-length nonempty embedding lists")
    sims = []
    for i, (t, v) in enumerate(zip(text_embeds, image_embeds)):
        try:
            c = cosine(t, v)
        except DegenerateInputError as exc:
            name = ids[i] if ids is not None else f"index {i}"
            raise DegenerateInputError(
                f"zero-norm embedding for sample {name}") from exc
        sims.append(min(1.0, max(SIMILARITY_FLOOR, c)))
    top = max(sims)
    return [1.0 - s / top for s in sims]


def loss_difficulty(losses: Sequence[float]) -> list[float]:
    """Dynamic difficulty: loss scaled by the epoch's maximum loss."""
    losses = [float(x) for x in losses]
    for x in losses:
        if x < 0.0:
            raise ContractError(f"negative loss {x}")
    top = max(losses, default=0.0)
    if top == 0.0:
        return [0.0 for _ in losses]
    return [x / top for x in losses]


def composite_difficulty(d_l: Sequence[float], d_s: Sequence[float],
                         alpha: float) -> list[float]:
    if len(d_l) != len(d_s):
        raise ContractError(f"length mismatch: {len(d_l)} vs {len(d_s)}")
    if not (0.0 <= alpha <= 1.0):
        raise ContractError(f"alpha must be in [0, 1], got {alpha}")
    return [alpha * l + (1.0 - alpha) * s for l, s in zip(d_l, d_s)]


def make_records(ids: Sequence[str], d_s: Sequence[float], d_l: Sequence[float],
                 alpha: float) -> list[DifficultyRecord]:
    d_c = composite_difficulty(d_l, d_s, alpha)
    return [DifficultyRecord(i, s, l, c)
            for i, s, l, c in zip(ids, d_s, d_l, d_c)]


def competence(t: int, sched: CompetenceSchedule) -> float:
    """Admissible-difficulty threshold p(t); reaches 1 at t = T and stays there."""
    if t < 0:
        raise ContractError(f"epoch must be >= 0, got {t}")
    if t > sched.T:
        return 1.0
    lam2 = sched.lambda_init ** 2
    return math.sqrt(t / sched.T * (1.0 - lam2) + lam2)


def select_training_subset(records: Sequence[DifficultyRecord], p: float,
                           min_size: int) -> list[int]:
    """Indices of samples with d_c < p, in original order.

    If the threshold admits fewer than ``min_size`` samples, fall back to the
    min_size easiest (ties broken by ascending sample_id). p >= 1 selects
    everything.
    """
    if not records:
        raise ContractError("records must be nonempty")
    if p <= 0.0:
        raise ContractError(f"competence must be positive, got {p}")
    if not (1 <= min_size <= len(records)):
        raise ContractError(
            f"min_size {min_size} out of range for {len(records)} records")
    if p >= 1.0:
        return list(range(len(records)))
    chosen = [i for i, r in enumerate(records) if r.d_c < p]
    if len(chosen) < min_size:
        ranked = sorted(range(len(records)),
                        key=lambda i: (records[i].d_c, records[i].sample_id))
        chosen = sorted(ranked[:min_size])
    return chosen


def select_anti_subset(records: Sequence[DifficultyRecord], p: float,
                       min_size: int) -> list[int]:
    """Anti-curriculum twin: hardest-first, admits d_c > 1 - p."""
    if not records:
        raise ContractError("records must be nonempty")
    if p >= 1.0:
        return list(range(len(records)))
    chosen = [i for i, r in enumerate(records) if r.d_c > 1.0 - p]
    if len(chosen) < min_size:
        ranked = sorted(range(len(records)),
                        key=lambda i: (-records[i].d_c, records[i].sample_id))
        chosen = sorted(ranked[:min_size])
    return chosen
