"""Seeded synthetic multimodal dataset with a planted, learnable signal.

Each sentence places 1..k aspect spans drawn from a dedicated aspect
vocabulary among filler words and distractor nouns. Every aspect gets a
designated "relevant" image block built from the aspect word's key vector
plus a polarity direction, so the label is recoverable by attending to the
right block; remaining blocks are context or pure noise. Clean samples get
a sentence-level image embedding constructed at cosine >= 0.6 with the
text embedding; a controllable fraction of samples is resampled into
sentence-level noise (blocks and embedding independent of the signal) and
marked with ``noise_flag`` for evaluation only.
"""

from __future__ import annotations

import heapq
import json
import math
import pathlib
from dataclasses import asdict, dataclass

import numpy as np

from .data import AspectAnnotation, Dataset, MultimodalSample, Polarity
from .errors import ContractError

SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 200
    tokens_min: int = 6
    tokens_max: int = 10
    image_blocks: int = 4
    image_feat_dim: int = 6
    clip_dim: int = 8
    vocab_size: int = 40
    aspects_min: int = 1
    aspects_max: int = 2
    sentence_noise_rate: float = 0.0
    aspect_block_noise_rate: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ContractError("n_samples must be >= 1")
        if not (1 <= self.tokens_min <= self.tokens_max):
            raise ContractError("token range is empty")
        if not (1 <= self.aspects_min <= self.aspects_max):
            raise ContractError("aspect range is empty")
        if self.tokens_min < 2 * self.aspects_min:
            raise ContractError("tokens_min too small to place the minimum aspects")
        for rate in (self.sentence_noise_rate, self.aspect_block_noise_rate):
            if not (0.0 <= rate <= 1.0):
                raise ContractError(f"noise rate {rate} outside [0, 1]")
        if self.image_blocks < self.aspects_max:
            raise ContractError("need at least one image block per possible aspect")


def _vocab_layout(vocab_size: int) -> tuple[list[str], list[str], list[str]]:
    """(aspect head words, distractor nouns, filler words)."""
    n_heads = max(3, vocab_size // 5)
    n_nouns = max(2, vocab_size // 8)
    n_filler = max(2, vocab_size - 2 * n_heads - n_nouns)
    heads = [f"asp{i:02d}" for i in range(n_heads)]
    nouns = [f"obj{i:02d}" for i in range(n_nouns)]
    filler = [f"w{i:02d}" for i in range(n_filler)]
    return heads, nouns, filler


def continuation(head: str) -> str:
    """Second token of a two-token aspect span."""
    return head + "b"


def build_dependency_tree(n: int, rng: np.random.Generator) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Uniform random labeled tree and its hop-distance matrix."""
    if n < 1:
        raise ContractError("need at least one token")
    if n == 1:
        return [], np.zeros((1, 1), dtype=np.int64)
    if n == 2:
        edges = [(0, 1)]
    else:
        prufer = rng.integers(0, n, size=n - 2)
        degree = np.ones(n, dtype=np.int64)
        for v in prufer:
            degree[v] += 1
        leaves = [i for i in range(n) if degree[i] == 1]
        heapq.heapify(leaves)
        edges = []
        for v in prufer:
            leaf = heapq.heappop(leaves)
            edges.append((leaf, int(v)))
            degree[v] -= 1
            if degree[v] == 1:
                heapq.heappush(leaves, int(v))
        u = heapq.heappop(leaves)
        w = heapq.heappop(leaves)
        edges.append((u, w))
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    dist = np.full((n, n), -1, dtype=np.int64)
    for start in range(n):
        dist[start, start] = 0
        frontier = [start]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if dist[start, v] < 0:
                        dist[start, v] = d
                        nxt.append(v)
            frontier = nxt
    return edges, dist


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _orthonormal_directions(rng: np.random.Generator, dim: int, count: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal(size=(dim, count)))
    return q.T  # (count, dim), exactly orthonormal


class _Lexicon:
    """Generator-internal word vectors, drawn once per seed."""

    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        heads, nouns, filler = _vocab_layout(cfg.vocab_size)
        self.heads = heads
        self.nouns = nouns
        self.filler = filler
        all_words = (heads + [continuation(h) for h in heads] + nouns + filler)
        self.clip_vec = {w: _unit(rng.normal(size=cfg.clip_dim)) for w in all_words}
        self.key_img = {h: _unit(rng.normal(size=cfg.image_feat_dim)) for h in heads}
        self.pol_dirs = _orthonormal_directions(rng, cfg.image_feat_dim, 3)


def _place_spans(n: int, lengths: list[int], rng: np.random.Generator) -> list[int]:
    """Non-overlapping start positions for the given span lengths."""
    taken = np.zeros(n, dtype=bool)
    starts = []
    for length in lengths:
        placed = False
        for _ in range(64):
            start = int(rng.integers(0, n - length + 1))
            if not taken[start:start + length].any():
                placed = True
                break
        if not placed:
            for start in range(n - length + 1):
                if not taken[start:start + length].any():
                    placed = True
                    break
        if not placed:
            raise ContractError(f"cannot place span of length {length} in {n} tokens")
        taken[start:start + length] = True
        starts.append(start)
    return starts


def _make_sample(idx: int, cfg: SynthConfig, lex: _Lexicon, noisy: bool,
                 rng: np.random.Generator) -> MultimodalSample:
    n = int(rng.integers(cfg.tokens_min, cfg.tokens_max + 1))
    max_fit = max(1, n // 2)
    n_aspects = int(rng.integers(cfg.aspects_min, cfg.aspects_max + 1))
    n_aspects = min(n_aspects, max_fit, len(lex.heads))
    head_words = [lex.heads[i] for i in
                  rng.choice(len(lex.heads), size=n_aspects, replace=False)]
    lengths = [2 if rng.random() < 0.3 else 1 for _ in head_words]
    starts = _place_spans(n, lengths, rng)
    polarities = [Polarity(int(rng.integers(0, 3))) for _ in head_words]

    tokens = [lex.filler[int(rng.integers(0, len(lex.filler)))] for _ in range(n)]
    noun_flags = [False] * n
    aspects = []
    for head, start, length, pol in zip(head_words, starts, lengths, polarities):
        tokens[start] = head
        noun_flags[start] = True
        if length == 2:
            tokens[start + 1] = continuation(head)
            noun_flags[start + 1] = True
        aspects.append(AspectAnnotation(start, start + length - 1, pol))
    aspects.sort(key=lambda a: a.begin)

    free = [i for i in range(n) if not noun_flags[i]]
    n_distract = min(len(free), int(rng.integers(1, 3)))
    if n_distract:
        for i in rng.choice(len(free), size=n_distract, replace=False):
            pos = free[int(i)]
            tokens[pos] = lex.nouns[int(rng.integers(0, len(lex.nouns)))]
            noun_flags[pos] = True

    sentic = rng.uniform(-0.2, 0.2, size=n)
    for a in aspects:
        if a.polarity == Polarity.NEUTRAL:
            continue
        base = 0.7 if a.polarity == Polarity.POSITIVE else -0.7
        for pos in range(a.begin, a.end + 1):
            sentic[pos] = base + rng.uniform(-0.2, 0.2)

    _, dep_dist = build_dependency_tree(n, rng)

    m = cfg.image_blocks
    blocks = rng.normal(size=(m, cfg.image_feat_dim))
    text_embed = _unit(sum(lex.clip_vec[t] for t in tokens))
    if noisy:
        image_embed = _unit(rng.normal(size=cfg.clip_dim))
    else:
        n_noise = min(int(round(cfg.aspect_block_noise_rate * m)), m - len(aspects))
        roles = rng.permutation(m)
        signal_slots = roles[:len(aspects)]
        context_slots = roles[len(aspects):m - n_noise]
        for slot, head, pol in zip(signal_slots, head_words, polarities):
            blocks[slot] = (lex.key_img[head] + lex.pol_dirs[int(pol)]
                            + 0.25 * rng.normal(size=cfg.image_feat_dim))
        for slot in context_slots:
            blocks[slot] = 0.3 * rng.normal(size=cfg.image_feat_dim)
        c = rng.uniform(0.7, 0.95)
        g = rng.normal(size=cfg.clip_dim)
        orth = g - (g @ text_embed) * text_embed
        image_embed = c * text_embed + math.sqrt(1.0 - c * c) * _unit(orth)

    return MultimodalSample(
        id=f"s{idx:05d}",
        tokens=tokens,
        noun_flags=noun_flags,
        image_blocks=blocks,
        text_embed=text_embed,
        image_embed=image_embed,
        dep_dist=dep_dist,
        sentic=sentic,
        aspects=aspects,
        noise_flag=noisy,
    )


def generate_dataset(cfg: SynthConfig) -> tuple[Dataset, dict]:
    """Build the dataset and its manifest (config echo, seed, split ids)."""
    rng = np.random.default_rng(cfg.seed)
    lex = _Lexicon(cfg, rng)
    n_noisy = int(round(cfg.sentence_noise_rate * cfg.n_samples))
    noisy_ids = set(rng.choice(cfg.n_samples, size=n_noisy, replace=False).tolist())
    samples = [_make_sample(i, cfg, lex, i in noisy_ids, rng)
               for i in range(cfg.n_samples)]
    order = rng.permutation(cfg.n_samples)
    n_train = int(round(SPLIT_FRACTIONS[0] * cfg.n_samples))
    n_dev = int(round(SPLIT_FRACTIONS[1] * cfg.n_samples))
    split_ids = {
        "train": sorted(samples[i].id for i in order[:n_train]),
        "dev": sorted(samples[i].id for i in order[n_train:n_train + n_dev]),
        "test": sorted(samples[i].id for i in order[n_train + n_dev:]),
    }
    manifest = {"config": asdict(cfg), "seed": cfg.seed, "splits": split_ids}
    return Dataset(samples), manifest


def split_dataset(dataset: Dataset, manifest: dict) -> dict[str, list[MultimodalSample]]:
    by_id = dataset.by_id()
    return {name: [by_id[i] for i in ids]
            for name, ids in manifest["splits"].items()}


def write_synth(cfg: SynthConfig, out_dir) -> tuple[pathlib.Path, pathlib.Path]:
    """Write dataset.jsonl and manifest.json under ``out_dir``."""
    from .data import save_dataset

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset, manifest = generate_dataset(cfg)
    data_path = out / "dataset.jsonl"
    manifest_path = out / "manifest.json"
    save_dataset(dataset, data_path)
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return data_path, manifest_path
