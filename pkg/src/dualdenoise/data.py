"""Sample and dataset types, the target-sequence codec, and JSONL dataset I/O.

A sample couples one sentence (tokens, dependency distances, affective
lexicon values) with one image (block feature vectors) plus sentence-level
text/image embeddings and the gold aspect annotations. The codec turns an
aspect list into the flat index sequence the decoder is trained on:
``[begin, end, polarity, ..., EOS]`` over a per-sample vocabulary of
``n`` positions, 3 polarity codes, and one terminator (``n + 4`` symbols
in total for an ``n``-token sentence).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import ContractError, DatasetFormatError, DecodeError

EOS_OFFSET = 3  # EOS index is n + 3; polarity codes occupy n .. n+2


class Polarity(enum.IntEnum):
    POSITIVE = 0
    NEUTRAL = 1
    NEGATIVE = 2


@dataclass(frozen=True, order=True)
class AspectAnnotation:
    """A contiguous token span [begin, end] carrying one sentiment label."""

    begin: int
    end: int
    polarity: Polarity

    def span(self) -> tuple[int, int]:
        return (self.begin, self.end)


@dataclass
class MultimodalSample:
    id: str
    tokens: list[str]
    noun_flags: list[bool]
    image_blocks: np.ndarray      # (m, d_img)
    text_embed: np.ndarray        # (d_clip,)
    image_embed: np.ndarray       # (d_clip,)
    dep_dist: np.ndarray          # (n, n) non-negative ints, tree distances
    sentic: np.ndarray            # (n,) in [-1, 1]
    aspects: list[AspectAnnotation]
    noise_flag: Optional[bool] = None  # synthetic ground truth, never a model input

    def __post_init__(self):
        self.image_blocks = np.asarray(self.image_blocks, dtype=np.float64)
        self.text_embed = np.asarray(self.text_embed, dtype=np.float64).ravel()
        self.image_embed = np.asarray(self.image_embed, dtype=np.float64).ravel()
        self.dep_dist = np.asarray(self.dep_dist, dtype=np.int64)
        self.sentic = np.asarray(self.sentic, dtype=np.float64).ravel()

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    @property
    def n_blocks(self) -> int:
        return int(self.image_blocks.shape[0])


@dataclass
class Dataset:
    samples: list[MultimodalSample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def dims(self) -> Optional[tuple[int, int]]:
        """(d_img, d_clip), or None for an empty dataset."""
        if not self.samples:
            return None
        s = self.samples[0]
        return (int(s.image_blocks.shape[1]), int(s.text_embed.shape[0]))

    def by_id(self) -> dict[str, MultimodalSample]:
        return {s.id: s for s in self.samples}


# -- target-sequence codec ------------------------------------------------


def output_vocab_size(n: int) -> int:
    return n + 4


def encode_target(aspects: Iterable[AspectAnnotation], n: int) -> list[int]:
    """Flatten aspects into [b1, e1, p1, ..., EOS] over the n+4 symbol set."""
    seq: list[int] = []
    for a in aspects:
        if not (0 <= a.begin <= a.end < n):
            raise ContractError(
                f"aspect span ({a.begin}, {a.end}) out of range for {n} tokens")
        seq.extend((a.begin, a.end, n + int(a.polarity)))
    seq.append(n + EOS_OFFSET)
    return seq


def decode_target(seq: Iterable[int], n: int) -> list[AspectAnnotation]:
    """Parse triples until EOS; inverse of encode_target on valid input.

    Accepts arbitrary index streams (greedy decoder output); malformed
    streams raise DecodeError naming the offending step.
    """
    eos = n + EOS_OFFSET
    aspects: list[AspectAnnotation] = []
    seq = list(seq)
    t = 0
    while True:
        if t >= len(seq):
            raise DecodeError(f"step {t}: stream ended without EOS")
        begin = seq[t]
        if begin == eos:
            return aspects
        if not (0 <= begin < n):
            raise DecodeError(
                f"step {t}: expected a position or EOS, got index {begin}")
        if t + 2 >= len(seq):
            raise DecodeError(f"step {len(seq)}: truncated aspect triple")
        end = seq[t + 1]
        if not (0 <= end < n):
            raise DecodeError(
                f"step {t + 1}: expected a position, got index {end}")
        if end < begin:
            raise DecodeError(f"step {t + 1}: end {end} before begin {begin}")
        pol = seq[t + 2]
        if not (n <= pol <= n + 2):
            raise DecodeError(
                f"step {t + 2}: expected a polarity code, got index {pol}")
        aspects.append(AspectAnnotation(begin, end, Polarity(pol - n)))
        t += 3


# -- sample validation ------------------------------------------------------


def validate_sample(s: MultimodalSample) -> list[str]:
    """Return every invariant violation (empty list means the sample is ok)."""
    v: list[str] = []
    n = len(s.tokens)
    if n < 1:
        v.append("sample has no tokens")
    if s.image_blocks.ndim != 2 or s.image_blocks.shape[0] < 1:
        v.append("sample has no image blocks")
    if len(s.noun_flags) != n:
        v.append(f"noun_flags length {len(s.noun_flags)} != token count {n}")
    if s.dep_dist.shape != (n, n):
        v.append(f"dep_dist shape {s.dep_dist.shape} != ({n}, {n})")
    else:
        if np.any(s.dep_dist < 0):
            v.append("dep_dist has negative entries")
        if np.any(np.diagonal(s.dep_dist) != 0):
            v.append("dep_dist diagonal is not zero")
        bad = np.argwhere(s.dep_dist != s.dep_dist.T)
        if bad.size:
            i, j = bad[0]
            v.append(f"dep_dist not symmetric at ({i}, {j})")
    if s.sentic.shape != (n,):
        v.append(f"sentic length {s.sentic.shape[0]} != token count {n}")
    else:
        out = np.where((s.sentic < -1.0) | (s.sentic > 1.0))[0]
        if out.size:
            v.append(f"sentic out of range at token {out[0]}")
    for name, arr in (("image_blocks", s.image_blocks),
                      ("text_embed", s.text_embed),
                      ("image_embed", s.image_embed),
                      ("sentic", s.sentic)):
        if not np.all(np.isfinite(arr)):
            v.append(f"{name} has non-finite entries")
    prev_end = -1
    for a in s.aspects:
        if not (0 <= a.begin <= a.end < n):
            v.append(f"aspect span ({a.begin}, {a.end}) out of range")
        elif a.begin <= prev_end:
            v.append(f"aspect spans overlap or are unsorted at begin {a.begin}")
        else:
            prev_end = a.end
    return v


# -- JSONL dataset files ----------------------------------------------------

_FIELDS = ("id", "tokens", "noun_flags", "image_blocks", "text_embed",
           "image_embed", "dep_dist", "sentic", "aspects")


def _sample_to_record(s: MultimodalSample) -> dict:
    rec = {
        "id": s.id,
        "tokens": list(s.tokens),
        "noun_flags": [bool(b) for b in s.noun_flags],
        "image_blocks": s.image_blocks.tolist(),
        "text_embed": s.text_embed.tolist(),
        "image_embed": s.image_embed.tolist(),
        "dep_dist": s.dep_dist.tolist(),
        "sentic": s.sentic.tolist(),
        "aspects": [{"begin": a.begin, "end": a.end, "polarity": int(a.polarity)}
                    for a in s.aspects],
    }
    if s.noise_flag is not None:
        rec["noise_flag"] = bool(s.noise_flag)
    return rec


def _record_to_sample(rec: dict, lineno: int) -> MultimodalSample:
    for f in _FIELDS:
        if f not in rec:
            raise DatasetFormatError(f"line {lineno}: missing field {f!r}")
    try:
        aspects = [AspectAnnotation(int(a["begin"]), int(a["end"]),
                                    Polarity(int(a["polarity"])))
                   for a in rec["aspects"]]
    except (KeyError, ValueError) as exc:
        raise DatasetFormatError(f"line {lineno}: bad aspect record: {exc}") from exc
    return MultimodalSample(
        id=str(rec["id"]),
        tokens=[str(t) for t in rec["tokens"]],
        noun_flags=[bool(b) for b in rec["noun_flags"]],
        image_blocks=np.asarray(rec["image_blocks"], dtype=np.float64),
        text_embed=np.asarray(rec["text_embed"], dtype=np.float64),
        image_embed=np.asarray(rec["image_embed"], dtype=np.float64),
        dep_dist=np.asarray(rec["dep_dist"], dtype=np.int64),
        sentic=np.asarray(rec["sentic"], dtype=np.float64),
        aspects=aspects,
        noise_flag=rec.get("noise_flag"),
    )


def save_dataset(dataset: Dataset, path) -> None:
    """Write one JSON record per line; floats keep full round-trip precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in dataset.samples:
            fh.write(json.dumps(_sample_to_record(s)) + "\n")


def load_dataset(path) -> Dataset:
    samples: list[MultimodalSample] = []
    seen_ids: set[str] = set()
    dims: Optional[tuple[int, int]] = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {lineno}: malformed JSON: {exc}") from exc
            s = _record_to_sample(rec, lineno)
            if s.id in seen_ids:
                raise DatasetFormatError(f"line {lineno}: duplicate sample id {s.id!r}")
            seen_ids.add(s.id)
            if s.image_blocks.ndim != 2:
                raise DatasetFormatError(
                    f"line {lineno}: image_blocks must be a 2-D array")
            rec_dims = (int(s.image_blocks.shape[1]), int(s.text_embed.shape[0]))
            if dims is None:
                dims = rec_dims
            elif rec_dims != dims:
                raise DatasetFormatError(
                    f"line {lineno}: feature dims {rec_dims} differ from "
                    f"earlier samples {dims}")
            if s.image_embed.shape[0] != s.text_embed.shape[0]:
                raise DatasetFormatError(
                    f"line {lineno}: image_embed dim {s.image_embed.shape[0]} != "
                    f"text_embed dim {s.text_embed.shape[0]}")
            samples.append(s)
    return Dataset(samples)


def samples_equal(a: MultimodalSample, b: MultimodalSample) -> bool:
    """Bit-exact structural equality, used by round-trip tests."""
    return (a.id == b.id and a.tokens == b.tokens
            and a.noun_flags == b.noun_flags
            and np.array_equal(a.image_blocks, b.image_blocks)
            and np.array_equal(a.text_embed, b.text_embed)
            and np.array_equal(a.image_embed, b.image_embed)
            and np.array_equal(a.dep_dist, b.dep_dist)
            and np.array_equal(a.sentic, b.sentic)
            and a.aspects == b.aspects
            and a.noise_flag == b.noise_flag)
