"""Aspect-level denoising over encoder states.

Three stages, all differentiable:

1. aspect-guided attention: every position attends over the candidate
   aspects (noun positions), and a sigmoid gate mixes the attended summary
   back into the original state, suppressing content unrelated to any
   aspect;
2. affective enhancement: each text state is shifted by a learned vector
   scaled with the token's lexicon value in [-1, 1];
3. graph refinement: a weighted association matrix over image blocks and
   text tokens (cosine edges, gated by dependency distance and aspect
   links) drives a ReLU graph convolution.

States are row vectors; index 0..m-1 are image blocks, m..m+n-1 text
tokens.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import ContractError


@dataclass
class AspectAttentionParams:
    """Projections, scorer, and fusion gate for the aspect attention stage.

    ``w_alpha`` scores the 2h-wide concat of projected candidate and
    projected state; ``w_beta`` gates the 2h-wide concat of the two fusion
    inputs. Gates and scores are scalar per position.
    """

    w_ca: Node   # (h, h) candidate projection
    b_ca: Node   # (1, h)
    w_h: Node    # (h, h) state projection
    b_h: Node    # (1, h)
    w_alpha: Node  # (2h, 1)
    b_alpha: Node  # (1, 1)
    w_1: Node    # (h, h) fusion input 1
    w_2: Node    # (h, h) fusion input 2
    w_beta: Node   # (2h, 1)
    b_beta: Node   # (1, 1)

    def named(self, prefix: str = "aspect_attention") -> list[tuple[str, Node]]:
        return [(f"{prefix}.{k}", getattr(self, k)) for k in
                ("w_ca", "b_ca", "w_h", "b_h", "w_alpha", "b_alpha",
                 "w_1", "w_2", "w_beta", "b_beta")]


@dataclass
class SenticParams:
    w_s: Node  # (1, h) per-unit affective shift direction
    b_s: Node  # (1, h)

    def named(self, prefix: str = "sentic") -> list[tuple[str, Node]]:
        return [(f"{prefix}.w_s", self.w_s), (f"{prefix}.b_s", self.b_s)]


@dataclass
class GcnLayerParams:
    w: Node  # (h, h)
    b: Node  # (1, h)

    def named(self, prefix: str) -> list[tuple[str, Node]]:
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)]


def aspect_attention(states: Node, candidate_indices: Sequence[int],
                     params: AspectAttentionParams) -> tuple[Node, Node, Node]:
    """Denoise every state against the candidate aspects.

    Returns (denoised states, attention weights, gates): attention is
    (positions, k) with rows summing to 1, gates are (positions, 1) in
    (0, 1), and each output state is the gate-weighted mix of the original
    state and its attended candidate summary.
    """
    candidate_indices = list(candidate_indices)
    total = states.shape[0]
    if not candidate_indices:
        raise ContractError("candidate aspect list is empty")
    if any(not (0 <= i < total) for i in candidate_indices):
        raise ContractError(
            f"candidate index out of range for {total} states: {candidate_indices}")
    h = states.shape[1]
    cands = ad.gather_rows(states, candidate_indices)           # (k, h)
    proj_c = ad.tanh(cands @ params.w_ca + params.b_ca)         # (k, h)
    proj_s = ad.tanh(states @ params.w_h + params.b_h)          # (total, h)
    # tanh factors through concatenation, so the concat-then-score of the
    # joint feature splits into two half-scores added with broadcasting.
    score_c = proj_c @ ad.slice_rows(params.w_alpha, 0, h)      # (k, 1)
    score_s = proj_s @ ad.slice_rows(params.w_alpha, h, 2 * h)  # (total, 1)
    scores = score_s + score_c.T + params.b_alpha               # (total, k)
    alpha = ad.softmax_rows(scores)
    attended = alpha @ cands                                    # (total, h)
    gate_in = ad.concat_cols(states @ params.w_1, attended @ params.w_2)
    beta = ad.sigmoid(gate_in @ params.w_beta + params.b_beta)  # (total, 1)
    denoised = beta * states + (1.0 - beta) * attended
    return denoised, alpha, beta


def sentic_enhance(states: Node, sentic: np.ndarray, params: SenticParams,
                   image_count: int) -> Node:
    """Shift each text state by sentic_value * w_s + b_s; image states pass through."""
    n = states.shape[0] - image_count
    sentic = np.asarray(sentic, dtype=np.float64).reshape(-1, 1)
    if sentic.shape[0] != n:
        raise ContractError(
            f"sentic length {sentic.shape[0]} != text position count {n}")
    shift = Node(sentic, op="const") @ params.w_s + params.b_s  # (n, h)
    text = ad.slice_rows(states, image_count, states.shape[0]) + shift
    if image_count == 0:
        return text
    return ad.concat_rows([ad.slice_rows(states, 0, image_count), text])


def association_mask(dep_dist: np.ndarray, aspect_token_indices: Sequence[int],
                     m: int, n: int, threshold: int) -> np.ndarray:
    """0/1 matrix marking where cosine edges are admitted (diagonal excluded)."""
    if threshold < 0:
        raise ContractError(f"threshold must be >= 0, got {threshold}")
    aspect_token_indices = sorted(set(aspect_token_indices))
    if any(not (0 <= a < n) for a in aspect_token_indices):
        raise ContractError(
            f"aspect token index out of text range [0, {n}): {aspect_token_indices}")
    size = m + n
    mask = np.zeros((size, size))
    tt = (np.asarray(dep_dist) <= threshold).astype(np.float64)
    mask[m:, m:] = tt
    for a in aspect_token_indices:
        mask[m + a, :m] = 1.0
        mask[:m, m + a] = 1.0
    np.fill_diagonal(mask, 0.0)
    return mask


def build_association_matrix(states: Node, dep_dist: np.ndarray,
                             aspect_token_indices: Sequence[int],
                             m: int, n: int, threshold: int) -> Node:
    """Symmetric cosine graph over image blocks and text tokens.

    Entries: 1 on the diagonal; cosine of the two states wherever the pair
    is an aspect-image link or a text-text pair within ``threshold``
    dependency hops; 0 elsewhere. Differentiable w.r.t. the states (the
    constant-1 diagonal is gradient-exact, since cos(v, v) has zero
    derivative).
    """
    if states.shape[0] != m + n:
        raise ContractError(
            f"state count {states.shape[0]} != m + n = {m + n}")
    mask = association_mask(dep_dist, aspect_token_indices, m, n, threshold)
    unit = ad.normalize_rows(states)
    cosines = ad.clip_unit(unit @ unit.T)
    return cosines * Node(mask, op="const") + Node(np.eye(m + n), op="const")


def gcn_forward(assoc: Node, states: Node,
                layers: Sequence[GcnLayerParams]) -> Node:
    """Stacked graph convolutions: relu(A @ H @ W + b) per layer."""
    if assoc.shape[0] != states.shape[0]:
        raise ContractError(
            f"association size {assoc.shape[0]} != state count {states.shape[0]}")
    h = states
    for layer in layers:
        h = ad.relu(assoc @ h @ layer.w + layer.b)
    return h
