"""Desk-scale encoder/decoder over multimodal samples.

The encoder projects image blocks and embeds tokens into a shared hidden
size, runs self-attention layers over the combined sequence, and hands the
states to the aspect-denoising stages. The decoder is a pointer-style
generator: its candidate list is the per-token average of static embedding
and fused state, plus three class embeddings and a terminator, so the
output distribution at every step covers exactly n + 4 symbols.

One ``Model`` instance owns the configuration, the vocabulary, and all
learned parameters as autodiff leaves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from . import aspect_denoise as aspect
from .autodiff import Node
from .data import (AspectAnnotation, MultimodalSample, Polarity, encode_target,
                   output_vocab_size)
from .errors import ContractError

UNK_INDEX = 0  # row 0 of the token table is the reserved unknown-token embedding


@dataclass
class ModelConfig:
    hidden_size: int = 32
    image_feat_dim: Optional[int] = None  # None: take it from the dataset
    encoder_layers: int = 1
    decoder_layers: int = 1
    gcn_depth: int = 2
    fusion_alpha_1: float = 0.5
    fusion_alpha_2: float = 0.5
    learning_rate: float = 0.05
    batch_size: int = 8
    epochs: int = 40
    seed: int = 0
    dep_threshold: int = 2
    max_aspects: int = 8
    aed_bypass: bool = False         # identity pass-through instead of attention+sentic
    gold_aspect_graph: bool = False  # True: association graph from gold heads during training

    def __post_init__(self):
        for name in ("hidden_size", "encoder_layers", "decoder_layers",
                     "gcn_depth", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.fusion_alpha_1 + self.fusion_alpha_2 <= 0.0:
            raise ContractError("fusion weights must not both be zero")
        if self.image_feat_dim is not None and self.image_feat_dim < 1:
            raise ContractError("image_feat_dim must be >= 1")


@dataclass
class EncoderLayerParams:
    w_q: Node
    w_k: Node
    w_v: Node
    w_o: Node
    ff_w1: Node
    ff_b1: Node
    ff_w2: Node
    ff_b2: Node

    def named(self, prefix: str) -> list[tuple[str, Node]]:
        return [(f"{prefix}.{k}", getattr(self, k)) for k in
                ("w_q", "w_k", "w_v", "w_o", "ff_w1", "ff_b1", "ff_w2", "ff_b2")]


@dataclass
class DecoderLayerParams:
    w_sq: Node
    w_sk: Node
    w_sv: Node
    w_so: Node
    w_cq: Node
    w_ck: Node
    w_cv: Node
    w_co: Node
    ff_w1: Node
    ff_b1: Node
    ff_w2: Node
    ff_b2: Node

    def named(self, prefix: str) -> list[tuple[str, Node]]:
        return [(f"{prefix}.{k}", getattr(self, k)) for k in
                ("w_sq", "w_sk", "w_sv", "w_so", "w_cq", "w_ck", "w_cv", "w_co",
                 "ff_w1", "ff_b1", "ff_w2", "ff_b2")]


@dataclass
class ModelParameters:
    token_embed: Node            # (vocab+1, h); row 0 = UNK
    image_proj_w: Node           # (d_img, h)
    image_proj_b: Node           # (1, h)
    encoder: list[EncoderLayerParams]
    attention: aspect.AspectAttentionParams
    sentic: aspect.SenticParams
    gcn: list[aspect.GcnLayerParams]
    decoder: list[DecoderLayerParams]
    bos_embed: Node              # (1, h) decoder start symbol
    class_embed: Node            # (3, h) sentiment category embeddings
    eos_embed: Node              # (1, h) terminator candidate

    def named(self) -> list[tuple[str, Node]]:
        out = [("embedding.token", self.token_embed),
               ("embedding.image_proj_w", self.image_proj_w),
               ("embedding.image_proj_b", self.image_proj_b)]
        for i, layer in enumerate(self.encoder):
            out.extend(layer.named(f"encoder.{i}"))
        out.extend(self.attention.named("aspect_attention"))
        out.extend(self.sentic.named("sentic"))
        for i, layer in enumerate(self.gcn):
            out.extend(layer.named(f"gcn.{i}"))
        for i, layer in enumerate(self.decoder):
            out.extend(layer.named(f"decoder.{i}"))
        out.append(("decoder.bos", self.bos_embed))
        out.append(("class.embed", self.class_embed))
        out.append(("class.eos", self.eos_embed))
        return out


POSENC_SCALE = 0.3  # keep position information below content magnitude


@lru_cache(maxsize=64)
def _posenc(length: int, width: int) -> np.ndarray:
    """Fixed sinusoidal position table; read-only so caching is safe."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(width, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(i / 2.0) / width)
    enc = np.where(np.arange(width) % 2 == 0, np.sin(angle), np.cos(angle))
    enc *= POSENC_SCALE
    enc.setflags(write=False)
    return enc


@lru_cache(maxsize=64)
def _causal_mask(length: int) -> np.ndarray:
    mask = np.triu(np.full((length, length), -1e30), k=1)
    mask.setflags(write=False)
    return mask


def fuse(h_denoised: Node, h_refined: Node, alpha_1: float, alpha_2: float) -> Node:
    """Elementwise blend of the attention-denoised and graph-refined states."""
    if h_denoised.shape != h_refined.shape:
        raise ContractError(
            f"fuse shape mismatch: {h_denoised.shape} vs {h_refined.shape}")
    return alpha_1 * h_denoised + alpha_2 * h_refined


def build_vocab(samples: Sequence[MultimodalSample]) -> list[str]:
    """Sorted unique tokens; lookup failures map to the UNK row."""
    return sorted({t for s in samples for t in s.tokens})


class Model:
    """Configuration + vocabulary + parameters, with forward passes as methods."""

    def __init__(self, config: ModelConfig, vocab: Sequence[str], image_feat_dim: int):
        if config.image_feat_dim is not None and config.image_feat_dim != image_feat_dim:
            raise ContractError(
                f"configured image_feat_dim {config.image_feat_dim} != data {image_feat_dim}")
        self.config = config
        self.image_feat_dim = int(image_feat_dim)
        self.vocab = list(vocab)
        self.token_index = {t: i + 1 for i, t in enumerate(self.vocab)}
        self.params = self._init_params(np.random.default_rng(config.seed))

    # -- parameter construction ------------------------------------------

    def _init_params(self, rng: np.random.Generator) -> ModelParameters:
        h = self.config.hidden_size

        def table(rows: int, cols: int) -> Node:
            # embedding-like: fan-in is the row width
            bound = 1.0 / math.sqrt(cols)
            return Node(rng.uniform(-bound, bound, size=(rows, cols)), op="param")

        def weight(rows: int, cols: int) -> Node:
            # matmul weight: fan-in is the input dimension
            bound = 1.0 / math.sqrt(rows)
            return Node(rng.uniform(-bound, bound, size=(rows, cols)), op="param")

        enc = [EncoderLayerParams(weight(h, h), weight(h, h), weight(h, h),
                                  weight(h, h), weight(h, h), table(1, h),
                                  weight(h, h), table(1, h))
               for _ in range(self.config.encoder_layers)]
        attn = aspect.AspectAttentionParams(
            w_ca=weight(h, h), b_ca=table(1, h), w_h=weight(h, h), b_h=table(1, h),
            w_alpha=weight(2 * h, 1), b_alpha=table(1, 1),
            w_1=weight(h, h), w_2=weight(h, h),
            w_beta=weight(2 * h, 1), b_beta=table(1, 1))
        # w_s maps the scalar lexicon value to R^h, so its fan-in is 1
        sentic = aspect.SenticParams(w_s=Node(rng.uniform(-1.0, 1.0, size=(1, h)), op="param"),
                                     b_s=table(1, h))
        gcn = [aspect.GcnLayerParams(weight(h, h), table(1, h))
               for _ in range(self.config.gcn_depth)]
        dec = [DecoderLayerParams(weight(h, h), weight(h, h), weight(h, h),
                                  weight(h, h), weight(h, h), weight(h, h),
                                  weight(h, h), weight(h, h), weight(h, h),
                                  table(1, h), weight(h, h), table(1, h))
               for _ in range(self.config.decoder_layers)]
        return ModelParameters(
            token_embed=table(len(self.vocab) + 1, h),
            image_proj_w=weight(self.image_feat_dim, h),
            image_proj_b=table(1, h),
            encoder=enc, attention=attn, sentic=sentic, gcn=gcn, decoder=dec,
            bos_embed=table(1, h), class_embed=table(3, h), eos_embed=table(1, h))

    def named_parameters(self) -> list[tuple[str, Node]]:
        return self.params.named()

    def parameter_groups(self) -> dict[str, list[tuple[str, Node]]]:
        groups: dict[str, list[tuple[str, Node]]] = {}
        for name, node in self.named_parameters():
            groups.setdefault(name.split(".")[0], []).append((name, node))
        return groups

    # -- forward passes -----------------------------------------------------

    def token_ids(self, tokens: Sequence[str]) -> list[int]:
        return [self.token_index.get(t, UNK_INDEX) for t in tokens]

    def encode(self, sample: MultimodalSample) -> Node:
        """Hidden states for the m image blocks followed by the n tokens."""
        h = self.config.hidden_size
        img = Node(sample.image_blocks, op="const") @ self.params.image_proj_w \
            + self.params.image_proj_b
        tok = ad.gather_rows(self.params.token_embed, self.token_ids(sample.tokens))
        tok = tok + Node(_posenc(sample.n_tokens, h), op="const")
        x = ad.concat_rows([img, tok])
        scale = 1.0 / math.sqrt(h)
        for layer in self.params.encoder:
            q = x @ layer.w_q
            k = x @ layer.w_k
            v = x @ layer.w_v
            attn = ad.softmax_rows((q @ k.T) * scale)
            x = x + (attn @ v) @ layer.w_o
            x = x + ad.tanh(x @ layer.ff_w1 + layer.ff_b1) @ layer.ff_w2 + layer.ff_b2
        return x

    def _candidate_positions(self, sample: MultimodalSample) -> list[int]:
        m = sample.n_blocks
        return [m + i for i, flag in enumerate(sample.noun_flags) if flag]

    def _graph_aspect_tokens(self, sample: MultimodalSample, training: bool) -> list[int]:
        if training and self.config.gold_aspect_graph:
            return sorted({a.begin for a in sample.aspects})
        return [i for i, flag in enumerate(sample.noun_flags) if flag]

    def fused_states(self, sample: MultimodalSample, training: bool) -> tuple[Node, dict]:
        """Encoder -> aspect denoising -> graph refinement -> fusion."""
        cfg = self.config
        m, n = sample.n_blocks, sample.n_tokens
        h_enc = self.encode(sample)
        diag: dict = {}
        if cfg.aed_bypass:
            h_hat = h_enc
            h_sent = h_enc
        else:
            h_hat, alpha, beta = aspect.aspect_attention(
                h_enc, self._candidate_positions(sample), self.params.attention)
            diag["attention"] = alpha
            diag["gates"] = beta
            h_sent = aspect.sentic_enhance(h_hat, sample.sentic, self.params.sentic, m)
        assoc = aspect.build_association_matrix(
            h_hat, sample.dep_dist, self._graph_aspect_tokens(sample, training),
            m, n, cfg.dep_threshold)
        diag["association"] = assoc
        h_refined = aspect.gcn_forward(assoc, h_sent, self.params.gcn)
        h_tilde = fuse(h_hat, h_refined, cfg.fusion_alpha_1, cfg.fusion_alpha_2)
        return h_tilde, diag

    def candidate_matrix(self, sample: MultimodalSample, h_tilde: Node) -> Node:
        """(n + 4, h) rows: averaged token candidates, 3 classes, terminator."""
        m, n = sample.n_blocks, sample.n_tokens
        tok = ad.gather_rows(self.params.token_embed, self.token_ids(sample.tokens))
        h_text = ad.slice_rows(h_tilde, m, m + n)
        averaged = (tok + h_text) * 0.5
        return ad.concat_rows([averaged, self.params.class_embed, self.params.eos_embed])

    def _decoder_states(self, h_tilde: Node, inputs: Node) -> Node:
        h = self.config.hidden_size
        scale = 1.0 / math.sqrt(h)
        length = inputs.shape[0]
        x = inputs + Node(_posenc(length, h), op="const")
        mask = Node(_causal_mask(length), op="const")
        for layer in self.params.decoder:
            q = x @ layer.w_sq
            k = x @ layer.w_sk
            v = x @ layer.w_sv
            attn = ad.softmax_rows((q @ k.T) * scale + mask)
            x = x + (attn @ v) @ layer.w_so
            q2 = x @ layer.w_cq
            k2 = h_tilde @ layer.w_ck
            v2 = h_tilde @ layer.w_cv
            cross = ad.softmax_rows((q2 @ k2.T) * scale)
            x = x + (cross @ v2) @ layer.w_co
            x = x + ad.tanh(x @ layer.ff_w1 + layer.ff_b1) @ layer.ff_w2 + layer.ff_b2
        return x

    def _prefix_inputs(self, cand: Node, prefix: Sequence[int]) -> Node:
        if len(prefix) == 0:
            return self.params.bos_embed
        rows = ad.gather_rows(cand, list(prefix))
        return ad.concat_rows([self.params.bos_embed, rows])

    def _teacher_logits(self, sample: MultimodalSample, h_tilde: Node,
                        target: Sequence[int]) -> Node:
        cand = self.candidate_matrix(sample, h_tilde)
        inputs = self._prefix_inputs(cand, list(target[:-1]))
        states = self._decoder_states(h_tilde, inputs)
        return (states @ cand.T) * (1.0 / math.sqrt(self.config.hidden_size))

    def sequence_loss(self, sample: MultimodalSample) -> Node:
        """Teacher-forced negative log-likelihood of the gold target sequence."""
        target = encode_target(sample.aspects, sample.n_tokens)
        h_tilde, _ = self.fused_states(sample, training=True)
        logits = self._teacher_logits(sample, h_tilde, target)
        logp = ad.log_softmax_rows(logits)
        return -ad.sum_all(ad.pick_per_row(logp, target))

    def _step_logits(self, sample: MultimodalSample, h_tilde: Node, cand: Node,
                     prefix: Sequence[int]) -> np.ndarray:
        inputs = self._prefix_inputs(cand, prefix)
        states = self._decoder_states(h_tilde, inputs)
        logits = ad.slice_rows(states, inputs.shape[0] - 1, inputs.shape[0]) @ cand.T
        return logits.value[0] / math.sqrt(self.config.hidden_size)

    def decoder_distribution(self, sample: MultimodalSample, prefix: Sequence[int],
                             training_graph: bool = True) -> np.ndarray:
        """Next-symbol probabilities (length n + 4) given a gold-style prefix."""
        n = sample.n_tokens
        eos = n + 3
        prefix = list(prefix)
        for idx in prefix:
            if idx == eos:
                raise ContractError("prefix contains EOS mid-stream")
            if not (0 <= idx < output_vocab_size(n)):
                raise ContractError(f"prefix index {idx} out of vocabulary")
        h_tilde, _ = self.fused_states(sample, training=training_graph)
        cand = self.candidate_matrix(sample, h_tilde)
        logits = self._step_logits(sample, h_tilde, cand, prefix)
        shifted = logits - logits.max()
        e = np.exp(shifted)
        return e / e.sum()

    def predict(self, sample: MultimodalSample) -> list[AspectAnnotation]:
        """Greedy decoding with validity masks; always parseable."""
        n = sample.n_tokens
        h_tilde, _ = self.fused_states(sample, training=False)
        cand = self.candidate_matrix(sample, h_tilde)
        aspects: list[AspectAnnotation] = []
        prefix: list[int] = []
        for _ in range(self.config.max_aspects):
            logits = self._step_logits(sample, h_tilde, cand, prefix)
            allowed = np.full_like(logits, -np.inf)
            allowed[:n] = logits[:n]
            allowed[n + 3] = logits[n + 3]
            choice = int(np.argmax(allowed))
            if choice == n + 3:
                break
            begin = choice
            prefix.append(begin)
            logits = self._step_logits(sample, h_tilde, cand, prefix)
            allowed = np.full_like(logits, -np.inf)
            allowed[begin:n] = logits[begin:n]
            end = int(np.argmax(allowed))
            prefix.append(end)
            logits = self._step_logits(sample, h_tilde, cand, prefix)
            pol = int(np.argmax(logits[n:n + 3]))
            prefix.append(n + pol)
            aspects.append(AspectAnnotation(begin, end, Polarity(pol)))
        return aspects

    def predict_given_spans(self, sample: MultimodalSample) -> list[AspectAnnotation]:
        """Classify polarity for the sample's gold spans (span-conditioned decode)."""
        n = sample.n_tokens
        h_tilde, _ = self.fused_states(sample, training=True)
        cand = self.candidate_matrix(sample, h_tilde)
        out: list[AspectAnnotation] = []
        prefix: list[int] = []
        for a in sample.aspects:
            prefix.extend((a.begin, a.end))
            logits = self._step_logits(sample, h_tilde, cand, prefix)
            pol = int(np.argmax(logits[n:n + 3]))
            prefix.append(n + pol)
            out.append(AspectAnnotation(a.begin, a.end, Polarity(pol)))
        return out

    # -- persistence ----------------------------------------------------------

    def state_dict(self) -> dict:
        cfg = dict(self.config.__dict__)
        return {"config": cfg,
                "vocab": self.vocab,
                "image_feat_dim": self.image_feat_dim,
                "params": {name: node.value.tolist()
                           for name, node in self.named_parameters()}}

    @classmethod
    def from_state(cls, state: dict) -> "Model":
        cfg = ModelConfig(**state["config"])
        model = cls(cfg, state["vocab"], state["image_feat_dim"])
        for name, node in model.named_parameters():
            node.value = np.asarray(state["params"][name], dtype=np.float64)
        return model


def batch_mean_loss(model: Model, samples: Sequence[MultimodalSample]) -> Node:
    """Mean of per-sample teacher-forced losses, as one scalar graph."""
    if not samples:
        raise ContractError("batch must be nonempty")
    total = None
    for s in samples:
        loss = model.sequence_loss(s)
        total = loss if total is None else total + loss
    return total * (1.0 / len(samples))
