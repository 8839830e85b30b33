"""Curriculum-scheduled dual denoising for multimodal aspect-based sentiment analysis."""

from .data import (AspectAnnotation, Dataset, MultimodalSample, Polarity,
                   decode_target, encode_target, load_dataset, save_dataset,
                   validate_sample)
from .estimator import AspectSentimentDenoiser
from .metrics import MetricsReport, evaluate
from .model import Model, ModelConfig
from .pipeline import RunConfig, run_training
from .synth import SynthConfig, generate_dataset

__all__ = [
    "AspectAnnotation",
    "AspectSentimentDenoiser",
    "Dataset",
    "MetricsReport",
    "Model",
    "ModelConfig",
    "MultimodalSample",
    "Polarity",
    "RunConfig",
    "SynthConfig",
    "decode_target",
    "encode_target",
    "evaluate",
    "generate_dataset",
    "load_dataset",
    "run_training",
    "save_dataset",
    "validate_sample",
]
