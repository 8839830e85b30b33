"""Scikit-learn style front door for the whole pipeline.

``AspectSentimentDenoiser`` is a fit/predict estimator over lists of
``MultimodalSample`` (gold aspects travel inside the samples, so ``y`` is
accepted but unused). ``fit`` runs curriculum training, ``predict``
returns one aspect list per sample, and ``score`` is the joint-extraction
F1 against the samples' own annotations, so the estimator drops into
sklearn model-selection utilities that only need fit/predict/score and
get_params/set_params.
"""

from __future__ import annotations

from typing import Optional

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .curriculum import CompetenceSchedule
from .data import AspectAnnotation, Dataset, MultimodalSample, validate_sample
from .metrics import evaluate
from .model import ModelConfig
from .pipeline import RunConfig, run_training


def check_samples(X) -> list[MultimodalSample]:
    """Input validation: accept a Dataset or a sequence of valid samples."""
    if isinstance(X, Dataset):
        samples = list(X.samples)
    else:
        samples = list(X)
    if not samples:
        raise ValueError("X must contain at least one sample")
    for s in samples:
        if not isinstance(s, MultimodalSample):
            raise TypeError(f"expected MultimodalSample, got {type(s).__name__}")
        violations = validate_sample(s)
        if violations:
            raise ValueError(f"sample {s.id!r} is invalid: {violations}")
    return samples


class AspectSentimentDenoiser(BaseEstimator):
    """Curriculum-trained multimodal aspect extraction and sentiment model."""

    def __init__(self, hidden_size: int = 32, encoder_layers: int = 1,
                 decoder_layers: int = 1, gcn_depth: int = 2,
                 fusion_alpha_1: float = 0.5, fusion_alpha_2: float = 0.5,
                 learning_rate: float = 0.05, batch_size: int = 8,
                 epochs: int = 40, seed: int = 0, curriculum: str = "hcd",
                 alpha: float = 0.8, lambda_init: float = 0.1,
                 competence_epochs: Optional[int] = None,
                 min_selection: Optional[int] = None,
                 dep_threshold: int = 2, aed_bypass: bool = False):
        self.hidden_size = hidden_size
        self.encoder_layers = encoder_layers
        self.decoder_layers = decoder_layers
        self.gcn_depth = gcn_depth
        self.fusion_alpha_1 = fusion_alpha_1
        self.fusion_alpha_2 = fusion_alpha_2
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.curriculum = curriculum
        self.alpha = alpha
        self.lambda_init = lambda_init
        self.competence_epochs = competence_epochs
        self.min_selection = min_selection
        self.dep_threshold = dep_threshold
        self.aed_bypass = aed_bypass

    def _run_config(self) -> RunConfig:
        model = ModelConfig(
            hidden_size=self.hidden_size,
            encoder_layers=self.encoder_layers,
            decoder_layers=self.decoder_layers,
            gcn_depth=self.gcn_depth,
            fusion_alpha_1=self.fusion_alpha_1,
            fusion_alpha_2=self.fusion_alpha_2,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            dep_threshold=self.dep_threshold,
            aed_bypass=self.aed_bypass,
        )
        T = self.competence_epochs if self.competence_epochs is not None \
            else max(1, self.epochs // 2)
        return RunConfig(
            model=model,
            schedule=CompetenceSchedule(lambda_init=self.lambda_init, T=T),
            alpha=self.alpha,
            curriculum=self.curriculum,
            min_selection=self.min_selection,
        )

    def fit(self, X, y=None, validation=None) -> "AspectSentimentDenoiser":
        """Train on X; ``validation`` (optional sample list) drives the dev trace."""
        train = check_samples(X)
        dev = check_samples(validation) if validation is not None else train
        result = run_training(self._run_config(), train, dev)
        self.model_ = result.model
        self.traces_ = result.traces
        self.metrics_ = result.metrics
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this AspectSentimentDenoiser instance is not fitted yet")

    def predict(self, X) -> list[list[AspectAnnotation]]:
        self._check_fitted()
        return [self.model_.predict(s) for s in check_samples(X)]

    def score(self, X, y=None) -> float:
        """Joint-extraction (span + polarity) F1 against the samples' annotations."""
        self._check_fitted()
        samples = check_samples(X)
        preds = {s.id: self.model_.predict(s) for s in samples}
        return evaluate(Dataset(samples), preds, "JMASA").f1
