"""Scikit-learn style wrappers around the generator and layout codecs.

`HybridSequenceGenerator` is fit/sample shaped (like mixture models);
`GridQuantizer` and `LayoutSequencer` are stateless transformers. All
hyperparameters live in ``__init__`` so ``get_params``/``set_params``
and ``clone`` compose with pipelines and search utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .backbone import ModelConfig
from .diffusion import DiffusionConfig, uniform_stride_steps
from .drc import GRID, LayoutSample
from .generator import GenConfig, complete_batch, generate
from .model import SequenceModel
from .precision import quantize_dataset
from .schema import SchemaSpec, UnitSequence, check_sequence
from .synthgen import layouts_to_sequences, sequences_to_layouts
from .training import TrainConfig, train


def _check_sequences(X, schema: SchemaSpec) -> list[UnitSequence]:
    seqs = list(X)
    if not seqs:
        raise ValueError("expected a nonempty list of unit sequences")
    for seq in seqs:
        if not isinstance(seq, UnitSequence):
            raise TypeError(f"expected UnitSequence, got {type(seq).__name__}")
        check_sequence(seq, schema)
    return seqs


def _check_layouts(X) -> list[LayoutSample]:
    layouts = [LayoutSample.from_dict(item) if isinstance(item, dict) else item
               for item in X]
    for layout in layouts:
        if not isinstance(layout, LayoutSample):
            raise TypeError(
                f"expected LayoutSample, got {type(layout).__name__}")
    return layouts


class HybridSequenceGenerator(BaseEstimator):
    """Autoregressive generator over hybrid discrete-continuous sequences.

    ``fit`` trains on a list of :class:`UnitSequence`; ``sample`` draws
    new sequences and ``complete`` extends given prefixes. See
    :class:`TrainConfig` for the loss weights.
    """

    def __init__(self, num_classes=3, cont_dim=4, coord_min=0.0,
                 coord_max=40000.0, embed_dim=64, num_layers=4, num_heads=4,
                 max_len=128, dropout=0.1, diffusion_steps=100,
                 schedule="cosine", denoise_blocks=3, denoise_width=128,
                 eos_alpha=0.1, lambda_cont=1.0, lambda_length=0.1,
                 learning_rate=1e-3, batch_size=8, epochs=20,
                 timestep_samples=4, grad_clip=1.0, max_steps=None,
                 temperature=1.0, sampler="ancestral", sample_stride=1,
                 random_state=0, dtype="float64"):
        self.num_classes = num_classes
        self.cont_dim = cont_dim
        self.coord_min = coord_min
        self.coord_max = coord_max
        self.embed_dim = embed_dim
        self.num_layers = num_layers
        self.num_heads = num_heads
        self.max_len = max_len
        self.dropout = dropout
        self.diffusion_steps = diffusion_steps
        self.schedule = schedule
        self.denoise_blocks = denoise_blocks
        self.denoise_width = denoise_width
        self.eos_alpha = eos_alpha
        self.lambda_cont = lambda_cont
        self.lambda_length = lambda_length
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.timestep_samples = timestep_samples
        self.grad_clip = grad_clip
        self.max_steps = max_steps
        self.temperature = temperature
        self.sampler = sampler
        self.sample_stride = sample_stride
        self.random_state = random_state
        self.dtype = dtype

    # ------------------------------------------------------------------
    def _schema(self) -> SchemaSpec:
        return SchemaSpec(num_classes=self.num_classes,
                          cont_dim=self.cont_dim,
                          coord_min=self.coord_min,
                          coord_max=self.coord_max)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(lambda_cont=self.lambda_cont,
                           lambda_length=self.lambda_length,
                           eos_alpha=self.eos_alpha,
                           learning_rate=self.learning_rate,
                           batch_size=self.batch_size,
                           epochs=self.epochs,
                           timestep_samples=self.timestep_samples,
                           grad_clip=self.grad_clip,
                           seed=self.random_state)

    def _gen_config(self, **overrides) -> GenConfig:
        steps = None
        if self.sample_stride and self.sample_stride > 1:
            steps = uniform_stride_steps(self.diffusion_steps,
                                         self.sample_stride)
        base = dict(max_len=self.max_len, temperature=self.temperature,
                    eos_alpha=self.eos_alpha, sampler=self.sampler,
                    steps=steps, seed=self.random_state)
        base.update(overrides)
        return GenConfig(**base)

    def fit(self, X, y=None):
        schema = self._schema()
        seqs = _check_sequences(X, schema)
        self.model_ = SequenceModel(
            schema,
            ModelConfig(embed_dim=self.embed_dim, num_layers=self.num_layers,
                        num_heads=self.num_heads, max_len=self.max_len,
                        dropout=self.dropout),
            DiffusionConfig(steps=self.diffusion_steps,
                            schedule=self.schedule,
                            blocks=self.denoise_blocks,
                            width=self.denoise_width),
            seed=self.random_state, dtype=self.dtype)
        self.history_ = train(self.model_, seqs, self._train_config(),
                              max_steps=self.max_steps)
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit() or load() first")

    def sample(self, n_samples=1, seed=None, **overrides):
        """Draw ``n_samples`` fresh sequences."""
        self._require_fitted()
        cfg = self._gen_config(**overrides)
        if seed is not None:
            cfg = self._gen_config(seed=seed, **overrides)
        return complete_batch(self.model_, [None] * n_samples, cfg)

    def complete(self, prefixes, first_index=0, seed=None, **overrides):
        """Generate continuations for the given BOS-led prefixes."""
        self._require_fitted()
        overrides = dict(overrides)
        if seed is not None:
            overrides["seed"] = seed
        cfg = self._gen_config(**overrides)
        return complete_batch(self.model_, prefixes, cfg,
                              first_index=first_index)

    def save(self, path):
        self._require_fitted()
        self.model_.save(path)
        return self

    def load(self, path):
        """Attach a trained checkpoint instead of fitting."""
        self.model_ = SequenceModel.load(path, dtype=self.dtype)
        return self


class GridQuantizer(TransformerMixin, BaseEstimator):
    """Snap layout coordinates to ``2^bits + 1`` uniform grid lines."""

    def __init__(self, bits=7, coord_max=GRID):
        self.bits = bits
        self.coord_max = coord_max

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return quantize_dataset(_check_layouts(X), self.bits, self.coord_max)


class LayoutSequencer(TransformerMixin, BaseEstimator):
    """Bidirectional layout <-> unit-sequence codec."""

    def __init__(self, ordering="layer-raster", clamp=False):
        self.ordering = ordering
        self.clamp = clamp

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return layouts_to_sequences(_check_layouts(X),
                                    ordering=self.ordering)

    def inverse_transform(self, X):
        return sequences_to_layouts(list(X), clamp=self.clamp)
