"""Discrete prediction head, EOS logit adjustment, and loss terms.

The categorical head maps a latent to logits over the id vocabulary. A
second scalar head adds a context-dependent correction to the EOS logit
so the model can shape termination; the correction head starts
zero-initialized (identity adjustment). The expected sequence length is
the differentiable series sum over termination probabilities, truncated
at the padded horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, log_softmax, no_grad, softmax
from .backbone import ParameterStore, _normal
from .layers import two_layer_mlp
from .schema import SchemaSpec


@dataclass(frozen=True)
class StepOutputs:
    """Per-step discrete head outputs (evaluation-mode numpy views)."""

    logits: np.ndarray
    adjusted_logits: np.ndarray
    p_eos: float


def init_head_params(store: ParameterStore, schema: SchemaSpec, embed_dim: int,
                     rng: np.random.Generator) -> None:
    D = embed_dim
    store.register("head.disc.w1", _normal(rng, (D, 2 * D)))
    store.register("head.disc.b1", np.zeros(2 * D))
    store.register("head.disc.w2", _normal(rng, (2 * D, schema.vocab_size)))
    store.register("head.disc.b2", np.zeros(schema.vocab_size))
    # zero-init final layer: training starts from the unadjusted model
    store.register("head.eos.w1", _normal(rng, (D, 2 * D)))
    store.register("head.eos.b1", np.zeros(2 * D))
    store.register("head.eos.w2", np.zeros((2 * D, 1)))
    store.register("head.eos.b2", np.zeros(1))


def discrete_logits(z: Tensor, store: ParameterStore, *, drop: float = 0.0,
                    rng=None, training: bool = False) -> Tensor:
    logits = two_layer_mlp(z, store, "head.disc", drop=drop, rng=rng,
                           training=training)
    if not np.isfinite(logits.data).all():
        raise FloatingPointError("non-finite discrete logits")
    return logits


def eos_adjust(logits: Tensor, z: Tensor, store: ParameterStore,
               schema: SchemaSpec, alpha: float, *, drop: float = 0.0,
               rng=None, training: bool = False) -> Tensor:
    """Add alpha * correction(z) to the EOS logit, leaving others as-is."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    bump = two_layer_mlp(z, store, "head.eos", drop=drop, rng=rng,
                         training=training)
    onehot = np.zeros(schema.vocab_size)
    onehot[schema.eos_id] = 1.0
    return logits + bump * alpha * onehot


def step_outputs(z: np.ndarray, store: ParameterStore, schema: SchemaSpec,
                 alpha: float) -> StepOutputs:
    """Evaluation-mode head outputs for a single latent."""
    with no_grad():
        zt = Tensor(np.asarray(z, dtype=np.float64).reshape(1, -1))
        logits = discrete_logits(zt, store)
        adjusted = eos_adjust(logits, zt, store, schema, alpha)
        probs = softmax(adjusted, axis=-1).data[0]
    return StepOutputs(logits=logits.data[0],
                       adjusted_logits=adjusted.data[0],
                       p_eos=float(probs[schema.eos_id]))


def ce_loss(adjusted_logits: Tensor, targets: np.ndarray,
            mask: np.ndarray, schema: SchemaSpec) -> Tensor:
    """Mean negative log-likelihood over unmasked positions.

    ``targets`` is (B, T) of ids, ``mask`` a same-shape 0/1 array; PAD
    targets must already be masked out.
    """
    if ((targets == schema.pad_id) & (mask > 0)).any():
        raise ValueError("PAD target left unmasked in cross-entropy")
    logp = log_softmax(adjusted_logits, axis=-1)
    B, T = targets.shape
    bb, tt = np.meshgrid(np.arange(B), np.arange(T), indexing="ij")
    picked = logp[(bb, tt, targets)]
    total = float(mask.sum())
    if total == 0:
        return (picked * 0.0).sum()
    return -(picked * mask).sum() * (1.0 / total)


def eos_probabilities(adjusted_logits: Tensor, schema: SchemaSpec) -> Tensor:
    """(B, T) termination probabilities from adjusted logits."""
    probs = softmax(adjusted_logits, axis=-1)
    return probs[:, :, schema.eos_id]


def expected_length(p_eos) -> Tensor:
    """Differentiable expected termination step.

    ``sum_t t * p_t * prod_{i<t} (1 - p_i)`` truncated at the horizon;
    runs that never terminate contribute zero. Accepts a (T,) vector or
    a (B, T) batch; returns a scalar or (B,) tensor.
    """
    if not isinstance(p_eos, Tensor):
        p_eos = Tensor(np.asarray(p_eos, dtype=np.float64))
    single = p_eos.ndim == 1
    p = p_eos.reshape((1, -1)) if single else p_eos
    B, T = p.shape
    survive = Tensor(np.ones(B))
    expected = Tensor(np.zeros(B))
    for t in range(T):
        pt = p[:, t]
        expected = expected + pt * survive * float(t + 1)
        survive = survive * (1.0 - pt)
    return expected[0] if single else expected


def length_loss(expected, target_lengths) -> Tensor:
    """Mean squared error between expected and target lengths."""
    if not isinstance(expected, Tensor):
        expected = Tensor(np.asarray(expected, dtype=np.float64))
    target = np.asarray(target_lengths, dtype=np.float64)
    diff = expected - Tensor(target)
    return (diff * diff).mean()
