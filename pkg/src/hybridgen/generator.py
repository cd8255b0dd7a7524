"""Autoregressive variable-length sampling.

Each step recomputes the latent for the current prefix, draws a
discrete id from the temperature-scaled adjusted categorical (BOS and
PAD masked out), and stops on EOS; otherwise the continuous vector is
drawn from the reverse diffusion process conditioned on the latent.
Per-item seeds derive from (seed, item index) so batch results do not
depend on how a batch is partitioned.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import heads
from .autodiff import Tensor, no_grad, softmax
from .model import SequenceModel
from .schema import AtomicUnit, UnitSequence, check_sequence


@dataclass(frozen=True)
class GenConfig:
    max_len: int = 128
    temperature: float = 1.0
    eos_alpha: float = 0.1
    sampler: str = "ancestral"
    steps: list | None = None
    seed: int = 0
    prefix: UnitSequence | None = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.sampler not in ("ancestral", "ddim"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.max_len < 2:
            raise ValueError("max_len must be >= 2")


@dataclass
class GenResult:
    sequence: UnitSequence | None
    truncated: bool = False
    error: str | None = None

    def length(self, schema) -> int:
        return self.sequence.length(schema) if self.sequence else 0


def _item_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _sample_id(logits: np.ndarray, schema, temperature: float,
               rng: np.random.Generator) -> int:
    masked = logits.copy()
    masked[schema.bos_id] = -np.inf
    masked[schema.pad_id] = -np.inf
    scaled = masked / temperature
    scaled -= scaled.max()
    probs = np.exp(scaled)
    probs /= probs.sum()
    return int(rng.choice(len(probs), p=probs))


def generate(model: SequenceModel, cfg: GenConfig, *,
             rng: np.random.Generator | None = None,
             head_fn=None) -> GenResult:
    """Sample one sequence; the prefix (if any) is reproduced verbatim.

    ``head_fn(z) -> logits`` may replace the discrete head (oracle
    injection in tests).
    """
    schema = model.schema
    if cfg.max_len > model.config.max_len:
        raise ValueError(f"max_len {cfg.max_len} exceeds model capacity "
                         f"{model.config.max_len}")
    if cfg.prefix is not None:
        check_sequence(cfg.prefix, schema)
        units = list(cfg.prefix.units)
        if not units or units[0].d != schema.bos_id:
            raise ValueError("prefix must begin with BOS")
        if any(u.d == schema.eos_id for u in units):
            raise ValueError("prefix already contains EOS")
    else:
        units = [AtomicUnit.special(schema.bos_id, schema.cont_dim)]
    if len(units) >= cfg.max_len:
        raise ValueError(f"prefix length {len(units)} must be < max_len "
                         f"{cfg.max_len}")
    rng = rng or _item_rng(cfg.seed, 0)

    truncated = False
    while True:
        z = model.latent_states(units)[-1]
        if head_fn is not None:
            logits = np.asarray(head_fn(z), dtype=np.float64)
        else:
            out = heads.step_outputs(z, model.store, schema, cfg.eos_alpha)
            logits = out.adjusted_logits
        d = _sample_id(logits, schema, cfg.temperature, rng)
        if d == schema.eos_id:
            units.append(AtomicUnit.special(schema.eos_id, schema.cont_dim))
            break
        c = model.sample_continuous(z, rng=rng, steps=cfg.steps,
                                    mode=cfg.sampler)
        units.append(AtomicUnit.of(d, c))
        if len(units) >= cfg.max_len:
            truncated = True
            break
    seq = UnitSequence.of(units)
    check_sequence(seq, schema)
    return GenResult(sequence=seq, truncated=truncated)


def complete_batch(model: SequenceModel, prefixes, cfg: GenConfig, *,
                   first_index: int = 0, head_fn=None) -> list[GenResult]:
    """Independent generation per prefix, order-preserving.

    Item seeds derive from (cfg.seed, first_index + position), so a
    batch split into chunks reproduces the unsplit results when each
    chunk passes its offset. Invalid prefixes produce a per-item error
    entry; the batch continues.
    """
    results = []
    for i, prefix in enumerate(prefixes):
        item_cfg = replace(cfg, prefix=prefix)
        rng = _item_rng(cfg.seed, first_index + i)
        try:
            results.append(generate(model, item_cfg, rng=rng,
                                    head_fn=head_fn))
        except ValueError as exc:
            results.append(GenResult(sequence=None, error=str(exc)))
    return results
