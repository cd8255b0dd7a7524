"""Teacher-forced training: total objective, optimizer, and the loop.

The total loss combines the discrete cross-entropy, the weighted
denoising objective over real-unit positions, and the weighted squared
error between the expected and target sequence lengths. Training is
single-writer on the parameters and deterministic under a fixed seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields, asdict

import numpy as np

from . import diffusion, heads
from .autodiff import Tensor, no_grad, take
from .backbone import GradientCheckReport, ModelConfig, gradient_check
from .diffusion import DiffusionConfig
from .model import SequenceModel
from .schema import SchemaSpec, UnitSequence


@dataclass(frozen=True)
class TrainConfig:
    """Loss weights and optimizer settings (desk-scale defaults).

    ``lambda_cont`` rescales the denoising term and ``lambda_length``
    the length regularizer; ``eos_alpha`` scales the EOS logit
    adjustment. ``timestep_samples`` is the number of (t, eps) draws
    per latent in the denoising objective.
    """

    lambda_cont: float = 1.0
    lambda_length: float = 0.1
    eos_alpha: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs: int = 20
    timestep_samples: int = 4
    grad_clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.lambda_cont < 0 or self.lambda_length < 0 or self.eos_alpha < 0:
            raise ValueError("loss weights must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.timestep_samples < 1:
            raise ValueError("timestep_samples must be >= 1")


def parse_train_config(text: str) -> TrainConfig:
    """Parse the ``key = value`` config format (# starts a comment)."""
    known = {f.name: f.type for f in fields(TrainConfig)}
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        caster = int if known[key] in ("int", int) else float
        kwargs[key] = caster(value)
    return TrainConfig(**kwargs)


def format_train_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(cfg).items())


# ----------------------------------------------------------------------
# batching
# ----------------------------------------------------------------------

def pad_batch(seqs: list[UnitSequence], schema: SchemaSpec):
    """Pad to the longest sequence; returns (ids, conts, lengths)."""
    if not seqs:
        raise ValueError("empty batch")
    T = max(len(s) for s in seqs)
    B = len(seqs)
    ids = np.full((B, T), schema.pad_id, dtype=np.int64)
    conts = np.zeros((B, T, schema.cont_dim), dtype=np.float64)
    lengths = np.zeros(B, dtype=np.int64)
    for b, seq in enumerate(seqs):
        for t, u in enumerate(seq.units):
            ids[b, t] = u.d
            conts[b, t] = u.c
        lengths[b] = seq.length(schema)
    return ids, conts, lengths


@dataclass
class LossTerms:
    total: Tensor
    discrete: float
    continuous: float
    length: float
    expected_lengths: np.ndarray


def total_loss(model: SequenceModel, ids: np.ndarray, conts: np.ndarray,
               lengths: np.ndarray, cfg: TrainConfig, *,
               rng: np.random.Generator, training: bool = True) -> LossTerms:
    """Teacher-forced objective for a padded batch.

    Targets are the inputs shifted one step left; PAD targets are
    masked from the cross-entropy and only real-unit targets enter the
    denoising term. The expected-length horizon is the padded length.
    """
    schema = model.schema
    B, T = ids.shape
    z = model.latents(ids, conts, training=training, rng=rng)
    drop = model.config.dropout if training else 0.0
    logits = heads.discrete_logits(z, model.store, drop=drop, rng=rng,
                                   training=training)
    adjusted = heads.eos_adjust(logits, z, model.store, schema, cfg.eos_alpha,
                                drop=drop, rng=rng, training=training)

    # discrete CE over shifted targets
    targets = np.full((B, T), schema.pad_id, dtype=np.int64)
    targets[:, :-1] = ids[:, 1:]
    ce_mask = (targets != schema.pad_id).astype(np.float64)
    l_disc = heads.ce_loss(adjusted, targets, ce_mask, schema)

    # denoising loss over real-unit targets
    real = targets < schema.num_classes
    rows, cols = np.nonzero(real)
    if rows.size:
        z_flat = z.reshape((B * T, model.config.embed_dim))
        z_real = take(z_flat, rows * T + cols)
        c_real = conts[rows, cols + 1]
        l_cont = diffusion.denoise_loss(
            c_real, z_real, model.store, model.diffusion, model.schedule,
            num_draws=cfg.timestep_samples, rng=rng)
    else:
        l_cont = (z * 0.0).sum()

    # length regularization on the adjusted termination probabilities;
    # entry t of the series is the probability that EOS follows t real
    # units, so the expected value targets the real-unit count exactly
    # (the BOS-only latent is skipped)
    p_eos = heads.eos_probabilities(adjusted, schema)[:, 1:]
    expected = heads.expected_length(p_eos)
    l_len = heads.length_loss(expected, lengths)

    total = l_disc + l_cont * cfg.lambda_cont + l_len * cfg.lambda_length
    return LossTerms(total=total,
                     discrete=l_disc.item(),
                     continuous=l_cont.item(),
                     length=l_len.item(),
                     expected_lengths=expected.data.copy())


# ----------------------------------------------------------------------
# optimizer
# ----------------------------------------------------------------------

class Adam:
    """First-order adaptive-moment optimizer."""

    def __init__(self, store, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in store.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in store.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p in self.store.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / b1c
            vhat = self.v[name] / b2c
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict:
    if max_norm <= 0:
        return grads
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return {n: g * scale for n, g in grads.items()}


# ----------------------------------------------------------------------
# training loop
# ----------------------------------------------------------------------

class TrainingDiverged(RuntimeError):
    """Loss went non-finite; parameters restored to the last good state."""


@dataclass
class StepRecord:
    step: int
    discrete: float
    continuous: float
    length: float
    length_error: float


@dataclass
class TrainResult:
    steps: int
    metrics: list[StepRecord] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss_discrete", "loss_continuous",
                             "loss_length", "expected_length_error"])
            for r in self.metrics:
                writer.writerow([r.step, repr(r.discrete), repr(r.continuous),
                                 repr(r.length), repr(r.length_error)])


def train(model: SequenceModel, sequences: list[UnitSequence],
          cfg: TrainConfig, *, max_steps: int | None = None,
          checkpoint_path=None) -> TrainResult:
    """Run teacher-forced epochs; deterministic under ``cfg.seed``.

    On a non-finite loss the parameters are restored to the snapshot
    taken at the last completed epoch and ``TrainingDiverged`` is
    raised (after writing that snapshot to ``checkpoint_path`` if one
    was given).
    """
    if not sequences:
        raise ValueError("empty training set")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    optimizer = Adam(model.store, cfg.learning_rate)
    result = TrainResult(steps=0)
    last_good = model.store.snapshot()
    order = np.arange(len(sequences))
    done = False
    for _epoch in range(cfg.epochs):
        if done:
            break
        rng.shuffle(order)
        for lo in range(0, len(order), cfg.batch_size):
            batch = [sequences[i] for i in order[lo:lo + cfg.batch_size]]
            ids, conts, lengths = pad_batch(batch, model.schema)
            model.store.zero_grad()
            try:
                terms = total_loss(model, ids, conts, lengths, cfg, rng=rng)
                finite = np.isfinite(terms.total.item())
            except FloatingPointError:
                finite = False
            if not finite:
                model.store.load_snapshot(last_good)
                if checkpoint_path is not None:
                    model.save(checkpoint_path)
                raise TrainingDiverged(
                    f"non-finite loss at step {result.steps}; restored last "
                    f"good parameters")
            terms.total.backward()
            grads = clip_gradients(model.store.grads(), cfg.grad_clip)
            optimizer.step(grads)
            result.steps += 1
            err = float(np.mean(np.abs(terms.expected_lengths - lengths)))
            result.metrics.append(StepRecord(
                step=result.steps, discrete=terms.discrete,
                continuous=terms.continuous, length=terms.length,
                length_error=err))
            if max_steps is not None and result.steps >= max_steps:
                done = True
                break
        last_good = model.store.snapshot()
    if checkpoint_path is not None:
        model.save(checkpoint_path)
    return result


# ----------------------------------------------------------------------
# gradient-check harness over the full objective
# ----------------------------------------------------------------------

def default_gradient_check(*, embed_dim: int = 8, num_layers: int = 2,
                           tolerance: float = 1e-4,
                           samples_per_group: int = 20,
                           seed: int = 0,
                           corrupt: dict | None = None) -> GradientCheckReport:
    """Finite-difference check of the total objective on a tiny model."""
    if embed_dim > 16 or num_layers > 2:
        raise ValueError("gradient check expects a tiny model "
                         "(embed_dim <= 16, layers <= 2)")
    schema = SchemaSpec(num_classes=3, cont_dim=2)
    model = SequenceModel(
        schema,
        ModelConfig(embed_dim=embed_dim, num_layers=num_layers, num_heads=2,
                    max_len=16, dropout=0.1),
        DiffusionConfig(steps=10, blocks=2, width=8),
        seed=seed)
    cfg = TrainConfig(lambda_cont=0.7, lambda_length=0.3, eos_alpha=0.1,
                      timestep_samples=2, seed=seed)
    data_rng = np.random.default_rng(seed + 1)
    seqs = _random_sequences(schema, data_rng, count=3, max_units=5)
    ids, conts, lengths = pad_batch(seqs, model.schema)

    def loss_fn(store):
        # same seed every call: the objective must be a deterministic
        # function of the parameters for finite differences to apply
        rng = np.random.default_rng(np.random.SeedSequence(seed + 2))
        return total_loss(model, ids, conts, lengths, cfg, rng=rng).total

    return gradient_check(loss_fn, model.store, tolerance=tolerance,
                          samples_per_group=samples_per_group,
                          rng=np.random.default_rng(seed + 3),
                          corrupt=corrupt)


def _random_sequences(schema: SchemaSpec, rng: np.random.Generator, *,
                      count: int, max_units: int) -> list[UnitSequence]:
    from .schema import AtomicUnit
    seqs = []
    for _ in range(count):
        n = int(rng.integers(1, max_units + 1))
        units = [AtomicUnit.special(schema.bos_id, schema.cont_dim)]
        for _ in range(n):
            d = int(rng.integers(0, schema.num_classes))
            c = rng.uniform(-1.0, 1.0, size=schema.cont_dim)
            units.append(AtomicUnit.of(d, c))
        units.append(AtomicUnit.special(schema.eos_id, schema.cont_dim))
        seqs.append(UnitSequence.of(units))
    return seqs
