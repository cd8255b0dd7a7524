"""Causal transformer backbone producing per-step latent vectors.

Each atomic unit is embedded by fusing a discrete-id embedding with a
linear projection of the continuous vector (each half of the hidden
width), plus a learned positional embedding. A stack of pre-norm
decoder blocks with a causal mask yields, at input position p, a latent
that conditions the prediction of the unit at position p + 1.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from .autodiff import Tensor, concat, no_grad, take
from .layers import attention, causal_mask, layer_norm, linear, two_layer_mlp
from .schema import AtomicUnit, SchemaSpec

CHECKPOINT_MAGIC = b"HYBG"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Backbone dimensions. Defaults are desk-scale."""

    embed_dim: int = 64
    num_layers: int = 4
    num_heads: int = 4
    max_len: int = 128
    dropout: float = 0.1

    def __post_init__(self):
        if self.embed_dim % self.num_heads != 0:
            raise ValueError("embed_dim must be divisible by num_heads")
        if self.embed_dim % 2 != 0:
            raise ValueError("embed_dim must be even (split embedding)")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.max_len < 2:
            raise ValueError("max_len must be >= 2")


class ParameterStore:
    """Named parameter groups with gradient buffers of matching shape."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}

    def register(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter group {name!r} already registered")
        t = Tensor(np.ascontiguousarray(array, dtype=self.dtype),
                   requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def grad(self, name: str) -> np.ndarray:
        p = self._params[name]
        return p.grad if p.grad is not None else np.zeros_like(p.data)

    def grads(self) -> dict[str, np.ndarray]:
        return {name: self.grad(name) for name in self._params}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_snapshot(self, snap: dict[str, np.ndarray]) -> None:
        for name, p in self._params.items():
            arr = snap[name]
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name!r}: "
                                 f"{arr.shape} vs {p.data.shape}")
            p.data = np.ascontiguousarray(arr, dtype=self.dtype)

    def check_finite(self) -> None:
        for name, p in self._params.items():
            if not np.isfinite(p.data).all():
                raise FloatingPointError(f"non-finite values in {name!r}")


def _normal(rng: np.random.Generator, shape, scale=0.02) -> np.ndarray:
    return rng.normal(0.0, scale, size=shape)


def init_backbone_params(store: ParameterStore, schema: SchemaSpec,
                         config: ModelConfig, rng: np.random.Generator) -> None:
    D = config.embed_dim
    half = D // 2
    V = schema.vocab_size
    store.register("embed.discrete", _normal(rng, (V, half)))
    store.register("embed.continuous", _normal(rng, (schema.cont_dim, half)))
    store.register("embed.fusion.w", _normal(rng, (D, D)))
    store.register("embed.fusion.b", np.zeros(D))
    store.register("embed.position", _normal(rng, (config.max_len, D)))
    for i in range(config.num_layers):
        p = f"layer{i}"
        for nm in ("wq", "wk", "wv", "wo"):
            store.register(f"{p}.attn.{nm}", _normal(rng, (D, D)))
        for nm in ("bq", "bk", "bv", "bo"):
            store.register(f"{p}.attn.{nm}", np.zeros(D))
        store.register(f"{p}.ln1.g", np.ones(D))
        store.register(f"{p}.ln1.b", np.zeros(D))
        store.register(f"{p}.ln2.g", np.ones(D))
        store.register(f"{p}.ln2.b", np.zeros(D))
        store.register(f"{p}.mlp.w1", _normal(rng, (D, 4 * D)))
        store.register(f"{p}.mlp.b1", np.zeros(4 * D))
        store.register(f"{p}.mlp.w2", _normal(rng, (4 * D, D)))
        store.register(f"{p}.mlp.b2", np.zeros(D))
    store.register("final_ln.g", np.ones(D))
    store.register("final_ln.b", np.zeros(D))


def embed_batch(ids: np.ndarray, conts: np.ndarray, store: ParameterStore,
                schema: SchemaSpec) -> Tensor:
    """Fused embedding for (B, T) ids and (B, T, m) continuous vectors."""
    if ids.size and (ids.min() < 0 or ids.max() >= schema.vocab_size):
        raise IndexError(f"unit id outside embedding range "
                         f"[0, {schema.vocab_size})")
    disc = take(store["embed.discrete"], ids)
    cont = Tensor(np.ascontiguousarray(conts, dtype=store.dtype)) @ \
        store["embed.continuous"]
    both = concat([disc, cont], axis=-1)
    return linear(both, store["embed.fusion.w"], store["embed.fusion.b"])


def embed_parts(unit: AtomicUnit, store: ParameterStore,
                schema: SchemaSpec) -> tuple[np.ndarray, np.ndarray]:
    """Pre-fusion (discrete, continuous) halves for one unit."""
    if not schema.is_legal_id(unit.d):
        raise IndexError(f"unit id {unit.d} outside embedding range")
    disc = store["embed.discrete"].data[unit.d]
    cont = np.asarray(unit.c, dtype=store.dtype) @ store["embed.continuous"].data
    return disc, cont


def embed_unit(unit: AtomicUnit, store: ParameterStore,
               schema: SchemaSpec) -> np.ndarray:
    """Embedding vector of a single unit (no positional term)."""
    with no_grad():
        ids = np.array([[unit.d]], dtype=np.int64)
        conts = np.array(unit.c, dtype=np.float64).reshape(1, 1, -1)
        return embed_batch(ids, conts, store, schema).data[0, 0]


def forward_batch(ids: np.ndarray, conts: np.ndarray, store: ParameterStore,
                  config: ModelConfig, schema: SchemaSpec, *,
                  training: bool = False,
                  rng: np.random.Generator | None = None) -> Tensor:
    """Latents for a padded batch; position p conditions unit p + 1.

    The causal mask lets position p see inputs 0..p only, so the latent
    at p is a function of the first p + 1 units and is used to predict
    the unit that follows them.
    """
    B, T = ids.shape
    if T > config.max_len:
        raise ValueError(f"sequence length {T} exceeds capacity "
                         f"{config.max_len}")
    if T < 1:
        raise ValueError("empty prefix")
    drop = config.dropout if training else 0.0

    x = embed_batch(ids, conts, store, schema)
    x = x + store["embed.position"][:T]
    mask = causal_mask(T, dtype=store.dtype)
    for i in range(config.num_layers):
        p = f"layer{i}"
        attn_in = layer_norm(x, store[f"{p}.ln1.g"], store[f"{p}.ln1.b"])
        x = x + attention(attn_in, store, f"{p}.attn", config.num_heads, mask,
                          drop=drop, rng=rng, training=training)
        mlp_in = layer_norm(x, store[f"{p}.ln2.g"], store[f"{p}.ln2.b"])
        x = x + two_layer_mlp(mlp_in, store, f"{p}.mlp", drop=drop, rng=rng,
                              training=training)
    return layer_norm(x, store["final_ln.g"], store["final_ln.b"])


def latent_states(prefix, store: ParameterStore, config: ModelConfig,
                  schema: SchemaSpec) -> np.ndarray:
    """Evaluation-mode latents (T, D) for a single prefix of units.

    The prefix must begin with BOS; entry p of the result conditions the
    prediction of the unit following ``prefix[:p + 1]``.
    """
    units = list(prefix)
    if not units:
        raise ValueError("empty prefix")
    if units[0].d != schema.bos_id:
        raise ValueError("prefix must begin with BOS")
    ids = np.array([[u.d for u in units]], dtype=np.int64)
    conts = np.array([[u.c for u in units]], dtype=np.float64)
    with no_grad():
        z = forward_batch(ids, conts, store, config, schema, training=False)
    return z.data[0]


# ----------------------------------------------------------------------
# checkpoint container: magic, version, JSON header (configs + group
# shapes in order), then raw little-endian float32 payloads.
# ----------------------------------------------------------------------

def save_checkpoint(path, store: ParameterStore, header: dict) -> None:
    groups = [{"name": n, "shape": list(p.data.shape)} for n, p in store.items()]
    head = dict(header)
    head["groups"] = groups
    blob = json.dumps(head, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for _, p in store.items():
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float64) -> tuple[dict, ParameterStore]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError("not a model checkpoint (bad magic)")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        store = ParameterStore(dtype=dtype)
        for group in header["groups"]:
            shape = tuple(group["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise ValueError(f"truncated payload for group "
                                 f"{group['name']!r}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
            store.register(group["name"], arr.astype(dtype))
        trailing = fh.read(1)
        if trailing:
            raise ValueError("trailing bytes after last parameter group")
    return header, store


# ----------------------------------------------------------------------
# gradient checking
# ----------------------------------------------------------------------

@dataclass
class GradientCheckReport:
    max_rel_error: dict[str, float]
    tolerance: float
    failures: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures


def gradient_check(loss_fn, store: ParameterStore, *, tolerance: float = 1e-4,
                   samples_per_group: int = 20, h: float = 1e-5,
                   floor: float = 1e-6,
                   rng: np.random.Generator | None = None,
                   corrupt: dict | None = None) -> GradientCheckReport:
    """Compare analytic gradients of ``loss_fn(store)`` with central
    finite differences on randomly sampled coordinates per group.

    ``loss_fn`` must be a deterministic function of the parameters (fix
    any internal sampling with a seed). The relative error divides by
    ``max(|fd|, |analytic|, floor)``; the floor keeps coordinates below
    the finite-difference roundoff scale (~eps * |loss| / h) from
    registering as spurious mismatches. ``corrupt`` maps group names to
    callables applied to the analytic gradient before the comparison;
    it exists to fault-inject the checker itself.
    """
    rng = rng or np.random.default_rng(0)
    store.zero_grad()
    loss = loss_fn(store)
    loss.backward()
    analytic = {name: store.grad(name).copy() for name in store.names()}
    if corrupt:
        for name, fn in corrupt.items():
            analytic[name] = fn(analytic[name])

    max_err: dict[str, float] = {}
    failures: list[str] = []
    for name in store.names():
        grad = analytic[name]
        if not np.isfinite(grad).all():
            max_err[name] = float("inf")
            failures.append(name)
            continue
        param = store[name]
        flat = param.data.reshape(-1)
        n = flat.size
        k = min(samples_per_group, n)
        idx = rng.choice(n, size=k, replace=False)
        worst = 0.0
        for j in idx:
            orig = flat[j]
            flat[j] = orig + h
            hi = loss_fn(store).item()
            flat[j] = orig - h
            lo = loss_fn(store).item()
            flat[j] = orig
            fd = (hi - lo) / (2.0 * h)
            an = grad.reshape(-1)[j]
            denom = max(abs(fd), abs(an), floor)
            worst = max(worst, abs(fd - an) / denom)
        max_err[name] = worst
        if worst > tolerance:
            failures.append(name)
    return GradientCheckReport(max_rel_error=max_err, tolerance=tolerance,
                               failures=failures)
