"""Backbone, heads and denoiser composed over one parameter store."""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from . import backbone, diffusion, heads
from .backbone import ModelConfig, ParameterStore
from .diffusion import DiffusionConfig, build_schedule
from .schema import SchemaSpec


class SequenceModel:
    """Trainable generator state: parameters, schedule, and configs."""

    def __init__(self, schema: SchemaSpec, config: ModelConfig | None = None,
                 diff: DiffusionConfig | None = None, *, seed: int = 0,
                 dtype="float64"):
        self.schema = schema
        self.config = config or ModelConfig()
        self.diffusion = diff or DiffusionConfig()
        self.seed = seed
        self.store = ParameterStore(dtype=np.dtype(dtype))
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        backbone.init_backbone_params(self.store, schema, self.config, rng)
        heads.init_head_params(self.store, schema, self.config.embed_dim, rng)
        diffusion.init_denoiser_params(self.store, schema.cont_dim,
                                       self.config.embed_dim, self.diffusion,
                                       rng)
        self.schedule = build_schedule(self.diffusion.steps,
                                       self.diffusion.schedule)

    # ------------------------------------------------------------------
    def latents(self, ids: np.ndarray, conts: np.ndarray, *,
                training: bool = False, rng=None):
        return backbone.forward_batch(ids, conts, self.store, self.config,
                                      self.schema, training=training, rng=rng)

    def latent_states(self, prefix) -> np.ndarray:
        return backbone.latent_states(prefix, self.store, self.config,
                                      self.schema)

    def sample_continuous(self, z, *, rng, steps=None, mode="ancestral",
                          **kwargs) -> np.ndarray:
        return diffusion.sample_reverse(z, self.store, self.diffusion,
                                        self.schedule, rng=rng, steps=steps,
                                        mode=mode, **kwargs)

    # ------------------------------------------------------------------
    def header(self) -> dict:
        return {
            "schema": {
                "num_classes": self.schema.num_classes,
                "cont_dim": self.schema.cont_dim,
                "coord_min": self.schema.coord_min,
                "coord_max": self.schema.coord_max,
            },
            "model": asdict(self.config),
            "diffusion": asdict(self.diffusion),
            "seed": self.seed,
        }

    def save(self, path) -> None:
        backbone.save_checkpoint(path, self.store, self.header())

    @classmethod
    def load(cls, path, dtype="float64") -> "SequenceModel":
        header, store = backbone.load_checkpoint(path, dtype=np.dtype(dtype))
        schema = SchemaSpec(**header["schema"])
        model = cls(schema, ModelConfig(**header["model"]),
                    DiffusionConfig(**header["diffusion"]),
                    seed=header.get("seed", 0), dtype=dtype)
        model.store.load_snapshot(store.snapshot())
        return model
