"""Autoregressive sampling: termination, determinism, batching."""

import numpy as np
import pytest

from hybridgen.backbone import ModelConfig
from hybridgen.diffusion import DiffusionConfig
from hybridgen.generator import GenConfig, complete_batch, generate
from hybridgen.model import SequenceModel
from hybridgen.schema import (AtomicUnit, SchemaSpec, UnitSequence,
                              validate_sequence)

SCHEMA = SchemaSpec(num_classes=3, cont_dim=2)


def tiny_model(seed=0, max_len=16):
    return SequenceModel(
        SCHEMA,
        ModelConfig(embed_dim=8, num_layers=1, num_heads=1, max_len=max_len,
                    dropout=0.0),
        DiffusionConfig(steps=4, blocks=1, width=8), seed=seed)


def bos_prefix(*units):
    return UnitSequence.of([AtomicUnit.special(SCHEMA.bos_id, 2), *units])


def eos_head(z):
    logits = np.full(SCHEMA.vocab_size, -10.0)
    logits[SCHEMA.eos_id] = 10.0
    return logits


def test_forced_eos_yields_prefix_plus_eos():
    model = tiny_model()
    prefix = bos_prefix(AtomicUnit.of(0, [0.1, 0.2]))
    res = generate(model, GenConfig(max_len=8, seed=0, prefix=prefix),
                   head_fn=eos_head)
    ids = [u.d for u in res.sequence.units]
    assert ids == [SCHEMA.bos_id, 0, SCHEMA.eos_id]
    assert not res.truncated
    np.testing.assert_array_equal(res.sequence.units[1].c, (0.1, 0.2))


def test_fixed_seed_reproduces_sequences():
    model = tiny_model()
    a = generate(model, GenConfig(max_len=10, seed=3))
    b = generate(model, GenConfig(max_len=10, seed=3))
    assert a.sequence == b.sequence


def test_outputs_always_validate_and_respect_max_len():
    model = tiny_model()
    for seed in range(8):
        res = generate(model, GenConfig(max_len=6, seed=seed))
        assert validate_sequence(res.sequence, SCHEMA)
        assert len(res.sequence) <= 6
        if res.truncated:
            assert res.sequence.units[-1].d != SCHEMA.eos_id


def test_prefix_reproduced_verbatim():
    model = tiny_model()
    prefix = bos_prefix(AtomicUnit.of(1, [0.5, -0.5]),
                        AtomicUnit.of(2, [0.25, 0.75]))
    res = generate(model, GenConfig(max_len=10, seed=1, prefix=prefix))
    assert res.sequence.units[:3] == prefix.units


def test_prefix_validation_errors():
    model = tiny_model()
    no_bos = UnitSequence.of([AtomicUnit.of(0, [0.0, 0.0])])
    with pytest.raises(ValueError, match="BOS"):
        generate(model, GenConfig(max_len=8, prefix=no_bos))
    with_eos = bos_prefix(AtomicUnit.special(SCHEMA.eos_id, 2))
    with pytest.raises(ValueError, match="EOS"):
        generate(model, GenConfig(max_len=8, prefix=with_eos))
    long = bos_prefix(*[AtomicUnit.of(0, [0.0, 0.0]) for _ in range(9)])
    with pytest.raises(ValueError, match="max_len"):
        generate(model, GenConfig(max_len=10, prefix=long))


def test_max_len_cannot_exceed_model_capacity():
    model = tiny_model(max_len=8)
    with pytest.raises(ValueError, match="capacity"):
        generate(model, GenConfig(max_len=32))


def test_gen_config_validation():
    with pytest.raises(ValueError):
        GenConfig(temperature=0.0)
    with pytest.raises(ValueError):
        GenConfig(sampler="euler")


def test_complete_batch_empty():
    model = tiny_model()
    assert complete_batch(model, [], GenConfig(max_len=8)) == []


def test_complete_batch_order_and_distinctness():
    model = tiny_model()
    prefix = bos_prefix(AtomicUnit.of(0, [0.3, 0.3]))
    results = complete_batch(model, [prefix] * 6, GenConfig(max_len=10, seed=5))
    assert len(results) == 6
    assert all(r.sequence.units[:2] == prefix.units for r in results)
    assert len({r.sequence for r in results}) > 1


def test_partition_invariance_with_offsets():
    model = tiny_model()
    prefixes = [bos_prefix(AtomicUnit.of(i % 3, [0.1 * i, -0.1 * i]))
                for i in range(6)]
    cfg = GenConfig(max_len=10, seed=11)
    whole = complete_batch(model, prefixes, cfg)
    parts = complete_batch(model, prefixes[:2], cfg, first_index=0) \
        + complete_batch(model, prefixes[2:5], cfg, first_index=2) \
        + complete_batch(model, prefixes[5:], cfg, first_index=5)
    assert [r.sequence for r in whole] == [r.sequence for r in parts]


def test_invalid_prefix_gives_item_error_batch_continues():
    model = tiny_model()
    good = bos_prefix(AtomicUnit.of(0, [0.2, 0.2]))
    bad = UnitSequence.of([AtomicUnit.of(0, [0.2, 0.2])])  # no BOS
    results = complete_batch(model, [good, bad, good],
                             GenConfig(max_len=10, seed=2))
    assert results[0].sequence is not None
    assert results[1].sequence is None
    assert "BOS" in results[1].error
    assert results[2].sequence is not None


def test_unconditional_entries_use_bare_bos():
    model = tiny_model()
    results = complete_batch(model, [None, None], GenConfig(max_len=8, seed=4))
    for r in results:
        assert r.sequence.units[0].d == SCHEMA.bos_id
