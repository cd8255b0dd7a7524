"""Noise schedule, corruption, denoising loss, and reverse sampling."""

import numpy as np
import pytest

from hybridgen.backbone import ModelConfig
from hybridgen.diffusion import (DiffusionConfig, NoiseSchedule,
                                 build_schedule, corrupt, denoise_loss,
                                 sample_reverse, uniform_stride_steps)
from hybridgen.model import SequenceModel
from hybridgen.schema import SchemaSpec

SCHEMA = SchemaSpec(num_classes=3, cont_dim=2)


def tiny_model(seed=0, steps=10):
    return SequenceModel(
        SCHEMA,
        ModelConfig(embed_dim=8, num_layers=1, num_heads=1, max_len=8,
                    dropout=0.0),
        DiffusionConfig(steps=steps, blocks=2, width=8), seed=seed)


# ----------------------------------------------------------------------
# schedule
# ----------------------------------------------------------------------

def test_alpha_bar_monotone_both_kinds():
    for kind in ("cosine", "linear"):
        sched = build_schedule(100, kind)
        assert sched.alpha_bars[0] > sched.alpha_bars[-1]
        assert (np.diff(sched.alpha_bars) < 0).all()
        assert ((sched.betas > 0) & (sched.betas < 1)).all()


def test_linear_alpha_bar_matches_running_product():
    sched = build_schedule(50, "linear")
    betas = np.linspace(1e-4, 0.02, 50)
    prod = 1.0
    for t in range(50):
        prod *= 1.0 - betas[t]
        assert abs(sched.alpha_bars[t] - prod) < 1e-12


def test_cosine_endpoint_is_nearly_noise():
    sched = build_schedule(100, "cosine")
    assert sched.alpha_bars[-1] < 0.01


def test_schedule_rejects_tiny_and_unknown():
    with pytest.raises(ValueError):
        build_schedule(1)
    with pytest.raises(ValueError):
        build_schedule(10, "quadratic")


def test_sigma_first_step_is_zero():
    sched = build_schedule(20, "cosine")
    assert sched.sigmas[0] == 0.0
    assert (sched.sigmas >= 0).all()


def test_alpha_bar_lookup_includes_zero():
    sched = build_schedule(10, "linear")
    assert sched.alpha_bar(0) == 1.0
    assert sched.alpha_bar(10) == pytest.approx(sched.alpha_bars[-1])


# ----------------------------------------------------------------------
# corruption
# ----------------------------------------------------------------------

def test_corrupt_identity_and_noise_limits():
    ident = NoiseSchedule(betas=np.array([0.0]), alphas=np.array([1.0]),
                          alpha_bars=np.array([1.0]), sigmas=np.array([0.0]))
    c = np.array([0.3, -0.7])
    eps = np.array([1.0, 2.0])
    np.testing.assert_allclose(corrupt(c, 1, eps, ident), c)
    pure = NoiseSchedule(betas=np.array([1.0]), alphas=np.array([0.0]),
                         alpha_bars=np.array([0.0]), sigmas=np.array([0.0]))
    np.testing.assert_allclose(corrupt(c, 1, eps, pure), eps)


def test_corrupt_formula_exact():
    sched = build_schedule(10, "linear")
    c = np.array([0.5, -0.5])
    eps = np.array([0.1, 0.2])
    t = 4
    ab = sched.alpha_bars[t - 1]
    np.testing.assert_allclose(corrupt(c, t, eps, sched),
                               np.sqrt(ab) * c + np.sqrt(1 - ab) * eps)


def test_corrupt_rejects_bad_timestep():
    sched = build_schedule(10, "linear")
    with pytest.raises(IndexError):
        corrupt(np.zeros(2), 0, np.zeros(2), sched)
    with pytest.raises(IndexError):
        corrupt(np.zeros(2), 11, np.zeros(2), sched)


def test_corrupt_monte_carlo_mean():
    sched = build_schedule(10, "cosine")
    rng = np.random.default_rng(0)
    c = np.array([0.4, -0.6])
    t = 5
    n = 100_000
    eps = rng.standard_normal((n, 2))
    draws = corrupt(np.tile(c, (n, 1)), np.full(n, t), eps, sched)
    ab = sched.alpha_bars[t - 1]
    se = np.sqrt(1 - ab) / np.sqrt(n)
    assert np.abs(draws.mean(axis=0) - np.sqrt(ab) * c).max() < 3 * se + 1e-12


# ----------------------------------------------------------------------
# denoising loss
# ----------------------------------------------------------------------

def test_loss_zero_for_oracle_denoiser():
    model = tiny_model()
    rng = np.random.default_rng(1)
    c = rng.uniform(-1, 1, size=(3, 2))
    z = rng.normal(size=(3, 8))
    captured = {}

    def oracle(c_t, ts, z_rep):
        # recover the injected noise from the corruption identity
        ab = model.schedule.alpha_bar(ts)[:, None]
        c_rep = np.repeat(c, 4, axis=0)
        return (c_t - np.sqrt(ab) * c_rep) / np.sqrt(1 - ab)

    loss = denoise_loss(c, z, model.store, model.diffusion, model.schedule,
                        num_draws=4, rng=np.random.default_rng(2),
                        denoiser_fn=oracle)
    assert loss.item() == pytest.approx(0.0, abs=1e-18)


def test_loss_for_zero_denoiser_is_dimension():
    model = tiny_model()
    rng = np.random.default_rng(3)
    c = rng.uniform(-1, 1, size=(64, 2))
    z = rng.normal(size=(64, 8))
    loss = denoise_loss(c, z, model.store, model.diffusion, model.schedule,
                        num_draws=64, rng=np.random.default_rng(4),
                        denoiser_fn=lambda c_t, ts, z_rep: np.zeros_like(c_t))
    # E ||eps||^2 = m
    assert loss.item() == pytest.approx(SCHEMA.cont_dim, rel=0.05)


def test_loss_order_invariance_of_draws():
    """Averaging over draws commutes: permuting the (t, eps) draws of one
    row leaves the loss unchanged."""
    model = tiny_model()
    rng = np.random.default_rng(5)
    c = rng.uniform(-1, 1, size=(1, 2))
    z = rng.normal(size=(1, 8))
    ts = np.array([2, 7, 4, 9])
    eps = rng.standard_normal((4, 2))

    def loss_with(order):
        total = 0.0
        for i in order:
            c_t = corrupt(c[0], ts[i], eps[i], model.schedule)
            from hybridgen.diffusion import denoise
            pred = denoise(c_t[None, :], np.array([ts[i]]), z, model.store,
                           model.diffusion).data[0]
            total += ((pred - eps[i]) ** 2).sum()
        return total / len(order)

    a = loss_with([0, 1, 2, 3])
    b = loss_with([3, 1, 0, 2])
    assert a == pytest.approx(b, abs=1e-12)


def test_loss_gradient_matches_fd():
    model = tiny_model()
    rng = np.random.default_rng(6)
    c = rng.uniform(-1, 1, size=(2, 2))
    z = rng.normal(size=(2, 8))

    def loss_fn(store):
        return denoise_loss(c, z, store, model.diffusion, model.schedule,
                            num_draws=2, rng=np.random.default_rng(7))

    from hybridgen.backbone import gradient_check
    report = gradient_check(loss_fn, model.store, tolerance=1e-4,
                            samples_per_group=6,
                            rng=np.random.default_rng(8))
    denoiser_groups = [n for n in report.max_rel_error if "denoise" in n]
    assert denoiser_groups
    bad = [n for n in report.failures if "denoise" in n]
    assert not bad, bad


def test_loss_rejects_nonfinite_and_bad_draws():
    model = tiny_model()
    with pytest.raises(ValueError):
        denoise_loss(np.zeros((1, 2)), np.zeros((1, 8)), model.store,
                     model.diffusion, model.schedule, num_draws=0,
                     rng=np.random.default_rng(0))
    with pytest.raises(FloatingPointError):
        denoise_loss(np.zeros((1, 2)), np.zeros((1, 8)), model.store,
                     model.diffusion, model.schedule, num_draws=1,
                     rng=np.random.default_rng(0),
                     denoiser_fn=lambda c_t, ts, z: c_t * np.nan)


# ----------------------------------------------------------------------
# reverse sampling
# ----------------------------------------------------------------------

def test_sampler_deterministic_without_noise_terms():
    model = tiny_model(steps=8)
    z = np.zeros((2, 8))
    init = np.array([[0.25, -0.5], [0.9, 0.1]])
    zero = lambda c_t, ts, zz: np.zeros_like(c_t)
    a = sample_reverse(z, model.store, model.diffusion, model.schedule,
                       rng=np.random.default_rng(1), init=init,
                       noise_scale=0.0, denoiser_fn=zero)
    b = sample_reverse(z, model.store, model.diffusion, model.schedule,
                       rng=np.random.default_rng(999), init=init,
                       noise_scale=0.0, denoiser_fn=zero)
    np.testing.assert_array_equal(a, b)


def test_single_step_schedule_inverts_corruption():
    sched = NoiseSchedule(betas=np.array([0.3]), alphas=np.array([0.7]),
                          alpha_bars=np.array([0.7]), sigmas=np.array([0.0]))
    model = tiny_model(steps=2)
    rng = np.random.default_rng(2)
    c_true = rng.uniform(-0.9, 0.9, size=(4, 2))
    eps = rng.standard_normal((4, 2))
    c1 = corrupt(c_true, 1, eps, sched)

    def perfect(c_t, ts, z):
        ab = sched.alpha_bar(ts)[:, None]
        return (c_t - np.sqrt(ab) * c_true) / np.sqrt(1 - ab)

    for mode in ("ancestral", "ddim"):
        out = sample_reverse(np.zeros((4, 8)), model.store, model.diffusion,
                             sched, rng=np.random.default_rng(3),
                             steps=[1], mode=mode, init=c1,
                             denoiser_fn=perfect)
        np.testing.assert_allclose(out, c_true, atol=1e-6)


def test_sampler_output_shape_and_range():
    model = tiny_model(steps=10)
    rng = np.random.default_rng(4)
    z = rng.normal(size=(5, 8))
    for mode in ("ancestral", "ddim"):
        for steps in (None, uniform_stride_steps(10, 2), [10, 5]):
            out = sample_reverse(z, model.store, model.diffusion,
                                 model.schedule, rng=rng, steps=steps,
                                 mode=mode)
            assert out.shape == (5, 2)
            assert np.isfinite(out).all()
            assert np.abs(out).max() <= 1.0


def test_sampler_rejects_bad_step_sets():
    model = tiny_model(steps=10)
    rng = np.random.default_rng(5)
    z = np.zeros((1, 8))
    with pytest.raises(ValueError, match="empty"):
        sample_reverse(z, model.store, model.diffusion, model.schedule,
                       rng=rng, steps=[])
    with pytest.raises(ValueError, match="final"):
        sample_reverse(z, model.store, model.diffusion, model.schedule,
                       rng=rng, steps=[5, 1])
    with pytest.raises(ValueError, match="uniform"):
        sample_reverse(z, model.store, model.diffusion, model.schedule,
                       rng=rng, steps=[10, 7, 6])
    with pytest.raises(ValueError, match="mode"):
        sample_reverse(z, model.store, model.diffusion, model.schedule,
                       rng=rng, mode="euler")


def test_uniform_stride_helper():
    assert uniform_stride_steps(10, 2) == [10, 8, 6, 4, 2]
    assert uniform_stride_steps(10, 1) == list(range(10, 0, -1))
    with pytest.raises(ValueError):
        uniform_stride_steps(10, 0)


def test_strided_ancestral_matches_full_on_retimed_identity():
    """With a perfect denoiser the strided update still recovers the
    target (the retimed coefficients invert the corruption)."""
    sched = build_schedule(10, "linear")
    model = tiny_model(steps=10)
    rng = np.random.default_rng(6)
    c_true = rng.uniform(-0.8, 0.8, size=(3, 2))

    def perfect(c_t, ts, z):
        ab = sched.alpha_bar(ts)[:, None]
        return (c_t - np.sqrt(ab) * c_true) / np.sqrt(1 - ab)

    eps = rng.standard_normal((3, 2))
    c_T = corrupt(c_true, 10, eps, sched)
    out = sample_reverse(np.zeros((3, 8)), model.store, model.diffusion,
                         sched, rng=np.random.default_rng(7),
                         steps=[10, 5], mode="ancestral", init=c_T,
                         noise_scale=0.0, denoiser_fn=perfect)
    np.testing.assert_allclose(out, c_true, atol=1e-8)
