import math

import numpy as np
import pytest

from rcan import network, optim
from rcan.data import DegradationSpec, synthetic_image
from rcan.errors import NonFiniteError, TrainingDiverged
from rcan.optim import AdamHyper, AdamState
from rcan.rng import SplitMix64


def test_l1_examples():
    p = np.array([1.0, -2.0, 3.0, 0.5]).reshape(1, 1, 2, 2)
    loss, g = optim.l1_loss(p, np.zeros_like(p))
    assert loss == pytest.approx(6.5 / 4)
    np.testing.assert_array_equal(g.ravel(), [0.25, -0.25, 0.25, 0.25])
    assert optim.l1_loss(p, p.copy()) == (0.0, pytest.approx(np.zeros_like(p)))


def test_adam_first_step_is_sign_step():
    hyper = AdamHyper()
    g = np.array([0.5, -2.0, 1e-3])
    p = {"w": np.zeros(3)}
    optim.adam_step(p, {"w": g.copy()}, AdamState(), hyper, 1e-2)
    np.testing.assert_allclose(p["w"], -1e-2 * g / (np.abs(g) + 1e-8), rtol=1e-12)


def test_adam_zero_lr_keeps_parameters():
    rng = np.random.default_rng(0)
    p = {"w": rng.normal(size=(3, 3))}
    before = p["w"].copy()
    state = AdamState()
    for _ in range(3):
        optim.adam_step(p, {"w": rng.normal(size=(3, 3))}, state, AdamHyper(), 0.0)
    np.testing.assert_array_equal(p["w"], before)
    assert state.t == 3


def test_adam_matches_reference_loop():
    rng = np.random.default_rng(1)
    hyper = AdamHyper(beta1=0.8, beta2=0.99)
    p = {"w": rng.normal(size=4)}
    w, m, v = p["w"].copy(), np.zeros(4), np.zeros(4)
    state = AdamState()
    for t in range(1, 6):
        g = rng.normal(size=4)
        m = 0.8 * m + 0.2 * g
        v = 0.99 * v + 0.01 * g * g
        w = w - 0.01 * (m / (1 - 0.8 ** t)) / (np.sqrt(v / (1 - 0.99 ** t)) + 1e-8)
        optim.adam_step(p, {"w": g}, state, hyper, 0.01)
    np.testing.assert_allclose(p["w"], w, rtol=1e-12)


def test_adam_rejects_non_finite_gradient():
    with pytest.raises(NonFiniteError, match="bad"):
        optim.adam_step({"bad": np.zeros(2)}, {"bad": np.array([0.0, np.nan])}, AdamState(), AdamHyper(), 1e-3)


def test_learning_rate_halving():
    h = AdamHyper(lr0=1e-4, halving_interval=200_000)
    assert optim.lr_at(0, h) == 1e-4
    assert optim.lr_at(199_999, h) == 1e-4
    assert optim.lr_at(200_000, h) == 5e-5
    assert optim.lr_at(600_000, h) == 1.25e-5


def _dataset(batch=2, patch=8, augment=True):
    rng = SplitMix64(9)
    imgs = [synthetic_image(40, 36, rng) for _ in range(2)]
    return optim.PatchSampler(imgs, DegradationSpec("BI", 2), patch, batch, augment)


def test_sampler_batches(rng):
    ds = _dataset()
    lr, hr = ds.next_batch(SplitMix64(0))
    assert lr.shape == (2, 3, 8, 8) and hr.shape == (2, 3, 16, 16)
    assert lr.min() >= 0 and hr.max() <= 1


def test_training_is_deterministic(tiny):
    runs = [optim.train(tiny, _dataset(), 4, seed=3, hyper=AdamHyper(lr0=1e-3)) for _ in range(2)]
    assert runs[0].history == runs[1].history
    assert all(np.array_equal(runs[0].params[k], runs[1].params[k]) for k in runs[0].params)
    assert [h[0] for h in runs[0].history] == [0, 1, 2, 3]


def test_zero_steps_returns_initial_parameters(tiny):
    res = optim.train(tiny, _dataset(), 0, seed=0)
    init = network.build(tiny, 0)
    assert res.history == []
    assert all(np.array_equal(res.params[k], init[k]) for k in init)


def test_reporting_and_checkpoint_hooks(tiny):
    reports, saves = [], []
    optim.train(tiny, _dataset(), 5, seed=0, report_every=2, on_report=lambda *a: reports.append(a[0]),
                checkpoint_every=2, on_checkpoint=lambda p, it: saves.append(it))
    assert reports == [0, 2, 4]
    assert saves == [2, 4]


def test_loss_decreases_on_fixed_batch(tiny):
    rng = SplitMix64(1)
    imgs = [synthetic_image(48, 48, rng)]
    ds = optim.FixedPairs.from_images(imgs, DegradationSpec("BI", 2), 12, 2, SplitMix64(2))
    res = optim.train(tiny, ds, 60, seed=0, hyper=AdamHyper(lr0=1e-3))
    assert res.history[-1][1] < 0.5 * res.history[0][1]


def test_divergence_raises_with_history(tiny):
    class Poisoned:
        calls = 0

        def next_batch(self, rng):
            self.calls += 1
            lr = np.full((1, 3, 4, 4), 0.5)
            if self.calls == 3:
                lr[0, 0, 0, 0] = np.nan
            return lr, np.zeros((1, 3, 8, 8))

    with pytest.raises(TrainingDiverged) as info:
        optim.train(tiny, Poisoned(), 10, seed=0)
    assert info.value.iteration == 2
    assert len(info.value.history) == 2 and math.isnan(info.value.loss)
