"""L1 objective, Adam, step-halving learning rate and the training loop."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import network
from .data import augment, degrade_array, mod_crop, quantize, sample_patch_pair, to_float
from .errors import NonFiniteError, ShapeError, TrainingDiverged
from .rng import SplitMix64


def l1_loss(pred, target):
    """Mean absolute error and its gradient (``sign(0) = 0``)."""
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


@dataclass
class AdamHyper:
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    halving_interval: int = 200_000


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def lr_at(iteration, hyper):
    return hyper.lr0 * 2.0 ** -(iteration // hyper.halving_interval)


def adam_step(params, grads, state, hyper, lr):
    """In-place bias-corrected Adam update; returns ``(params, state)``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = hyper.beta1, hyper.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        # an overflowing step surfaces as a non-finite loss on the next forward pass
        with np.errstate(over="ignore"):
            p -= (lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)).astype(p.dtype, copy=False)
    return params, state


# --- datasets ----------------------------------------------------------------

def _to_batch(patches, dtype):
    # (h, w, 3) uint8 patches -> (n, 3, h, w) in [0, 1]
    arr = np.stack([p.transpose(2, 0, 1) for p in patches]).astype(np.float64) / 255.0
    return arr.astype(dtype, copy=False)


class FixedPairs:
    """Always returns the same LR/HR batch (memorization runs)."""

    def __init__(self, lr, hr):
        self.lr = np.asarray(lr)
        self.hr = np.asarray(hr)

    @classmethod
    def from_images(cls, images, spec, patch_lr, count, rng, dtype=np.float64):
        """Cut ``count`` aligned pairs once from ``images`` (cycled) and freeze them."""
        lrs, hrs = [], []
        for i in range(count):
            hr, lr = _degraded(images[i % len(images)], spec)
            pair = sample_patch_pair(hr, lr, spec.scale, patch_lr, rng)
            lrs.append(pair.lr)
            hrs.append(pair.hr)
        return cls(_to_batch(lrs, dtype), _to_batch(hrs, dtype))

    def next_batch(self, rng):
        return self.lr, self.hr


def _degraded(img, spec):
    hr = quantize(mod_crop(to_float(img), spec.scale))
    return hr, quantize(degrade_array(to_float(hr), spec))


class PatchSampler:
    """Random aligned crops with random dihedral augmentation, LR made on the fly."""

    def __init__(self, images, spec, patch_lr=48, batch=16, augment=True, dtype=np.float64):
        if not images:
            raise ValueError("PatchSampler needs at least one image")
        self.pairs = [_degraded(img, spec) for img in images]
        self.spec = spec
        self.patch_lr = patch_lr
        self.batch = batch
        self.augment = augment
        self.dtype = dtype

    def next_batch(self, rng):
        lrs, hrs = [], []
        for _ in range(self.batch):
            hr, lr = self.pairs[rng.randint(len(self.pairs))]
            pair = sample_patch_pair(hr, lr, self.spec.scale, self.patch_lr, rng)
            if self.augment:
                pair = augment(pair, rng.randint(8))
            lrs.append(pair.lr)
            hrs.append(pair.hr)
        return _to_batch(lrs, self.dtype), _to_batch(hrs, self.dtype)


# --- training loop -----------------------------------------------------------

@dataclass
class TrainResult:
    params: dict
    history: list  # (iteration, loss, lr) per step
    state: AdamState


def train_step(params, config, lr_batch, hr_batch, state, hyper, lr):
    pred, tape = network.forward(lr_batch, params, config)
    loss, grad = l1_loss(pred, hr_batch.astype(pred.dtype, copy=False))
    if not math.isfinite(loss):
        return loss
    grads, _ = network.backward(grad, tape)
    adam_step(params, grads, state, hyper, lr)
    return loss


def train(config, dataset, steps, seed, hyper=None, dtype=np.float64, params=None,
          report_every=0, on_report=None, checkpoint_every=0, on_checkpoint=None):
    """Deterministic training loop.

    Parameters come from ``build(config, seed)`` unless given; batches draw from
    ``SplitMix64(seed + 1)``. ``on_report(it, loss, lr)`` fires every
    ``report_every`` steps and on the last step; ``on_checkpoint(params, it)``
    every ``checkpoint_every`` steps. A non-finite loss raises
    :class:`~rcan.errors.TrainingDiverged` carrying the history so far.
    """
    hyper = hyper or AdamHyper()
    if params is None:
        params = network.build(config, seed, dtype=dtype)
    rng = SplitMix64(seed + 1)
    state = AdamState()
    history = []
    for it in range(steps):
        lr_batch, hr_batch = dataset.next_batch(rng)
        lr = lr_at(it, hyper)
        loss = train_step(params, config, lr_batch, hr_batch, state, hyper, lr)
        if not math.isfinite(loss):
            exc = TrainingDiverged(it, loss)
            exc.history = history
            raise exc
        history.append((it, loss, lr))
        if on_report and report_every and (it % report_every == 0 or it == steps - 1):
            on_report(it, loss, lr)
        if on_checkpoint and checkpoint_every and (it + 1) % checkpoint_every == 0:
            on_checkpoint(params, it + 1)
    return TrainResult(params, history, state)
