"""Finite-difference verification of every backward pass.

Each check builds an L1 loss against a target held at least ``margin`` away
from the initial prediction, so the loss has no ties near the evaluation
point, and compares analytic gradients with :func:`rcan.tensor.finite_diff_grad`.
Central differences are meaningless across a ReLU kink, so every evaluation
also records ReLU activation patterns and the residual signs of the loss; a
coordinate whose ``+h`` or ``-h`` evaluation changes that pattern is counted as
skipped instead of compared.
"""

from dataclasses import dataclass

import numpy as np

from . import blocks, layers, network
from .blocks import CaParams, RcabParams
from .layers import Conv2dParams
from .optim import l1_loss
from .tensor import finite_diff_grad, relative_error

TOLERANCE = 1e-4
STEP = 1e-3


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    checked: int
    skipped: int

    @property
    def ok(self):
        return self.checked > 0 and self.max_rel_err <= TOLERANCE


def _signature(masks, residual):
    bits = [np.packbits(m) for m in masks] + [np.packbits(residual > 0), np.packbits(residual < 0)]
    return b"".join(b.tobytes() for b in bits)


def check_function(name, forward, backward, inputs, rng, per_tensor=None, h=STEP, margin=0.1):
    """Gradient check of ``forward(inputs) -> (y, tape)`` / ``backward(g, tape) -> grads``.

    ``inputs`` maps names to float64 arrays; ``backward`` must return a dict
    with a gradient for every entry. ``per_tensor`` caps the number of sampled
    coordinates per tensor (``None`` checks all of them).
    """
    y0, _ = forward(inputs)
    sign = np.where(rng.uniform(size=y0.shape) < 0.5, -1.0, 1.0)
    target = y0 + sign * (margin + margin * rng.uniform(size=y0.shape))

    y, tape = forward(inputs)
    _, g = l1_loss(y, target)
    analytic = backward(g, tape)

    def evaluate(current):
        with layers.record_relu_masks() as masks:
            out, _ = forward(current)
        return l1_loss(out, target)[0], _signature(masks, out - target)

    _, base_sig = evaluate(inputs)
    worst, checked, skipped = 0.0, 0, 0
    for key, arr in inputs.items():
        flat = arr.ravel()
        n = flat.size
        coords = np.arange(n) if per_tensor is None or n <= per_tensor else np.sort(
            rng.choice(n, per_tensor, replace=False))
        sigs = []

        def f(theta, key=key, shape=arr.shape):
            current = dict(inputs)
            current[key] = theta.reshape(shape)
            loss, sig = evaluate(current)
            sigs.append(sig)
            return loss

        grad_flat = analytic[key].ravel()
        for i in coords:
            sigs.clear()
            fd = finite_diff_grad(f, flat, h=h, coords=[i])[0]
            if any(s != base_sig for s in sigs):
                skipped += 1
                continue
            worst = max(worst, float(relative_error(fd, grad_flat[i])))
            checked += 1
    return CheckResult(name, worst, checked, skipped)


# --- primitive layers ----------------------------------------------------------

def _u(rng, *shape):
    return rng.uniform(-1.0, 1.0, size=shape)


def layer_checks(seed):
    rng = np.random.default_rng(seed)
    out = []

    for k in (3, 1):
        def fwd(v, k=k):
            return layers.conv2d(v["x"], Conv2dParams(v["weight"], v["bias"], f"conv{k}"))

        def bwd(g, tape):
            gx, (gw, gb) = layers.conv2d_backward(g, tape)
            return {"x": gx, "weight": gw, "bias": gb}

        inputs = {"x": _u(rng, 2, 3, 5, 4), "weight": _u(rng, 4, 3, k, k), "bias": _u(rng, 4)}
        out.append(check_function(f"conv2d {k}x{k}", fwd, bwd, inputs, rng))

    simple = [
        ("relu", layers.relu, layers.relu_backward),
        ("sigmoid", layers.sigmoid, layers.sigmoid_backward),
        ("global_avg_pool", layers.global_avg_pool, layers.gap_backward),
    ]
    for name, f, b in simple:
        out.append(check_function(
            name, lambda v, f=f: f(v["x"]), lambda g, t, b=b: {"x": b(g, t)},
            {"x": _u(rng, 2, 3, 4, 4) * 3}, rng))

    def cs_bwd(g, t):
        gx, gs = layers.channel_scale_backward(g, t)
        return {"x": gx, "s": gs}

    out.append(check_function(
        "channel_scale", lambda v: layers.channel_scale(v["x"], v["s"]), cs_bwd,
        {"x": _u(rng, 2, 3, 4, 4), "s": _u(rng, 2, 3, 1, 1)}, rng))

    out.append(check_function(
        "pixel_shuffle", lambda v: (layers.pixel_shuffle(v["x"], 2), None),
        lambda g, t: {"x": layers.pixel_shuffle_backward(g, 2)},
        {"x": _u(rng, 1, 8, 3, 3)}, rng))
    return out


def _conv_params(rng, name, cin, cout, k):
    bound = np.sqrt(6.0 / (cin * k * k))
    return Conv2dParams(rng.uniform(-bound, bound, (cout, cin, k, k)),
                        rng.uniform(-0.1, 0.1, cout), name)


def _block_check(name, forward, backward, convs, x, rng, rebuild, per_tensor):
    inputs = {"x": x}
    for c in convs:
        inputs[c.name + ".weight"] = c.weight
        inputs[c.name + ".bias"] = c.bias

    def fwd(v):
        return forward(v["x"], rebuild(v))

    def bwd(g, tape):
        grads = {}
        gx = backward(g, tape, grads)
        grads["x"] = gx
        return grads

    return check_function(name, fwd, bwd, inputs, rng, per_tensor=per_tensor)


def block_checks(seed, per_tensor=12):
    """Channel attention and RCAB in isolation."""
    rng = np.random.default_rng(1000 + seed)
    C, r = 8, 4
    down = _conv_params(rng, "ca.down", C, C // r, 1)
    up = _conv_params(rng, "ca.up", C // r, C, 1)

    def conv(v, name):
        return Conv2dParams(v[name + ".weight"], v[name + ".bias"], name)

    def ca_fwd(x, p):
        _, x_hat, tape = blocks.ca_forward(x, p)
        return x_hat, tape

    ca = _block_check(
        "channel attention", ca_fwd, blocks.ca_backward, [down, up], _u(rng, 2, C, 4, 4), rng,
        lambda v: CaParams(conv(v, "ca.down"), conv(v, "ca.up")), per_tensor)

    c1 = _conv_params(rng, "conv1", C, C, 3)
    c2 = _conv_params(rng, "conv2", C, C, 3)
    rcab = _block_check(
        "rcab", blocks.rcab_forward, blocks.rcab_backward, [c1, c2, down, up],
        _u(rng, 1, C, 5, 5), rng,
        lambda v: RcabParams(conv(v, "conv1"), conv(v, "conv2"),
                             CaParams(conv(v, "ca.down"), conv(v, "ca.up"))), per_tensor)
    return [ca, rcab]


# --- whole network -------------------------------------------------------------

TINY = network.RcanConfig(G=2, B=2, C=8, r=4, scale=2)


def network_check(config=TINY, seed=0, per_tensor=24, input_shape=(1, 3, 8, 8)):
    """Gradient of the L1 loss w.r.t. every parameter tensor and the input."""
    rng = np.random.default_rng(2000 + seed)
    params = network.build(config, seed, dtype=np.float64)
    for name, arr in params.items():
        if name.endswith(".bias"):
            arr[...] = rng.uniform(-0.05, 0.05, arr.shape)
    inputs = {"input": rng.uniform(0.0, 1.0, input_shape), **params}

    def fwd(v):
        return network.forward(v["input"], {k: v[k] for k in params}, config)

    def bwd(g, tape):
        grads, gx = network.backward(g, tape)
        grads["input"] = gx
        return grads

    return check_function(f"rcan G={config.G} B={config.B} C={config.C} r={config.r} "
                          f"x{config.scale} seed {seed}", fwd, bwd, inputs, rng,
                          per_tensor=per_tensor)


def run_suite(seeds=range(10), per_tensor=24, config=TINY):
    results = []
    for seed in seeds:
        results += [CheckResult(f"{r.name} seed {seed}", r.max_rel_err, r.checked, r.skipped)
                    for r in layer_checks(seed) + block_checks(seed)]
        results.append(network_check(config, seed, per_tensor=per_tensor))
    return results
