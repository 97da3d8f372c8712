"""Channel attention, RCAB, residual group and the residual-in-residual trunk.

Backward passes return the input gradient and accumulate parameter gradients
into a ``grads`` dict keyed ``"<conv name>.weight"`` / ``"<conv name>.bias"``.
"""

from dataclasses import dataclass

import numpy as np

from . import layers
from .errors import ShapeError
from .layers import Conv2dParams, Tape


@dataclass
class CaParams:
    down: Conv2dParams | None = None  # C -> C/r, 1x1
    up: Conv2dParams | None = None  # C/r -> C, 1x1
    constant: float | None = None  # when set, s is this value and down/up are unused

    @property
    def learned(self):
        return self.constant is None


@dataclass
class RcabParams:
    conv1: Conv2dParams
    conv2: Conv2dParams
    ca: CaParams


@dataclass
class RgParams:
    blocks: list
    tail: Conv2dParams
    use_ssc: bool = True


@dataclass
class RirParams:
    groups: list
    tail: Conv2dParams
    use_lsc: bool = True


def _accum(grads, conv, pair):
    gw, gb = pair
    for key, g in ((conv.name + ".weight", gw), (conv.name + ".bias", gb)):
        if key in grads:
            grads[key] += g
        else:
            grads[key] = g


def _check_channels(x, conv, what):
    if x.ndim != 4 or x.shape[1] != conv.in_channels:
        raise ShapeError(f"{what}: expected {conv.in_channels} channels, got shape {x.shape}")


def ca_forward(x, p):
    """Returns ``(s, x_hat, tape)`` with ``s`` of shape ``(n, c, 1, 1)``."""
    if not p.learned:
        s = np.full((x.shape[0], x.shape[1], 1, 1), p.constant, dtype=x.dtype)
        return s, x * x.dtype.type(p.constant), Tape("ca", constant=p.constant)

    if x.ndim != 4 or x.shape[1] != p.up.out_channels:
        raise ShapeError(f"{p.down.name}: expected {p.up.out_channels} channels, got {x.shape}")
    z, t_gap = layers.global_avg_pool(x)
    d, t_down = layers.conv2d(z, p.down)
    a, t_relu = layers.relu(d)
    e, t_up = layers.conv2d(a, p.up)
    s, t_sig = layers.sigmoid(e)
    x_hat, t_scale = layers.channel_scale(x, s)
    return s, x_hat, Tape("ca", params=p, gap=t_gap, down=t_down, relu=t_relu,
                          up=t_up, sig=t_sig, scale=t_scale)


def ca_backward(grad_xhat, tape, grads):
    t = tape.consume("ca")
    if "constant" in t:
        return grad_xhat * grad_xhat.dtype.type(t["constant"])
    p = t["params"]
    gx, gs = layers.channel_scale_backward(grad_xhat, t["scale"])
    g = layers.sigmoid_backward(gs, t["sig"])
    g, pg = layers.conv2d_backward(g, t["up"])
    _accum(grads, p.up, pg)
    g = layers.relu_backward(g, t["relu"])
    g, pg = layers.conv2d_backward(g, t["down"])
    _accum(grads, p.down, pg)
    return gx + layers.gap_backward(g, t["gap"])


def rcab_forward(f_in, p):
    """``f_in + CA(X) * X`` with residual ``X = conv2(relu(conv1(f_in)))``."""
    _check_channels(f_in, p.conv1, p.conv1.name)
    h, t1 = layers.conv2d(f_in, p.conv1)
    h, tr = layers.relu(h)
    x, t2 = layers.conv2d(h, p.conv2)
    _, x_hat, tca = ca_forward(x, p.ca)
    return f_in + x_hat, Tape("rcab", params=p, c1=t1, relu=tr, c2=t2, ca=tca, residual=x_hat)


def rcab_backward(grad_out, tape, grads):
    t = tape.consume("rcab")
    p = t["params"]
    g = ca_backward(grad_out, t["ca"], grads)
    g, pg = layers.conv2d_backward(g, t["c2"])
    _accum(grads, p.conv2, pg)
    g = layers.relu_backward(g, t["relu"])
    g, pg = layers.conv2d_backward(g, t["c1"])
    _accum(grads, p.conv1, pg)
    return grad_out + g


def _chain_forward(x, blocks, forward):
    tapes = []
    for b in blocks:
        x, tp = forward(x, b)
        tapes.append(tp)
    return x, tapes


def _chain_backward(g, tapes, backward, grads):
    for tp in reversed(tapes):
        g = backward(g, tp, grads)
    return g


def rg_forward(f_prev, p):
    _check_channels(f_prev, p.tail, p.tail.name)
    body, tapes = _chain_forward(f_prev, p.blocks, rcab_forward)
    out, t_tail = layers.conv2d(body, p.tail)
    if p.use_ssc:
        out = f_prev + out
    return out, Tape("rg", params=p, blocks=tapes, tail=t_tail)


def rg_backward(grad_out, tape, grads):
    t = tape.consume("rg")
    p = t["params"]
    g, pg = layers.conv2d_backward(grad_out, t["tail"])
    _accum(grads, p.tail, pg)
    g = _chain_backward(g, t["blocks"], rcab_backward, grads)
    return g + grad_out if p.use_ssc else g


def rir_forward(f0, p):
    _check_channels(f0, p.tail, p.tail.name)
    body, tapes = _chain_forward(f0, p.groups, rg_forward)
    out, t_tail = layers.conv2d(body, p.tail)
    if p.use_lsc:
        out = f0 + out
    return out, Tape("rir", params=p, groups=tapes, tail=t_tail)


def rir_backward(grad_out, tape, grads):
    t = tape.consume("rir")
    p = t["params"]
    g, pg = layers.conv2d_backward(grad_out, t["tail"])
    _accum(grads, p.tail, pg)
    g = _chain_backward(g, t["groups"], rg_backward, grads)
    return g + grad_out if p.use_lsc else g
