"""Full RCAN: head conv, residual-in-residual trunk, sub-pixel upscaler, reconstruction conv.

Parameters live in an ordered ``dict`` mapping dotted names to arrays::

    head.{weight,bias}                                   3 -> C, 3x3
    rir.groups.{g}.blocks.{b}.conv1 / conv2              C -> C, 3x3
    rir.groups.{g}.blocks.{b}.ca.down / ca.up            C -> C/r -> C, 1x1 (learned CA only)
    rir.groups.{g}.tail                                  C -> C, 3x3
    rir.tail                                             C -> C, 3x3
    upsample.{i}                                         C -> C*u*u, 3x3, then pixel shuffle
    tail                                                 C -> 3, 3x3
"""

import math
import re
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import blocks, layers
from .blocks import CaParams, RcabParams, RgParams, RirParams
from .data import dihedral, dihedral_inverse
from .errors import InconsistentCheckpointError, ShapeError
from .layers import Conv2dParams, Tape
from .rng import SplitMix64

DIV2K_MEAN = (0.4488, 0.4371, 0.4040)
UPSCALE_STAGES = {2: (2,), 3: (3,), 4: (2, 2), 8: (2, 2, 2)}
_CONSTANT_RE = re.compile(r"^constant\(\s*([-+0-9.eE]+)\s*\)$")


def parse_ca_mode(mode):
    """``"learned"`` -> ``None``; ``"constant(a)"`` -> ``a``."""
    mode = str(mode).strip()
    if mode == "learned":
        return None
    m = _CONSTANT_RE.match(mode)
    if not m:
        raise ValueError(f"ca_mode must be 'learned' or 'constant(<value>)', got {mode!r}")
    return float(m.group(1))


@dataclass(frozen=True)
class RcanConfig:
    G: int = 10
    B: int = 20
    C: int = 64
    r: int = 16
    scale: int = 4
    use_lsc: bool = True
    use_ssc: bool = True
    ca_mode: str = "learned"
    mean_shift: tuple | None = DIV2K_MEAN
    in_channels: int = 3
    out_channels: int = 3

    def __post_init__(self):
        for name in ("G", "B", "C", "r"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.C % self.r:
            raise ValueError(f"C={self.C} is not divisible by r={self.r}")
        if self.scale not in UPSCALE_STAGES:
            raise ValueError(f"scale must be one of {tuple(UPSCALE_STAGES)}, got {self.scale}")
        if self.in_channels != 3 or self.out_channels != 3:
            raise ValueError("RCAN works on 3-channel colour images")
        parse_ca_mode(self.ca_mode)
        if self.mean_shift is not None:
            object.__setattr__(self, "mean_shift", tuple(float(m) for m in self.mean_shift))
            if len(self.mean_shift) != 3:
                raise ValueError(f"mean_shift needs 3 values, got {self.mean_shift}")

    @property
    def ca_constant(self):
        return parse_ca_mode(self.ca_mode)

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return RcanConfig(**d)

    def to_items(self):
        """Flat ``(key, text)`` pairs; inverse of :meth:`from_items`."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                text = "true" if v else "false"
            elif f.name == "mean_shift":
                text = "none" if v is None else ",".join(repr(m) for m in v)
            else:
                text = str(v)
            out.append((f.name, text))
        return out

    @classmethod
    def from_items(cls, items):
        kw = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, text in items:
            if key not in types:
                raise KeyError(key)
            if key == "mean_shift":
                kw[key] = None if text.lower() == "none" else tuple(
                    float(t) for t in text.split(","))
            elif key in ("use_lsc", "use_ssc"):
                kw[key] = parse_bool(text)
            elif key == "ca_mode":
                kw[key] = text
            else:
                kw[key] = int(text)
        return cls(**kw)


def parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def param_shapes(config):
    """Ordered ``{name: shape}`` for every tensor of the network."""
    C, k = config.C, 3
    shapes = {}

    def conv(name, cin, cout, ks=k):
        shapes[name + ".weight"] = (cout, cin, ks, ks)
        shapes[name + ".bias"] = (cout,)

    conv("head", config.in_channels, C)
    learned = config.ca_constant is None
    for g in range(config.G):
        for b in range(config.B):
            pre = f"rir.groups.{g}.blocks.{b}"
            conv(pre + ".conv1", C, C)
            conv(pre + ".conv2", C, C)
            if learned:
                conv(pre + ".ca.down", C, C // config.r, 1)
                conv(pre + ".ca.up", C // config.r, C, 1)
        conv(f"rir.groups.{g}.tail", C, C)
    conv("rir.tail", C, C)
    for i, u in enumerate(UPSCALE_STAGES[config.scale]):
        conv(f"upsample.{i}", C, C * u * u)
    conv("tail", C, config.out_channels)
    return shapes


def param_count(config):
    return sum(math.prod(s) for s in param_shapes(config).values())


def build(config, seed, dtype=np.float64):
    """Seeded initialization.

    Weights are drawn in name order from one :class:`~rcan.rng.SplitMix64`
    stream as ``(2u - 1) * sqrt(6 / fan_in)`` with ``fan_in = in_c * k * k``;
    biases start at zero and consume no draws.
    """
    rng = SplitMix64(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".weight"):
            bound = math.sqrt(6.0 / (shape[1] * shape[2] * shape[3]))
            u = rng.uniform(shape)
            params[name] = ((2.0 * u - 1.0) * bound).astype(dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    return params


def validate_params(params, config):
    expected = param_shapes(config)
    if list(params) != list(expected):
        missing = [n for n in expected if n not in params]
        extra = [n for n in params if n not in expected]
        raise InconsistentCheckpointError(
            f"parameter names do not match config (missing {missing[:3]}, unexpected {extra[:3]})"
        )
    for name, shape in expected.items():
        if tuple(params[name].shape) != shape:
            raise InconsistentCheckpointError(
                f"{name}: shape {tuple(params[name].shape)} but config needs {shape}"
            )


def _conv(params, name):
    return Conv2dParams(params[name + ".weight"], params[name + ".bias"], name)


def structure(params, config):
    """Views of the flat parameter dict as nested block parameters (no copies)."""
    const = config.ca_constant
    groups = []
    for g in range(config.G):
        rcabs = []
        for b in range(config.B):
            pre = f"rir.groups.{g}.blocks.{b}"
            if const is None:
                ca = CaParams(_conv(params, pre + ".ca.down"), _conv(params, pre + ".ca.up"))
            else:
                ca = CaParams(constant=const)
            rcabs.append(RcabParams(_conv(params, pre + ".conv1"), _conv(params, pre + ".conv2"), ca))
        groups.append(RgParams(rcabs, _conv(params, f"rir.groups.{g}.tail"), config.use_ssc))
    rir = RirParams(groups, _conv(params, "rir.tail"), config.use_lsc)
    ups = [_conv(params, f"upsample.{i}") for i in range(len(UPSCALE_STAGES[config.scale]))]
    return _conv(params, "head"), rir, ups, _conv(params, "tail")


def _mean(config, dtype):
    return np.asarray(config.mean_shift, dtype=dtype).reshape(1, 3, 1, 1)


def forward(x, params, config):
    """``I_LR (n, 3, h, w) -> (I_SR (n, 3, s*h, s*w), tape)``."""
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[1] != config.in_channels:
        raise ShapeError(f"network input must be (n, 3, h, w), got {x.shape}")
    head, rir, ups, tail = structure(params, config)
    dtype = params["head.weight"].dtype
    x = x.astype(dtype, copy=False)
    if config.mean_shift is not None:
        x = x - _mean(config, dtype)
    f0, t_head = layers.conv2d(x, head)
    f, t_rir = blocks.rir_forward(f0, rir)
    t_ups = []
    for conv, u in zip(ups, UPSCALE_STAGES[config.scale]):
        f, tc = layers.conv2d(f, conv)
        f = layers.pixel_shuffle(f, u)
        t_ups.append((conv, tc, u))
    y, t_tail = layers.conv2d(f, tail)
    if config.mean_shift is not None:
        y = y + _mean(config, dtype)
    return y, Tape("rcan", head=(head, t_head), rir=t_rir, ups=t_ups, tail=(tail, t_tail))


def backward(grad_y, tape):
    """Returns ``(grads, grad_x)``; ``grads`` maps every parameter name to its gradient."""
    t = tape.consume("rcan")
    grads = {}
    tail, t_tail = t["tail"]
    g, pg = layers.conv2d_backward(grad_y, t_tail)
    blocks._accum(grads, tail, pg)
    for conv, tc, u in reversed(t["ups"]):
        g = layers.pixel_shuffle_backward(g, u)
        g, pg = layers.conv2d_backward(g, tc)
        blocks._accum(grads, conv, pg)
    g = blocks.rir_backward(g, t["rir"], grads)
    head, t_head = t["head"]
    g, pg = layers.conv2d_backward(g, t_head)
    blocks._accum(grads, head, pg)
    return grads, g


def predict(x, params, config):
    return forward(x, params, config)[0]


def self_ensemble(fn, x):
    """Average of ``T^-1(fn(T(x)))`` over the 8 dihedral transforms ``T`` of the spatial axes."""
    acc = None
    for mode in range(8):
        xt = np.ascontiguousarray(dihedral(x, mode, axes=(2, 3)))
        y = dihedral_inverse(fn(xt), mode, axes=(2, 3))
        acc = y.copy() if acc is None else acc + y
    return acc / 8.0


def self_ensemble_forward(x, params, config):
    return self_ensemble(lambda t: predict(t, params, config), x)
