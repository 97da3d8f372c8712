"""Flat ``key = value`` run configuration.

One assignment per line; ``#`` starts a comment; blank lines are ignored.
Unknown or repeated keys are errors, reported with their line number.
Relative paths are resolved against the directory holding the config file.
"""

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import DegradationSpec
from .errors import ConfigError
from .network import RcanConfig, parse_bool, parse_ca_mode
from .optim import AdamHyper


@dataclass
class RunConfig:
    # architecture
    G: int = 10
    B: int = 20
    C: int = 64
    r: int = 16
    scale: int = 4
    use_lsc: bool = True
    use_ssc: bool = True
    ca_mode: str = "learned"
    mean_shift: tuple | None = RcanConfig.mean_shift
    # optimizer
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    halving_interval: int = 200_000
    # degradation
    degradation: str = "bi"
    blur_sigma: float = 1.6
    blur_ksize: int = 7
    # data
    train_manifest: Path | None = None
    synthetic_images: int = 2
    synthetic_size: int = 192
    patch_size: int = 48
    batch_size: int = 16
    fixed_pairs: int = 0
    augment: bool = True
    # run
    steps: int = 1000
    seed: int = 0
    dtype: str = "float32"
    report_interval: int = 100
    checkpoint_interval: int = 0
    checkpoint: Path = Path("rcan.ckpt")
    log: Path | None = None
    source: Path | None = field(default=None, repr=False)

    @property
    def model(self):
        return RcanConfig(G=self.G, B=self.B, C=self.C, r=self.r, scale=self.scale,
                          use_lsc=self.use_lsc, use_ssc=self.use_ssc, ca_mode=self.ca_mode,
                          mean_shift=self.mean_shift)

    @property
    def hyper(self):
        return AdamHyper(self.lr0, self.beta1, self.beta2, self.eps, self.halving_interval)

    @property
    def degradation_spec(self):
        return DegradationSpec(self.degradation.upper(), self.scale, self.blur_sigma, self.blur_ksize)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype).type

    @property
    def log_path(self):
        return self.log if self.log is not None else self.checkpoint.with_suffix(".log")


def _path(text, base):
    p = Path(text)
    return p if p.is_absolute() or base is None else base / p


def _mean_shift(text):
    if text.lower() == "none":
        return None
    vals = tuple(float(t) for t in text.split(","))
    if len(vals) != 3:
        raise ValueError("mean_shift needs three comma-separated values or 'none'")
    return vals


def _choice(*options):
    def parse(text):
        t = text.lower()
        if t not in options:
            raise ValueError(f"expected one of {options}")
        return t
    return parse


def _ca_mode(text):
    parse_ca_mode(text)
    return text


_PARSERS = {
    "use_lsc": parse_bool, "use_ssc": parse_bool, "augment": parse_bool,
    "ca_mode": _ca_mode, "mean_shift": _mean_shift,
    "degradation": _choice("bi", "bd"), "dtype": _choice("float32", "float64"),
}
_PATH_KEYS = ("train_manifest", "checkpoint", "log")


def parse_config(text, source=None):
    base = Path(source).parent if source is not None else None
    types = {f.name: f.type for f in fields(RunConfig) if f.name != "source"}
    values, seen = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, source)
        key, _, value = (s.strip() for s in line.partition("="))
        if key not in types:
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        if key in seen:
            raise ConfigError(f"key {key!r} repeated (first set on line {seen[key]})", lineno, source)
        seen[key] = lineno
        try:
            if key in _PATH_KEYS:
                values[key] = _path(value, base)
            elif key in _PARSERS:
                values[key] = _PARSERS[key](value)
            elif types[key] is int:
                values[key] = int(value)
            elif types[key] is float:
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"bad value {value!r} for {key}: {exc}", lineno, source) from None

    cfg = RunConfig(source=Path(source) if source else None, **values)
    if "checkpoint" not in values and base is not None:
        cfg.checkpoint = base / cfg.checkpoint
    try:
        cfg.model
        cfg.degradation_spec
    except ValueError as exc:
        raise ConfigError(str(exc), path=source) from None
    if cfg.patch_size < 1 or cfg.batch_size < 1 or cfg.steps < 0:
        raise ConfigError("patch_size and batch_size must be positive, steps non-negative",
                          path=source)
    return cfg


def load_config(path):
    return parse_config(Path(path).read_text(), source=path)


def dump_config(cfg):
    """Render a RunConfig back to the flat format (paths as stored)."""
    lines = []
    for f in fields(RunConfig):
        if f.name == "source":
            continue
        v = getattr(cfg, f.name)
        if v is None:
            if f.name == "mean_shift":
                lines.append("mean_shift = none")
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif f.name == "mean_shift":
            v = ",".join(repr(m) for m in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
