"""PSNR/SSIM on the luminance plane and the dataset evaluation harness."""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import data, network
from .errors import RcanError, ShapeError

PEAK = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _crop(a, crop):
    if crop == 0:
        return a
    return a[crop:-crop, crop:-crop]


def psnr(a, b, crop=0):
    """PSNR in dB against an 8-bit peak; ``math.inf`` for identical planes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: plane shapes differ, {a.shape} vs {b.shape}")
    if crop < 0 or min(a.shape) <= 2 * crop:
        raise ShapeError(f"psnr: crop {crop} leaves nothing of a {a.shape} plane")
    mse = np.mean((_crop(a, crop) - _crop(b, crop)) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(a, g):
    a = sliding_window_view(a, g.size, axis=0) @ g
    return sliding_window_view(a, g.size, axis=1) @ g


def ssim(a, b):
    """Mean SSIM over all fully-contained 11x11 Gaussian windows (sigma 1.5, L = 255)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim: plane shapes differ, {a.shape} vs {b.shape}")
    if a.ndim != 2 or min(a.shape) < SSIM_WINDOW:
        raise ShapeError(f"ssim needs 2-D planes of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2
    g = _gaussian_window()
    mu1, mu2 = _filter_valid(a, g), _filter_valid(b, g)
    mu11, mu22, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    s11 = _filter_valid(a * a, g) - mu11
    s22 = _filter_valid(b * b, g) - mu22
    s12 = _filter_valid(a * b, g) - mu12
    num = (2 * mu12 + c1) * (2 * s12 + c2)
    den = (mu11 + mu22 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


# --- evaluation harness ------------------------------------------------------

@dataclass
class EvalReport:
    scale: int
    degradation: str
    crop: int
    ensemble: bool
    rows: list = field(default_factory=list)  # (name, psnr_db, ssim)
    errors: list = field(default_factory=list)  # (name, message)

    @property
    def mean_psnr(self):
        return float(np.mean([r[1] for r in self.rows])) if self.rows else math.nan

    @property
    def mean_ssim(self):
        return float(np.mean([r[2] for r in self.rows])) if self.rows else math.nan

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "psnr_db", "ssim"])
        for name, p, s in self.rows:
            w.writerow([name, f"{p:.4f}", f"{s:.6f}"])
        return buf.getvalue()

    def to_text(self):
        lines = [
            f"# scale x{self.scale}  degradation {self.degradation}  crop {self.crop}  "
            f"self-ensemble {'on' if self.ensemble else 'off'}",
        ]
        width = max([len("name"), len("mean")] + [len(r[0]) for r in self.rows])
        lines.append(f"{'name':<{width}}  {'PSNR':>8}  {'SSIM':>7}")
        for name, p, s in self.rows:
            lines.append(f"{name:<{width}}  {p:8.2f}  {s:7.4f}")
        lines.append(f"{'mean':<{width}}  {self.mean_psnr:8.2f}  {self.mean_ssim:7.4f}")
        for name, msg in self.errors:
            lines.append(f"! {name}: {msg}")
        return "\n".join(lines) + "\n"


def bicubic_upscaler(scale):
    """Stand-in for the network: plain bicubic upscaling of an ``(n, 3, h, w)`` batch."""
    def up(x):
        return data.resize_array(x, x.shape[-2] * scale, x.shape[-1] * scale)
    return up


def network_upscaler(params, config, ensemble=False):
    if ensemble:
        return lambda x: network.self_ensemble_forward(x, params, config)
    return lambda x: network.predict(x, params, config)


def evaluate_image(hr, spec, upscale):
    """Returns ``(psnr_db, ssim)`` for one HR ``ImageU8``."""
    hr = data.quantize(data.mod_crop(data.to_float(hr), spec.scale))
    lr = data.degrade(hr, spec)
    sr = upscale(data.to_float(lr)[None])[0]
    sr_y = data.rgb_to_y(data.quantize(sr))
    hr_y = data.rgb_to_y(hr)
    crop = spec.scale
    return psnr(sr_y, hr_y, crop), ssim(_crop(sr_y, crop), _crop(hr_y, crop))


def evaluate(params, config, manifest, spec, ensemble=False, upscale=None):
    """Evaluate every image in a manifest (path or list of paths).

    Unreadable entries are recorded in ``report.errors`` and skipped.
    """
    if config is not None and config.scale != spec.scale:
        raise ShapeError(f"checkpoint scale x{config.scale} does not match degradation x{spec.scale}")
    if upscale is None:
        upscale = network_upscaler(params, config, ensemble)
    paths = data.read_manifest(manifest) if not isinstance(manifest, (list, tuple)) else manifest
    report = EvalReport(spec.scale, spec.kind, spec.scale, ensemble)
    for path in paths:
        name = getattr(path, "stem", str(path))
        try:
            hr = data.read_ppm(path)
        except (OSError, RcanError) as exc:
            report.errors.append((name, str(exc)))
            continue
        report.rows.append((name, *evaluate_image(hr, spec, upscale)))
    return report
