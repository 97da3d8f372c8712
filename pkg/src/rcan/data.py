"""Image I/O, resampling, degradation models, patch sampling and augmentation.

Float images are channel-first ``(c, h, w)`` arrays; 8-bit images are
:class:`ImageU8` with interleaved ``(h, w, 3)`` pixels.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    PpmHeaderError,
    PpmMaxvalError,
    PpmTruncatedError,
    PpmUnsupportedError,
    ShapeError,
)

SCALES = (2, 3, 4, 8)


@dataclass
class ImageU8:
    pixels: np.ndarray  # (h, w, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ShapeError(f"ImageU8 needs (h, w, 3) pixels, got {px.shape}")
        self.pixels = np.ascontiguousarray(px, dtype=np.uint8)

    @property
    def h(self):
        return self.pixels.shape[0]

    @property
    def w(self):
        return self.pixels.shape[1]

    def __eq__(self, other):
        return isinstance(other, ImageU8) and np.array_equal(self.pixels, other.pixels)


# --- PPM ---------------------------------------------------------------------

def _header_tokens(buf):
    """Yield (token, end_offset) for the four P6 header fields, skipping comments."""
    pos, n = 0, len(buf)
    for _ in range(4):
        while pos < n:
            ch = buf[pos:pos + 1]
            if ch == b"#":
                while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PpmHeaderError("incomplete PPM header")
        yield buf[start:pos], pos


def parse_ppm(buf):
    if len(buf) < 2 or buf[:1] != b"P":
        raise PpmHeaderError("not a PNM file (missing 'P' magic)")
    if buf[:2] != b"P6":
        raise PpmUnsupportedError(f"unsupported PNM variant {buf[:2]!r}; only binary P6 is read")
    tokens = list(_header_tokens(buf))
    try:
        width, height, maxval = (int(t) for t, _ in tokens[1:])
    except ValueError as exc:
        raise PpmHeaderError(f"non-numeric PPM header field: {exc}") from None
    if width < 1 or height < 1:
        raise PpmHeaderError(f"invalid PPM dimensions {width}x{height}")
    if maxval != 255:
        raise PpmMaxvalError(f"maxval {maxval} unsupported; expected 255")
    end = tokens[-1][1]
    if end >= len(buf) or not buf[end:end + 1].isspace():
        raise PpmTruncatedError("PPM header not followed by a single whitespace byte")
    start = end + 1
    need = width * height * 3
    payload = buf[start:start + need]
    if len(payload) < need:
        raise PpmTruncatedError(f"PPM payload has {len(payload)} bytes, expected {need}")
    return ImageU8(np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3))


def read_ppm(path):
    return parse_ppm(Path(path).read_bytes())


def encode_ppm(img):
    return b"P6\n%d %d\n255\n" % (img.w, img.h) + img.pixels.tobytes()


def write_ppm(img, path):
    Path(path).write_bytes(encode_ppm(img))


def read_manifest(path):
    """HR image paths listed one per line; relative entries resolve next to the manifest."""
    path = Path(path)
    out = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            p = Path(line)
            out.append(p if p.is_absolute() else path.parent / p)
    return out


# --- conversions -------------------------------------------------------------

def to_float(img):
    """``ImageU8`` -> ``(3, h, w)`` float64 in [0, 1]."""
    return img.pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def quantize(arr):
    """``(3, h, w)`` float in [0, 1] -> ``ImageU8``; clamps, then rounds half up."""
    q = np.floor(np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5)
    return ImageU8(q.astype(np.uint8).transpose(1, 2, 0))


def rgb_to_y(img):
    """BT.601 studio-swing luma in [16, 235] from 8-bit RGB (``ImageU8`` or ``(h, w, 3)``)."""
    px = img.pixels if isinstance(img, ImageU8) else np.asarray(img)
    px = px.astype(np.float64)
    return 16.0 + (65.481 * px[..., 0] + 128.553 * px[..., 1] + 24.966 * px[..., 2]) / 255.0


# --- resampling --------------------------------------------------------------

def cubic(x, a=-0.5):
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def resize_weights(in_size, out_size):
    """Dense ``(out_size, in_size)`` bicubic interpolation matrix.

    Output sample ``i`` sits at input coordinate ``(i + 0.5) / s - 0.5`` with
    ``s = out_size / in_size``. For ``s < 1`` the kernel is stretched by ``1/s``
    (antialiasing). Taps beyond the border are clamped onto the edge pixel and
    each row is normalized to sum to 1.
    """
    if in_size < 1 or out_size < 1:
        raise ShapeError(f"resize sizes must be positive, got {in_size} -> {out_size}")
    s = out_size / in_size
    support = 2.0 / s if s < 1 else 2.0
    u = (np.arange(out_size) + 0.5) / s - 0.5
    first = np.floor(u - support).astype(int)
    taps = first[:, None] + np.arange(int(np.ceil(2 * support)) + 2)[None, :]
    dist = u[:, None] - taps
    wts = s * cubic(s * dist) if s < 1 else cubic(dist)
    wts /= wts.sum(axis=1, keepdims=True)
    mat = np.zeros((out_size, in_size))
    rows = np.broadcast_to(np.arange(out_size)[:, None], taps.shape)
    np.add.at(mat, (rows, np.clip(taps, 0, in_size - 1)), wts)
    return mat


def resize_array(arr, out_h, out_w):
    """Separable bicubic resize over the last two axes of a float array."""
    arr = np.asarray(arr, dtype=np.float64)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target size must be positive, got {out_h}x{out_w}")
    wh = resize_weights(arr.shape[-2], out_h)
    ww = resize_weights(arr.shape[-1], out_w)
    return wh @ arr @ ww.T


def bicubic_resize(img, out_h, out_w):
    return quantize(resize_array(to_float(img), out_h, out_w))


def gaussian_kernel(sigma, ksize):
    if ksize < 1 or ksize % 2 == 0:
        raise ValueError(f"Gaussian kernel size must be odd and positive, got {ksize}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.arange(ksize) - ksize // 2
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _blur_matrix(n, kernel):
    r = kernel.size // 2
    mat = np.zeros((n, n))
    rows = np.repeat(np.arange(n), kernel.size)
    cols = np.clip((np.arange(n)[:, None] + np.arange(-r, r + 1)[None, :]).ravel(), 0, n - 1)
    np.add.at(mat, (rows, cols), np.tile(kernel, n))
    return mat


def blur_array(arr, sigma, ksize):
    """Separable normalized Gaussian blur with replicated borders."""
    arr = np.asarray(arr, dtype=np.float64)
    k = gaussian_kernel(sigma, ksize)
    return _blur_matrix(arr.shape[-2], k) @ arr @ _blur_matrix(arr.shape[-1], k).T


def gaussian_blur(img, sigma, ksize):
    return quantize(blur_array(to_float(img), sigma, ksize))


# --- degradation -------------------------------------------------------------

@dataclass(frozen=True)
class DegradationSpec:
    kind: str = "BI"  # "BI" or "BD"
    scale: int = 4
    sigma: float = 1.6
    ksize: int = 7

    def __post_init__(self):
        if self.kind not in ("BI", "BD"):
            raise ValueError(f"degradation kind must be BI or BD, got {self.kind!r}")
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}, got {self.scale}")
        if self.kind == "BD":
            gaussian_kernel(self.sigma, self.ksize)


def mod_crop(arr, scale, axes=(-2, -1)):
    """Crop the two spatial axes down to multiples of ``scale``."""
    sl = [slice(None)] * np.ndim(arr)
    for ax in axes:
        sl[ax] = slice(0, np.shape(arr)[ax] - np.shape(arr)[ax] % scale)
    return arr[tuple(sl)]


def degrade_array(hr, spec):
    """``(c, h, w)`` float HR -> LR of size ``(h // scale, w // scale)`` after the crop."""
    hr = mod_crop(np.asarray(hr, dtype=np.float64), spec.scale)
    h, w = hr.shape[-2:]
    if h == 0 or w == 0:
        raise ShapeError(f"image smaller than scale {spec.scale}")
    if spec.kind == "BD":
        hr = blur_array(hr, spec.sigma, spec.ksize)
    return resize_array(hr, h // spec.scale, w // spec.scale)


def degrade(hr, spec):
    return quantize(degrade_array(to_float(hr), spec))


# --- patches and augmentation ------------------------------------------------

class PatchPair(NamedTuple):
    lr: np.ndarray  # (p, p, c)
    hr: np.ndarray  # (s*p, s*p, c)
    top: int = 0  # LR-grid offsets
    left: int = 0


def _pixels(img):
    return img.pixels if isinstance(img, ImageU8) else np.asarray(img)


def sample_patch_pair(hr, lr, scale, patch_lr, rng):
    """Uniform random aligned crop; ``hr``/``lr`` are ``ImageU8`` or ``(h, w, c)`` arrays."""
    hr_px, lr_px = _pixels(hr), _pixels(lr)
    lh, lw = lr_px.shape[:2]
    if lh < patch_lr or lw < patch_lr:
        raise ShapeError(f"LR image {lh}x{lw} smaller than patch {patch_lr}")
    if hr_px.shape[:2] != (lh * scale, lw * scale):
        raise ShapeError(f"HR {hr_px.shape[:2]} is not {scale}x LR {(lh, lw)}")
    top = rng.randint(lh - patch_lr + 1)
    left = rng.randint(lw - patch_lr + 1)
    hp = patch_lr * scale
    return PatchPair(
        lr_px[top:top + patch_lr, left:left + patch_lr],
        hr_px[top * scale:top * scale + hp, left * scale:left * scale + hp],
        top,
        left,
    )


def dihedral(arr, mode, axes=(0, 1)):
    """Mode ``m``: horizontal flip if ``m >= 4``, then ``m % 4`` counter-clockwise quarter turns."""
    if mode not in range(8):
        raise ValueError(f"augmentation mode must be in 0..7, got {mode!r}")
    if mode >= 4:
        arr = np.flip(arr, axis=axes[1])
    return np.rot90(arr, mode % 4, axes=axes)


def dihedral_inverse(arr, mode, axes=(0, 1)):
    if mode not in range(8):
        raise ValueError(f"augmentation mode must be in 0..7, got {mode!r}")
    arr = np.rot90(arr, -(mode % 4), axes=axes)
    if mode >= 4:
        arr = np.flip(arr, axis=axes[1])
    return arr


def augment(pair, mode):
    """Apply the same dihedral transform to both patches of a pair."""
    lr, hr = pair[0], pair[1]
    out = (np.ascontiguousarray(dihedral(lr, mode)), np.ascontiguousarray(dihedral(hr, mode)))
    if isinstance(pair, PatchPair):
        return pair._replace(lr=out[0], hr=out[1])
    return out


# --- synthetic fixtures ------------------------------------------------------

def synthetic_image(h, w, rng, waves=4):
    """Smooth colour test card: a few random low-frequency plane waves per channel."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.empty((3, h, w))
    for c in range(3):
        acc = np.full((h, w), 0.5)
        for _ in range(waves):
            fy, fx = (rng.uniform(2) * 2 - 1) * (2 * np.pi / 24)
            phase = rng.uniform() * 2 * np.pi
            acc += 0.12 * np.cos(fy * yy + fx * xx + phase)
        out[c] = acc
    return quantize(out)
