"""Image I/O, patch sampling and the two degradation models.

Images are 2-D float64 arrays with values in [0, 1]. Noise levels are
given on the 0-255 scale and divided by 255 internally.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError

IMAGE_SUFFIXES = (".pgm", ".png")

# ---------------------------------------------------------------- image I/O

_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def _read_pgm(blob: bytes, path) -> np.ndarray:
    if blob[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    pos = 2
    vals = []
    for _ in range(3):
        m = _PGM_TOKEN.match(blob, pos)
        if not m:
            raise FormatError(f"{path}: truncated PGM header")
        try:
            vals.append(int(m.group(1)))
        except ValueError:
            raise FormatError(f"{path}: bad PGM header field {m.group(1)!r}") from None
        pos = m.end()
    w, h, maxval = vals
    if w < 1 or h < 1:
        raise FormatError(f"{path}: PGM size {w}x{h} is empty")
    if not 0 < maxval < 256:
        raise FormatError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    pos += 1  # single whitespace byte ends the header
    payload = blob[pos : pos + w * h]
    if len(payload) != w * h:
        raise FormatError(f"{path}: truncated PGM payload ({len(payload)} of {w * h} bytes)")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).astype(np.float64) / maxval


def _read_png(path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover
        raise FormatError("PNG support needs Pillow (pip install Pillow)") from None
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                return np.asarray(im, dtype=np.float64) / 255.0
            if im.mode in ("RGB", "RGBA"):
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
                return luminance(rgb[..., 0], rgb[..., 1], rgb[..., 2])
            raise FormatError(f"{path}: unsupported PNG mode {im.mode}")
    except OSError as e:
        raise FormatError(f"{path}: {e}") from None


def load_image(path) -> np.ndarray:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in IMAGE_SUFFIXES:
        raise FormatError(f"{path}: unsupported image format {suffix!r}")
    if suffix == ".png":
        return _read_png(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from None
    return _read_pgm(blob, path)


def quantize(img) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img, path) -> None:
    path = Path(path)
    img = np.asarray(img)
    if img.ndim != 2:
        raise FormatError(f"expected a 2-D grayscale image, got shape {img.shape}")
    q = quantize(img)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        h, w = q.shape
        path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + q.tobytes())
    elif suffix == ".png":
        from PIL import Image

        Image.fromarray(q, mode="L").save(path)
    else:
        raise FormatError(f"{path}: unsupported image format {suffix!r}")


def luminance(r, g, b):
    """BT.601 luma, clipped to [0, 1]."""
    return np.clip(0.299 * np.asarray(r) + 0.587 * np.asarray(g) + 0.114 * np.asarray(b), 0.0, 1.0)


def list_images(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"image directory not found: {d}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_dir(directory) -> tuple[list[str], list[np.ndarray]]:
    paths = list_images(directory)
    if not paths:
        raise DataError(f"no .pgm/.png images in {directory}")
    return [p.name for p in paths], [load_image(p) for p in paths]


# ---------------------------------------------------------------- degradations


def box_muller(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal samples from pairs of uniforms."""
    n = int(np.prod(shape))
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1], keeps log finite
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
    return z.reshape(shape)


def corrupt_gaussian(patch, sigma_255: float, rng: np.random.Generator) -> np.ndarray:
    """Additive white Gaussian noise; the result is deliberately not clipped."""
    if not sigma_255 > 0:
        raise ConfigError(f"sigma must be > 0, got {sigma_255}")
    patch = np.asarray(patch, dtype=np.float64)
    return patch + (sigma_255 / 255.0) * box_muller(rng, patch.shape)


def _cubic(x):
    # Keys kernel, a = -0.5
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    return np.where(
        ax <= 1,
        1.5 * ax3 - 2.5 * ax2 + 1,
        np.where(ax <= 2, -0.5 * ax3 + 2.5 * ax2 - 4 * ax + 2, 0.0),
    )


def resize_matrix(in_len: int, out_len: int) -> np.ndarray:
    """Dense ``(out_len, in_len)`` bicubic resampling operator.

    Pixel centres are aligned (half-pixel convention); when shrinking, the
    kernel is stretched by the inverse scale to anti-alias. Borders
    replicate the edge pixel. Rows sum to one.
    """
    scale = out_len / in_len
    width = 4.0
    if scale < 1:
        kernel = lambda x: scale * _cubic(scale * x)  # noqa: E731
        width /= scale
    else:
        kernel = _cubic
    x = np.arange(1, out_len + 1, dtype=np.float64)
    u = x / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(u - width / 2)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    wts = kernel(u[:, None] - idx)
    wts /= wts.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 1, in_len).astype(int) - 1
    mat = np.zeros((out_len, in_len))
    rows = np.repeat(np.arange(out_len), taps)
    np.add.at(mat, (rows, idx.ravel()), wts.ravel())
    return mat


def resize(img, out_h: int, out_w: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    return resize_matrix(h, out_h) @ img @ resize_matrix(w, out_w).T


def degrade_sr(patch, scale: int) -> np.ndarray:
    """Bicubic shrink by ``scale`` then bicubic enlarge back, clipped to [0, 1].

    Sizes not divisible by ``scale`` shrink to the ceiling and enlarge back
    to the exact original size.
    """
    patch = np.asarray(patch, dtype=np.float64)
    h, w = patch.shape
    if min(h, w) < 4 * scale:
        raise DataError(f"patch {h}x{w} too small for x{scale} degradation (need >= {4 * scale})")
    low = resize(patch, math.ceil(h / scale), math.ceil(w / scale))
    return np.clip(resize(low, h, w), 0.0, 1.0)


@dataclass(frozen=True)
class CorruptionSpec:
    """``kind`` is ``"gaussian"`` (levels = sigmas on 0-255) or ``"sr"`` (levels = scales)."""

    kind: str
    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.kind not in ("gaussian", "sr"):
            raise ConfigError(f"corruption kind must be 'gaussian' or 'sr', got {self.kind!r}")
        if not self.levels:
            raise ConfigError("corruption needs at least one level")
        if self.kind == "gaussian" and not all(s > 0 for s in self.levels):
            raise ConfigError(f"sigmas must be > 0: {self.levels}")
        if self.kind == "sr" and not all(int(s) == s and s >= 2 for s in self.levels):
            raise ConfigError(f"scales must be integers >= 2: {self.levels}")

    @classmethod
    def from_dict(cls, d: dict) -> "CorruptionSpec":
        unknown = set(d) - {"kind", "levels"}
        if unknown:
            raise ConfigError(f"unknown corruption keys: {sorted(unknown)}")
        try:
            return cls(d["kind"], d["levels"])
        except KeyError as e:
            raise ConfigError(f"corruption.{e.args[0]} is required") from None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "levels": list(self.levels)}

    def draw(self, rng):
        if len(self.levels) == 1:
            return self.levels[0]
        return self.levels[int(rng.integers(len(self.levels)))]

    def apply(self, img, level, rng):
        if self.kind == "gaussian":
            return corrupt_gaussian(img, level, rng)
        return degrade_sr(img, int(level))


# ---------------------------------------------------------------- patches


def sample_patches(images, p: int, count: int, rng, names=None):
    """Draw ``count`` p x p crops: image uniformly, then offset uniformly.

    Returns ``(patches, provenance)`` with patches shaped (count, p, p) and
    provenance a list of ``(image_index, y, x)``.
    """
    if count < 1:
        raise DataError(f"count must be >= 1, got {count}")
    if not images:
        raise DataError("no images to sample from")
    names = names or [f"image[{i}]" for i in range(len(images))]
    for name, img in zip(names, images):
        if img.shape[0] < p or img.shape[1] < p:
            raise DataError(f"{name} is {img.shape[0]}x{img.shape[1]}, smaller than patch size {p}")
    patches = np.empty((count, p, p))
    prov = []
    for k in range(count):
        i = int(rng.integers(len(images)))
        h, w = images[i].shape
        y = int(rng.integers(h - p + 1))
        x = int(rng.integers(w - p + 1))
        patches[k] = images[i][y : y + p, x : x + p]
        prov.append((i, y, x))
    return patches, prov


@dataclass
class PatchSet:
    inputs: np.ndarray  # (N, 1, p, p) corrupted
    targets: np.ndarray  # (N, 1, p, p) clean
    provenance: list = field(default_factory=list)

    def __len__(self):
        return len(self.inputs)

    def manifest(self) -> str:
        return json.dumps(self.provenance, indent=1)


def make_dataset(images, spec: CorruptionSpec, p: int, count: int, rng, names=None, dtype=np.float32) -> PatchSet:
    names = names or [f"image[{i}]" for i in range(len(images))]
    clean, offsets = sample_patches(images, p, count, rng, names)
    noisy = np.empty_like(clean)
    prov = []
    for k, (i, y, x) in enumerate(offsets):
        level = spec.draw(rng)
        noisy[k] = spec.apply(clean[k], level, rng)
        prov.append({"image": names[i], "y": y, "x": x, "corruption": spec.kind, "level": level})
    return PatchSet(noisy[:, None].astype(dtype), clean[:, None].astype(dtype), prov)
