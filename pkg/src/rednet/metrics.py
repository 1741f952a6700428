"""PSNR and SSIM, plus the corrupt-restore-score evaluation loop."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, ShapeError


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"images differ in shape: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """PSNR in dB; identical images give ``math.inf``."""
    a, b = _pair(a, b)
    d = (a - b).ravel()
    mse = float(np.dot(d, d)) / d.size
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r * r) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    k = len(g)
    rows = sliding_window_view(img, k, axis=0) @ g  # (h-k+1, w)
    return sliding_window_view(rows, k, axis=1) @ g


def ssim(a, b, peak: float = 1.0, window: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM over all full 11x11 Gaussian-weighted windows."""
    a, b = _pair(a, b)
    if a.ndim != 2 or min(a.shape) < window:
        raise ShapeError(f"SSIM needs 2-D images of at least {window}x{window}, got {a.shape}")
    g = gaussian_window(window, sigma)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    aa, bb, ab = _filter_valid(a * a, g), _filter_valid(b * b, g), _filter_valid(a * b, g)
    mu_aa, mu_bb, mu_ab = mu_a * mu_a, mu_b * mu_b, mu_a * mu_b
    var_a, var_b, cov = aa - mu_aa, bb - mu_bb, ab - mu_ab
    num = (2 * mu_ab + c1) * (2 * cov + c2)
    den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class MetricRow:
    image: str
    level: float
    psnr_db: float
    ssim: float


@dataclass
class MetricReport:
    kind: str
    rows: list[MetricRow] = field(default_factory=list)

    def levels(self):
        return sorted({r.level for r in self.rows})

    def summary(self) -> dict:
        """``{level: (mean_psnr, mean_ssim)}``; infinite PSNR rows are left out."""
        out = {}
        for lv in self.levels():
            rows = [r for r in self.rows if r.level == lv]
            finite = [r.psnr_db for r in rows if math.isfinite(r.psnr_db)]
            if len(finite) < len(rows):
                warnings.warn(f"level {lv}: {len(rows) - len(finite)} identical image(s) excluded from mean PSNR")
            mean_psnr = sum(finite) / len(finite) if finite else math.inf
            out[lv] = (mean_psnr, sum(r.ssim for r in rows) / len(rows))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["image", "level", "psnr_db", "ssim"])
        for r in self.rows:
            w.writerow([r.image, _fmt_level(r.level), repr(r.psnr_db), repr(r.ssim)])
        for lv, (p, s) in self.summary().items():
            w.writerow(["mean", _fmt_level(lv), repr(p), repr(s)])
        return buf.getvalue()


def _fmt_level(lv):
    return str(int(lv)) if float(lv).is_integer() else str(lv)


def evaluate(net, clean_images, spec, seed: int = 0, ensemble: bool = False, names=None) -> MetricReport:
    """Corrupt each image at every level of ``spec``, restore, clip, score.

    Noise for image ``i`` at level index ``j`` comes from a generator seeded
    with ``(seed, i, j)``, so reports are reproducible and independent of
    image order elsewhere.
    """
    from .infer import restore, restore_ensemble

    if not clean_images:
        raise DataError("evaluation needs at least one image")
    names = names or [f"image[{i}]" for i in range(len(clean_images))]
    fn = restore_ensemble if ensemble else restore
    report = MetricReport(spec.kind)
    for j, level in enumerate(spec.levels):
        for i, (name, clean) in enumerate(zip(names, clean_images)):
            rng = np.random.default_rng([seed, i, j])
            corrupted = spec.apply(clean, level, rng)
            out = fn(net, corrupted)
            report.rows.append(MetricRow(name, level, psnr(out, clean), ssim(out, clean)))
    return report
