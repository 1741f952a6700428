"""Procedural grayscale test images.

No benchmark images ship with the package, so tests and the toy-scale
experiments use piecewise-smooth scenes: a shaded background plus random
rectangles, discs and stripes. They have flat regions, sharp edges and
some texture, which is enough for a denoiser to have something to learn.
"""

from __future__ import annotations

import numpy as np


def _smooth_field(rng, h, w, cells=4):
    coarse = rng.random((cells + 1, cells + 1))
    ys = np.linspace(0, cells, h)
    xs = np.linspace(0, cells, w)
    y0 = np.minimum(ys.astype(int), cells - 1)
    x0 = np.minimum(xs.astype(int), cells - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    c = coarse
    return (
        c[y0][:, x0] * (1 - fy) * (1 - fx)
        + c[y0 + 1][:, x0] * fy * (1 - fx)
        + c[y0][:, x0 + 1] * (1 - fy) * fx
        + c[y0 + 1][:, x0 + 1] * fy * fx
    )


def scene(h: int, w: int, seed: int = 0, shapes: int = 12) -> np.ndarray:
    rng = np.random.default_rng(seed)
    img = 0.2 + 0.6 * _smooth_field(rng, h, w)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(shapes):
        kind = rng.integers(3)
        val = rng.uniform(0.05, 0.95)
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        size = rng.uniform(0.08, 0.35) * min(h, w)
        if kind == 0:
            mask = (np.abs(yy - cy) < size / 2) & (np.abs(xx - cx) < size * rng.uniform(0.3, 1.0))
        elif kind == 1:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < (size / 2) ** 2
        else:
            period = rng.uniform(4, 10)
            angle = rng.uniform(0, np.pi)
            phase = (np.cos(angle) * xx + np.sin(angle) * yy) / period
            mask = ((phase % 1) < 0.5) & ((yy - cy) ** 2 + (xx - cx) ** 2 < size**2)
        img = np.where(mask, val, img)
    return np.clip(img, 0.0, 1.0)


def scenes(count: int, h: int, w: int, seed: int = 0) -> list[np.ndarray]:
    return [scene(h, w, seed=seed * 1000 + i) for i in range(count)]


def main(argv=None):
    import argparse
    from pathlib import Path

    from .data import save_image

    ap = argparse.ArgumentParser(description="write procedural grayscale scenes as PGM files")
    ap.add_argument("directory")
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--size", type=int, default=96)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    out = Path(args.directory)
    out.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(scenes(args.count, args.size, args.size, seed=args.seed)):
        save_image(img, out / f"scene{i:03d}.pgm")
    print(f"wrote {args.count} images to {out}")


if __name__ == "__main__":  # pragma: no cover
    main()
