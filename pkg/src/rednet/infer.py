"""Whole-image restoration and the 8-way rotation/flip ensemble."""

from __future__ import annotations

import numpy as np

# (quarter turns, mirror) for the dihedral group of the square
DIHEDRAL = [(k, m) for m in (False, True) for k in range(4)]


def transform(img, k: int, mirror: bool) -> np.ndarray:
    if mirror:
        img = img[:, ::-1]
    return np.ascontiguousarray(np.rot90(img, k))


def inverse_transform(img, k: int, mirror: bool) -> np.ndarray:
    img = np.rot90(img, -k)
    if mirror:
        img = img[:, ::-1]
    return np.ascontiguousarray(img)


def restore_raw(net, image) -> np.ndarray:
    """One forward pass over the full image, unclipped, as float64."""
    image = np.asarray(image)
    x = np.ascontiguousarray(image, dtype=net.dtype)[None, None]
    return net.forward(x)[0, 0].astype(np.float64)


def restore(net, image) -> np.ndarray:
    return np.clip(restore_raw(net, image), 0.0, 1.0)


def restore_ensemble(net, image) -> np.ndarray:
    """Average of T^-1(net(T(image))) over all 8 dihedral transforms T.

    The eight branch values of each pixel are sorted before summation, so
    the result does not depend on which branch produced which value. That
    makes the ensemble exactly equivariant: ensemble(T(x)) == T(ensemble(x))
    bit for bit.
    """
    image = np.asarray(image, dtype=np.float64)
    branches = np.stack([inverse_transform(restore_raw(net, transform(image, k, m)), k, m) for k, m in DIHEDRAL])
    branches.sort(axis=0)
    acc = np.zeros(image.shape)
    for b in branches:
        acc += b
    return np.clip(acc / len(DIHEDRAL), 0.0, 1.0)
