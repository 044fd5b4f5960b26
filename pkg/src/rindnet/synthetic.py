"""Procedural toy scenes with all four edge types, for smoke runs and tests.

Each scene has a colored object on a shaded background (its outline is a depth
edge), a painted patch (reflectance edge), a cast shadow (illumination edge)
and a shading crease (normal edge). Labels are one pixel wide.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import binary_erosion

from rindnet.config import EDGE_TYPES
from rindnet.dataio import ImageSample, encode_masks, write_image


def _outline(mask: np.ndarray) -> np.ndarray:
    return mask & ~binary_erosion(mask, border_value=1)


def _rect(h, w, rng, lo=0.2, hi=0.45):
    rh, rw = (rng.uniform(lo, hi, size=2) * (h, w)).astype(int)
    top = int(rng.integers(2, h - rh - 2))
    left = int(rng.integers(2, w - rw - 2))
    m = np.zeros((h, w), dtype=bool)
    m[top:top + rh, left:left + rw] = True
    return m


def _disk(h, w, rng):
    r = rng.uniform(0.1, 0.18) * min(h, w)
    cy, cx = rng.uniform(r + 2, h - r - 2), rng.uniform(r + 2, w - r - 2)
    yy, xx = np.mgrid[:h, :w]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def make_scene(size: int = 96, rng: np.random.Generator | None = None, sample_id: str = "toy") -> ImageSample:
    rng = rng or np.random.default_rng(0)
    h = w = size
    yy, xx = np.mgrid[:h, :w] / float(size)

    # background: two planes meeting at a vertical crease (brightness ridge)
    crease = int(rng.integers(size // 4, 3 * size // 4))
    dist = np.abs(np.arange(w) - crease)[None, :] / float(size)
    shade = 0.75 - 0.9 * dist + 0.05 * yy
    base = np.array([0.55, 0.55, 0.6])
    image = base[:, None, None] * np.broadcast_to(shade, (h, w))[None]

    # painted patch: same shading, different albedo
    patch = _disk(h, w, rng)
    albedo = np.array([0.35, 1.3, 0.45])
    image = np.where(patch[None], image * albedo[:, None, None], image)

    # cast shadow: a region of the background darkened uniformly
    shadow = _rect(h, w, rng, 0.25, 0.5)
    image = np.where(shadow[None], image * 0.45, image)

    # object in front of everything; its outline occludes the rest
    obj = _rect(h, w, rng, 0.2, 0.35)
    color = np.array([0.9, 0.15, 0.1])[:, None, None] + 0.05 * xx[None]
    image = np.where(obj[None], color, image)

    depth = _outline(obj)
    refl = _outline(patch) & ~obj
    illu = _outline(shadow) & ~obj
    normal = np.zeros((h, w), dtype=bool)
    normal[:, crease] = True
    normal &= ~obj
    labels = np.stack([refl, illu, normal, depth]).astype(np.uint8)
    image = np.clip(image + rng.normal(0, 0.01, size=image.shape), 0, 1).astype(np.float32)
    return ImageSample(sample_id, image, labels)


def write_toy_dataset(root: str | Path, n_train: int = 2, n_test: int = 2, size: int = 96,
                      seed: int = 0) -> Path:
    """Write a dataset in the standard layout; ids are ``train_000``, ``test_000``, ..."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for role, n in (("train", n_train), ("test", n_test)):
        ids = [f"{role}_{k:03d}" for k in range(n)]
        for sid in ids:
            s = make_scene(size, rng, sid)
            write_image(s.image, root / "images" / f"{sid}.png")
            encode_masks(s.labels, [root / "labels" / t / f"{sid}.png" for t in EDGE_TYPES])
        (root / f"{role}.lst").write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")
    return root
