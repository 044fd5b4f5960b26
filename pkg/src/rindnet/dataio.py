"""Dataset layout, label planes, attention targets and augmentation.

On-disk layout of a dataset root::

    images/<id>.jpg | images/<id>.png
    labels/reflectance/<id>.png     (0/255 single-channel masks)
    labels/illumination/<id>.png
    labels/normal/<id>.png
    labels/depth/<id>.png
    train.lst, test.lst             (one id per line, UTF-8, LF)
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

from rindnet.config import EDGE_TYPES
from rindnet.errors import DecodeError, EncodeError, ListParseError, LoadError

IGNORE = 255
IMAGE_EXTS = (".jpg", ".png", ".jpeg")
ROTATIONS = (0, 90, 180, 270)


@dataclass
class ImageSample:
    id: str
    image: np.ndarray  # float32 [3, H, W] in [0, 1]
    labels: np.ndarray  # uint8 [4, H, W], channels (r, i, n, d)

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"image must be [3,H,W], got {self.image.shape}")
        if self.labels.shape != (4,) + self.image.shape[1:]:
            raise ValueError(f"labels {self.labels.shape} do not match image {self.image.shape}")

    @property
    def height(self) -> int:
        return self.image.shape[1]

    @property
    def width(self) -> int:
        return self.image.shape[2]

    @property
    def generic(self) -> np.ndarray:
        """Union of the four label planes, [H, W] uint8."""
        return self.labels.max(axis=0)


@dataclass
class DatasetSplit:
    root: Path
    ids: list[str]
    role: str

    def __len__(self):
        return len(self.ids)

    def image_path(self, sample_id: str) -> Path:
        for ext in IMAGE_EXTS:
            p = self.root / "images" / f"{sample_id}{ext}"
            if p.is_file():
                return p
        raise LoadError(f"sample {sample_id!r}: missing image images/{sample_id}.jpg|png")

    def label_paths(self, sample_id: str) -> list[Path]:
        return [self.root / "labels" / t / f"{sample_id}.png" for t in EDGE_TYPES]

    def load(self, sample_id: str) -> ImageSample:
        image = read_image(self.image_path(sample_id))
        labels = decode_labels(self.label_paths(sample_id))
        if labels.shape[1:] != image.shape[1:]:
            raise LoadError(
                f"sample {sample_id!r}: image is {image.shape[1:]} but labels are {labels.shape[1:]}"
            )
        return ImageSample(sample_id, image, labels)

    def limit(self, n: int | None) -> "DatasetSplit":
        if n is None:
            return self
        return replace(self, ids=self.ids[:n])


def read_list(path: Path) -> list[str]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise LoadError(f"cannot read list file {path}: {exc}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        lineno = raw[: exc.start].count(b"\n") + 1
        raise ListParseError(path, lineno, "not valid UTF-8") from None
    ids: list[str] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        if len(line.split()) != 1 or line != line.strip():
            raise ListParseError(path, lineno, f"expected a single id, got {line!r}")
        if "/" in line or "\\" in line:
            raise ListParseError(path, lineno, f"id must not contain path separators: {line!r}")
        if line in seen:
            raise ListParseError(path, lineno, f"duplicate id {line!r}")
        seen.add(line)
        ids.append(line)
    return ids


def load_split(root: str | Path, role: str) -> DatasetSplit:
    """Read ``<role>.lst`` under ``root`` and check every id resolves to its five files."""
    if role not in ("train", "test"):
        raise ValueError(f"role must be 'train' or 'test', got {role!r}")
    root = Path(root)
    if not root.is_dir():
        raise LoadError(f"data root {root} does not exist")
    split = DatasetSplit(root, read_list(root / f"{role}.lst"), role)
    for sample_id in split.ids:
        split.image_path(sample_id)
        for t, p in zip(EDGE_TYPES, split.label_paths(sample_id)):
            if not p.is_file():
                raise LoadError(f"sample {sample_id!r}: missing label plane labels/{t}/{sample_id}.png")
    return split


def read_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def write_image(image: np.ndarray, path: str | Path) -> None:
    arr = np.clip(np.round(np.asarray(image).transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


def _mask_array(mask) -> np.ndarray:
    if isinstance(mask, np.ndarray):
        arr = mask
    else:
        with Image.open(mask) as im:
            if im.mode not in ("L", "1", "P", "I", "I;16"):
                raise DecodeError(f"{mask}: expected a single-channel mask, got mode {im.mode}")
            if im.mode == "P":
                raise DecodeError(f"{mask}: palette masks are not supported")
            arr = np.asarray(im.convert("L") if im.mode == "1" else im)
    if arr.ndim != 2:
        raise DecodeError(f"expected a single-channel mask, got shape {arr.shape}")
    return arr


def decode_labels(files: Sequence) -> np.ndarray:
    """Decode four 0/255 masks (paths or arrays, order r, i, n, d) into a [4,H,W] binary array."""
    if len(files) != 4:
        raise DecodeError(f"expected 4 label masks, got {len(files)}")
    planes = []
    for t, f in zip(EDGE_TYPES, files):
        arr = _mask_array(f)
        bad = (arr != 0) & (arr != 255)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise DecodeError(f"{t} mask has value {arr[r, c]} at ({r}, {c}); only 0 and 255 are allowed")
        planes.append(arr == 255)
    if len({p.shape for p in planes}) != 1:
        raise DecodeError(f"label masks differ in size: {[p.shape for p in planes]}")
    return np.stack(planes).astype(np.uint8)


def encode_masks(labels: np.ndarray, paths: Sequence[str | Path] | None = None) -> list[np.ndarray]:
    """Inverse of :func:`decode_labels`; optionally writes the masks as PNGs."""
    labels = np.asarray(labels)
    if labels.shape[0] != 4 or not np.isin(labels, (0, 1)).all():
        raise EncodeError("labels must be a binary [4,H,W] array")
    masks = [(labels[k] * 255).astype(np.uint8) for k in range(4)]
    if paths is not None:
        for m, p in zip(masks, paths):
            Path(p).parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(m).save(p)
    return masks


def derive_attention_target(labels: np.ndarray) -> np.ndarray:
    """Five-channel (b, r, i, n, d) attention target from binary edge labels.

    Single-label pixels get a one-hot target on their edge channel, unlabeled
    pixels a one-hot background target, and multi-label pixels 255 (ignored)
    in every channel. Leading batch dimensions are allowed.
    """
    labels = np.asarray(labels).astype(np.uint8)
    count = labels.sum(axis=-3, keepdims=True)
    target = np.concatenate([(count == 0).astype(np.uint8), labels], axis=-3)
    return np.where(count > 1, np.uint8(IGNORE), target).astype(np.uint8)


def generic_attention_target(labels: np.ndarray) -> np.ndarray:
    """Two-channel (background, edge) target for generic-edge training; nothing is ignored."""
    edge = (np.asarray(labels).max(axis=-3, keepdims=True) > 0).astype(np.uint8)
    return np.concatenate([1 - edge, edge], axis=-3)


def augment_rotate(sample: ImageSample, angle: int) -> ImageSample:
    """Rotate image and labels counter-clockwise by ``angle`` degrees."""
    if angle not in ROTATIONS:
        raise ValueError(f"angle must be one of {ROTATIONS}, got {angle!r}")
    k = angle // 90
    return ImageSample(
        sample.id,
        np.ascontiguousarray(np.rot90(sample.image, k, axes=(1, 2))),
        np.ascontiguousarray(np.rot90(sample.labels, k, axes=(1, 2))),
    )


def augment_crop(sample: ImageSample, size: int, rng: np.random.Generator) -> ImageSample:
    """Random ``size``x``size`` crop; images smaller than ``size`` are reflect-padded first."""
    image, labels = sample.image, sample.labels
    ph, pw = max(0, size - sample.height), max(0, size - sample.width)
    if ph or pw:
        pad = ((0, 0), (ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2))
        # numpy's reflect needs pad < dim; symmetric then edge covers the tiny-image case
        mode = "reflect" if ph < sample.height and pw < sample.width else "symmetric"
        image = np.pad(image, pad, mode=mode)
        labels = np.pad(labels, pad, mode=mode)
        if image.shape[1] < size or image.shape[2] < size:
            extra = ((0, 0), (0, max(0, size - image.shape[1])), (0, max(0, size - image.shape[2])))
            image = np.pad(image, extra, mode="edge")
            labels = np.pad(labels, extra, mode="edge")
    h, w = image.shape[1:]
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    sl = (slice(None), slice(top, top + size), slice(left, left + size))
    return ImageSample(sample.id, np.ascontiguousarray(image[sl]), np.ascontiguousarray(labels[sl]))


def sample_rng(seed: int, sample_id: str, epoch: int, salt: int = 0) -> np.random.Generator:
    """Per-sample stream from (global seed, sample id, epoch); independent of loader order."""
    return np.random.default_rng([seed, zlib.crc32(sample_id.encode("utf-8")), epoch, salt])


def encode_prediction(prob: np.ndarray, path: str | Path) -> None:
    """Write a [H,W] probability map as a 16-bit single-channel PNG (value = round(y * 65535))."""
    prob = np.asarray(prob, dtype=np.float64)
    if prob.ndim != 2:
        raise EncodeError(f"prediction must be [H,W], got {prob.shape}")
    if not np.isfinite(prob).all() or prob.min(initial=0.0) < 0.0 or prob.max(initial=0.0) > 1.0:
        raise EncodeError("prediction values must lie in [0, 1]")
    q = np.round(prob * 65535.0).astype(np.uint16)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(q).save(path)


def decode_prediction(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise DecodeError(f"{path}: expected a single-channel prediction map")
    scale = 255.0 if arr.dtype == np.uint8 else 65535.0
    return arr.astype(np.float64) / scale


class TrainingSet(Dataset):
    """Rotation-expanded, randomly cropped view of a split for one epoch.

    Item ``j`` is ``(id, angle)`` from :attr:`entries`; the crop offset comes
    from :func:`sample_rng` so results do not depend on worker scheduling.
    """

    def __init__(self, split: DatasetSplit, crop: int, seed: int, epoch: int = 0, generic: bool = False):
        self.split = split
        self.crop = crop
        self.seed = seed
        self.epoch = epoch
        self.generic = generic
        self.entries = [(sid, a) for sid in split.ids for a in ROTATIONS]
        self._cache: dict[str, ImageSample] = {}

    def __len__(self):
        return len(self.entries)

    def _load(self, sample_id: str) -> ImageSample:
        if sample_id not in self._cache:
            self._cache[sample_id] = self.split.load(sample_id)
        return self._cache[sample_id]

    def __getitem__(self, j: int):
        sample_id, angle = self.entries[j]
        sample = augment_rotate(self._load(sample_id), angle)
        sample = augment_crop(sample, self.crop, sample_rng(self.seed, sample_id, self.epoch, angle))
        if self.generic:
            target = generic_attention_target(sample.labels)
        else:
            target = derive_attention_target(sample.labels)
        return {
            "id": f"{sample_id}@{angle}",
            "image": torch.from_numpy(sample.image),
            "labels": torch.from_numpy(sample.labels.astype(np.float32)),
            "target": torch.from_numpy(target.astype(np.int64)),
        }
