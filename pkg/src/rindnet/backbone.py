"""ResNet-50 feature pyramid (res1..res5) with res5 kept at stride 16 via dilation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import torch
import torch.nn as nn
import torchvision

from rindnet.errors import ShapeError, WeightLoadError

PYRAMID_CHANNELS = (64, 256, 512, 1024, 2048)
PYRAMID_STRIDES = (4, 4, 8, 16, 16)
STRIDE = 16

# ImageNet convention of the torchvision ResNet weights
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class FeaturePyramid(NamedTuple):
    res1: torch.Tensor
    res2: torch.Tensor
    res3: torch.Tensor
    res4: torch.Tensor
    res5: torch.Tensor


class ResNetBackbone(nn.Module):
    """ResNet-50 trunk without the classifier.

    res1 is the stem after max-pooling (stride 4), res2..res4 the first three
    stages (strides 4, 8, 16) and res5 the last stage with dilation 2 instead
    of a further stride, so it stays at stride 16.
    """

    def __init__(self, freeze_bn: bool = True):
        super().__init__()
        net = torchvision.models.resnet50(weights=None, replace_stride_with_dilation=[False, False, True])
        self.conv1, self.bn1, self.relu, self.maxpool = net.conv1, net.bn1, net.relu, net.maxpool
        self.layer1, self.layer2, self.layer3, self.layer4 = net.layer1, net.layer2, net.layer3, net.layer4
        self.freeze_bn = freeze_bn

    def train(self, mode: bool = True):
        super().train(mode)
        if mode and self.freeze_bn:
            for m in self.modules():
                if isinstance(m, nn.BatchNorm2d):
                    m.eval()
        return self

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        h, w = x.shape[-2:]
        if h % STRIDE or w % STRIDE:
            raise ShapeError(f"input size {h}x{w} is not divisible by {STRIDE}; pad it first")
        res1 = self.maxpool(self.relu(self.bn1(self.conv1(x))))
        res2 = self.layer1(res1)
        res3 = self.layer2(res2)
        res4 = self.layer3(res3)
        res5 = self.layer4(res4)
        return FeaturePyramid(res1, res2, res3, res4, res5)


def extract_pyramid(image: torch.Tensor, backbone: ResNetBackbone) -> FeaturePyramid:
    """Run the backbone on a [3,H,W] or [B,3,H,W] normalized image."""
    squeeze = image.dim() == 3
    pyr = backbone(image.unsqueeze(0) if squeeze else image)
    return FeaturePyramid(*(p[0] for p in pyr)) if squeeze else pyr


@dataclass
class LoadManifest:
    matched: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)  # backbone names absent from the archive
    ignored: list[str] = field(default_factory=list)  # archive names the backbone does not use


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_archive(state: dict[str, torch.Tensor], path: str | Path) -> Path:
    """Write a named-tensor archive and its ``<path>.json`` manifest (names, shapes, sha256)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {k: v.detach().cpu() for k, v in state.items()}
    torch.save(state, path)
    manifest = {
        "tensors": {k: list(v.shape) for k, v in sorted(state.items())},
        "sha256": _sha256(path),
    }
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def read_archive(path: str | Path) -> dict[str, torch.Tensor]:
    path = Path(path)
    if not path.is_file():
        raise WeightLoadError(f"weight archive {path} not found")
    manifest_path = Path(str(path) + ".json")
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("sha256") and manifest["sha256"] != _sha256(path):
            raise WeightLoadError(f"{path}: checksum does not match {manifest_path.name}")
    state = torch.load(path, map_location="cpu", weights_only=True)
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    if not isinstance(state, dict):
        raise WeightLoadError(f"{path}: not a named-tensor archive")
    return state


def load_pretrained(
    backbone: ResNetBackbone,
    source: str | Path | dict[str, torch.Tensor],
    strict: bool = True,
) -> LoadManifest:
    """Initialize ``backbone`` from an archive keyed by torchvision ResNet-50 names.

    Accepts the stock torchvision checkpoint as well (its ``fc.*`` entries are
    ignored). In strict mode every backbone tensor must be present.
    """
    state = read_archive(source) if not isinstance(source, dict) else source
    state = {k.removeprefix("module.").removeprefix("backbone."): v for k, v in state.items()}
    own = backbone.state_dict()
    manifest = LoadManifest()
    bad_shapes = []
    for name, tensor in own.items():
        if name not in state:
            if not name.endswith("num_batches_tracked"):
                manifest.missing.append(name)
            continue
        if tuple(state[name].shape) != tuple(tensor.shape):
            bad_shapes.append(f"{name}: archive {tuple(state[name].shape)} vs model {tuple(tensor.shape)}")
            continue
        manifest.matched.append(name)
    manifest.ignored = sorted(k for k in state if k not in own)
    if bad_shapes:
        raise WeightLoadError("shape mismatch:\n  " + "\n  ".join(bad_shapes))
    if strict and manifest.missing:
        head = ", ".join(manifest.missing[:5])
        raise WeightLoadError(f"{len(manifest.missing)} backbone tensors missing from archive (e.g. {head})")
    with torch.no_grad():
        for name in manifest.matched:
            own[name].copy_(state[name])
    return manifest
