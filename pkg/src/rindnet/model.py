"""RINDNet: shared backbone, per-type decoders and heads, attention-weighted fusion."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import torch
import torch.nn as nn
import torch.nn.functional as F

from rindnet.backbone import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    PYRAMID_CHANNELS,
    PYRAMID_STRIDES,
    STRIDE,
    FeaturePyramid,
    ResNetBackbone,
    read_archive,
    save_archive,
)
from rindnet.config import ModelConfig, config_to_dict, model_config_from_dict
from rindnet.errors import ConfigError, ShapeError, WeightLoadError

LOW_CHANNELS = PYRAMID_CHANNELS[0] + PYRAMID_CHANNELS[1] + PYRAMID_CHANNELS[2]


def _bilinear_kernel(channels: int, k: int) -> torch.Tensor:
    factor = (k + 1) // 2
    center = factor - 1 if k % 2 == 1 else factor - 0.5
    og = torch.arange(k, dtype=torch.float32)
    filt = 1 - (og - center).abs() / factor
    w = filt[:, None] * filt[None, :]
    out = torch.zeros(channels, channels, k, k)
    for c in range(channels):
        out[c, c] = w
    return out


def upsampler(in_ch: int, out_ch: int, factor: int) -> nn.ConvTranspose2d:
    """Transposed convolution that scales spatial size by exactly ``factor``."""
    return nn.ConvTranspose2d(in_ch, out_ch, kernel_size=2 * factor, stride=factor, padding=factor // 2)


def conv_bn_relu(in_ch: int, out_ch: int, k: int = 3) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, k, padding=k // 2, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class SpatialLayer(nn.Module):
    """One pyramid level -> 2-channel cue map at input resolution (conv, then deconv)."""

    def __init__(self, in_ch: int, stride: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, 2, 1)
        self.up = upsampler(2, 2, stride)
        with torch.no_grad():
            self.up.weight.copy_(_bilinear_kernel(2, 2 * stride))
            self.up.bias.zero_()

    def forward(self, x):
        return self.up(self.conv(x))


class WeightLayer(nn.Module):
    """Low-level features gated by high-level hints through an elementwise product."""

    def __init__(self, high_ch: int = PYRAMID_CHANNELS[4], low_ch: int = LOW_CHANNELS, out_ch: int = 64,
                 low_out_ch: int | None = None):
        super().__init__()
        low_out_ch = out_ch if low_out_ch is None else low_out_ch
        if low_out_ch != out_ch:
            raise ConfigError(f"weight layer paths disagree on width: high {out_ch}, low {low_out_ch}")
        self.high = nn.Sequential(
            upsampler(high_ch, out_ch, PYRAMID_STRIDES[4] // PYRAMID_STRIDES[0]),
            conv_bn_relu(out_ch, out_ch),
            conv_bn_relu(out_ch, out_ch),
        )
        self.low = nn.Sequential(conv_bn_relu(low_ch, low_out_ch), conv_bn_relu(low_out_ch, low_out_ch))

    def forward(self, res5, low):
        return self.high(res5) * self.low(low)


class DecoderStream(nn.Sequential):
    """[3x3 conv+BN+ReLU, x2 deconv] repeated until full resolution."""

    def __init__(self, in_ch: int, out_ch: int, stride: int):
        repeats = int(round(math.log2(stride)))
        layers: list[nn.Module] = []
        ch = in_ch
        for _ in range(repeats):
            layers += [conv_bn_relu(ch, out_ch), upsampler(out_ch, out_ch, 2)]
            ch = out_ch
        super().__init__(*layers)


class Decoder(nn.Module):
    def __init__(self, in_ch: int, stride: int, out_ch: int = 32, n_streams: int = 2,
                 second: DecoderStream | None = None):
        super().__init__()
        half = out_ch // 2
        self.first = DecoderStream(in_ch, half, stride)
        self.second = None
        if n_streams == 2:
            self.second = second if second is not None else DecoderStream(in_ch, half, stride)
        self.out_channels = half * n_streams

    def forward(self, x):
        if self.second is None:
            return self.first(x)
        return torch.cat([self.first(x), self.second(x)], dim=1)


class ReIeHead(nn.Sequential):
    """3x3 conv then 1x1 conv to a single logit channel."""

    def __init__(self, in_ch: int, hidden: int = 32):
        super().__init__(nn.Conv2d(in_ch, hidden, 3, padding=1), nn.ReLU(inplace=True), nn.Conv2d(hidden, 1, 1))


class NeDeHead(nn.Sequential):
    """Three 1x1 convs; the receptive field is a single pixel."""

    def __init__(self, in_ch: int, hidden: int = 32):
        super().__init__(
            nn.Conv2d(in_ch, hidden, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, hidden, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, 1, 1),
        )


class AttentionModule(nn.Module):
    """Image -> per-pixel softmax over (background, edge types).

    The ResNet-style stem (7x7, stride 2) is followed by four 3x3 conv+ReLU+BN
    layers and a 1x1 classifier; logits are bilinearly upsampled to the input
    size before the softmax.
    """

    def __init__(self, n_out: int = 5, width: int = 64):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, width, 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
        )
        body = []
        for _ in range(4):
            body += [nn.Conv2d(width, width, 3, padding=1), nn.ReLU(inplace=True), nn.BatchNorm2d(width)]
        self.body = nn.Sequential(*body)
        self.classifier = nn.Conv2d(width, n_out, 1)

    def logits(self, x):
        z = self.classifier(self.body(self.stem(x)))
        return F.interpolate(z, size=x.shape[-2:], mode="bilinear", align_corners=False)

    def forward(self, x):
        return torch.softmax(self.logits(x), dim=1)


def fuse_final(O: torch.Tensor, A_edge: torch.Tensor | None) -> torch.Tensor:
    """Y = sigmoid(O * (1 + A_edge)); without attention, Y = sigmoid(O)."""
    if A_edge is None:
        return torch.sigmoid(O)
    return torch.sigmoid(O * (1.0 + A_edge))


@dataclass
class PredictionSet:
    O: torch.Tensor  # [B,4,H,W] initial logits (r, i, n, d)
    A: torch.Tensor | None  # [B,5,H,W] attention (b, r, i, n, d); [B,2,H,W] in generic mode
    Y: torch.Tensor  # [B,4,H,W] final probabilities
    P: torch.Tensor | None = None  # [B,1,H,W] generic-edge probability


class RINDNet(nn.Module):
    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        cfg = config or ModelConfig()
        self.config = cfg
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1), persistent=False)
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1), persistent=False)

        self.backbone = ResNetBackbone(freeze_bn=cfg.freeze_backbone_bn)

        levels = sorted(set(cfg.re_ie_spatial) | set(cfg.ne_de_spatial))
        self.spatial = nn.ModuleDict(
            {str(k): SpatialLayer(PYRAMID_CHANNELS[k - 1], PYRAMID_STRIDES[k - 1]) for k in levels}
        )

        self.wl_r = self.wl_i = None
        if cfg.re_ie_feed == "low" and cfg.use_wl:
            self.wl_r = WeightLayer(out_ch=cfg.wl_channels)
            self.wl_i = WeightLayer(out_ch=cfg.wl_channels)
            re_in, re_stride = cfg.wl_channels, PYRAMID_STRIDES[0]
        elif cfg.re_ie_feed == "low":
            re_in, re_stride = LOW_CHANNELS, PYRAMID_STRIDES[0]
        else:
            re_in, re_stride = PYRAMID_CHANNELS[4], PYRAMID_STRIDES[4]
        if cfg.ne_de_feed == "high":
            nd_in, nd_stride = PYRAMID_CHANNELS[4], PYRAMID_STRIDES[4]
        else:
            nd_in, nd_stride = LOW_CHANNELS, PYRAMID_STRIDES[0]

        ns, dc = cfg.n_streams, cfg.dec_channels
        self.dec_r = Decoder(re_in, re_stride, dc, ns)
        self.dec_i = Decoder(re_in, re_stride, dc, ns)
        self.dec_n = Decoder(nd_in, nd_stride, dc, ns)
        shared = self.dec_n.second if cfg.ne_de_share_second_stream else None
        self.dec_d = Decoder(nd_in, nd_stride, dc, ns, second=shared)

        dec_out = self.dec_r.out_channels
        self.head_r = ReIeHead(dec_out + 2 * len(cfg.re_ie_spatial), cfg.head_channels)
        self.head_i = ReIeHead(dec_out + 2 * len(cfg.re_ie_spatial), cfg.head_channels)
        self.head_n = NeDeHead(dec_out + 2 * len(cfg.ne_de_spatial), cfg.head_channels)
        self.head_d = NeDeHead(dec_out + 2 * len(cfg.ne_de_spatial), cfg.head_channels)

        self.attention = None
        if cfg.use_am:
            self.attention = AttentionModule(2 if cfg.generic_mode else 5, cfg.att_channels)
        self.generic_head = nn.Conv2d(4, 1, 1) if cfg.generic_mode else None

    def normalize(self, image):
        return (image - self.mean) / self.std

    @staticmethod
    def low_concat(pyr: FeaturePyramid) -> torch.Tensor:
        up3 = F.interpolate(pyr.res3, size=pyr.res1.shape[-2:], mode="bilinear", align_corners=False)
        return torch.cat([pyr.res1, pyr.res2, up3], dim=1)

    def spatial_cues(self, pyr: FeaturePyramid) -> dict[int, torch.Tensor]:
        return {int(k): layer(pyr[int(k) - 1]) for k, layer in self.spatial.items()}

    def decode(self, pyr: FeaturePyramid) -> tuple[torch.Tensor, ...]:
        cfg = self.config
        low = self.low_concat(pyr) if "low" in (cfg.re_ie_feed, cfg.ne_de_feed) else None
        if self.wl_r is not None:
            g_r, g_i = self.wl_r(pyr.res5, low), self.wl_i(pyr.res5, low)
        elif cfg.re_ie_feed == "low":
            g_r = g_i = low
        else:
            g_r = g_i = pyr.res5
        nd = pyr.res5 if cfg.ne_de_feed == "high" else low
        return self.dec_r(g_r), self.dec_i(g_i), self.dec_n(nd), self.dec_d(nd)

    def initial_logits(self, x: torch.Tensor) -> torch.Tensor:
        """Backbone, decoders and heads (no attention): [B,4,H,W] logits O for a normalized image."""
        pyr = self.backbone(x)
        cues = self.spatial_cues(pyr)
        f_r, f_i, f_n, f_d = self.decode(pyr)

        def with_cues(f, levels):
            return torch.cat([f] + [cues[k] for k in levels], dim=1)

        re_levels, nd_levels = self.config.re_ie_spatial, self.config.ne_de_spatial
        return torch.cat(
            [
                self.head_r(with_cues(f_r, re_levels)),
                self.head_i(with_cues(f_i, re_levels)),
                self.head_n(with_cues(f_n, nd_levels)),
                self.head_d(with_cues(f_d, nd_levels)),
            ],
            dim=1,
        )

    def forward(self, image: torch.Tensor) -> PredictionSet:
        """``image``: [B,3,H,W] RGB in [0,1], H and W divisible by 16."""
        if image.dim() != 4 or image.shape[1] != 3:
            raise ShapeError(f"expected [B,3,H,W], got {tuple(image.shape)}")
        x = self.normalize(image)
        O = self.initial_logits(x)
        A = self.attention(x) if self.attention is not None else None
        if A is None:
            A_edge = None
        elif self.config.generic_mode:
            A_edge = A[:, 1:2]
        else:
            A_edge = A[:, 1:]
        Y = fuse_final(O, A_edge)
        P = torch.sigmoid(self.generic_head(Y)) if self.generic_head is not None else None
        return PredictionSet(O, A, Y, P)


def build_model(config: ModelConfig | None = None, pretrained: str | Path | None = None,
                strict: bool = True) -> RINDNet:
    from rindnet.backbone import load_pretrained

    model = RINDNet(config)
    if pretrained is not None:
        load_pretrained(model.backbone, pretrained, strict=strict)
    return model


def _as_batch(image: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if image.dim() == 3:
        return image.unsqueeze(0), True
    return image, False


def forward_full(model: RINDNet, image: torch.Tensor) -> PredictionSet:
    """Four-type prediction for a [3,H,W] or [B,3,H,W] image."""
    if model.config.generic_mode:
        raise ConfigError("model is configured for generic edges; use forward_generic")
    x, squeeze = _as_batch(image)
    pred = model(x)
    if squeeze:
        return PredictionSet(pred.O[0], None if pred.A is None else pred.A[0], pred.Y[0])
    return pred


def forward_generic(model: RINDNet, image: torch.Tensor) -> torch.Tensor:
    """Generic-edge probability map [H,W] (or [B,H,W])."""
    if not model.config.generic_mode:
        raise ConfigError("model is not configured for generic edges (set generic_mode = true)")
    x, squeeze = _as_batch(image)
    P = model(x).P[:, 0]
    return P[0] if squeeze else P


def pad_to_stride(image: torch.Tensor, stride: int = STRIDE) -> tuple[torch.Tensor, tuple[int, int]]:
    """Reflect-pad the bottom/right of [..,H,W] up to a multiple of ``stride``; returns the original size."""
    h, w = image.shape[-2:]
    ph, pw = (-h) % stride, (-w) % stride
    if ph or pw:
        mode = "reflect" if ph < h and pw < w else "replicate"
        squeeze = image.dim() == 3
        x = image.unsqueeze(0) if squeeze else image
        x = F.pad(x, (0, pw, 0, ph), mode=mode)
        image = x[0] if squeeze else x
    return image, (h, w)


@torch.no_grad()
def predict(model: RINDNet, image: torch.Tensor) -> torch.Tensor:
    """Inference at original size: [3,H,W] -> [4,H,W] (or [1,H,W] in generic mode)."""
    model.eval()
    padded, (h, w) = pad_to_stride(image)
    pred = model(padded.unsqueeze(0))
    out = pred.P if model.config.generic_mode else pred.Y
    return out[0, :, :h, :w]


def save_checkpoint(model: RINDNet, path: str | Path, **meta: Any) -> Path:
    """Weights archive plus a JSON manifest carrying the model config and ``meta``."""
    path = save_archive(model.state_dict(), path)
    manifest_path = Path(str(path) + ".json")
    manifest = json.loads(manifest_path.read_text())
    manifest["config"] = config_to_dict(model.config)
    manifest.update(meta)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_checkpoint(path: str | Path, config: ModelConfig | None = None) -> tuple[RINDNet, dict]:
    path = Path(path)
    manifest_path = Path(str(path) + ".json")
    if not manifest_path.is_file():
        raise WeightLoadError(f"checkpoint manifest {manifest_path} not found")
    manifest = json.loads(manifest_path.read_text())
    if config is None:
        config = model_config_from_dict(manifest["config"])
    model = RINDNet(config)
    state = read_archive(path)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise WeightLoadError(f"{path}: {exc}") from None
    return model, manifest
