"""SGD training loop with poly learning-rate decay, checkpointing and loss logging."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader

from rindnet.backbone import read_archive
from rindnet.config import TrainConfig, config_hash, config_to_dict
from rindnet.dataio import DatasetSplit, TrainingSet
from rindnet.errors import NumericError
from rindnet.losses import EdgeLossParams, FocalLossParams, edge_loss_maps, focal_loss_maps
from rindnet.model import RINDNet, save_checkpoint

log = logging.getLogger(__name__)

CURVE_FIELDS = ("epoch", "lr", "total", "edge", "attention")


def poly_lr(epoch: int, cfg: TrainConfig) -> float:
    if cfg.epochs == 0:
        return cfg.lr0
    frac = min(max(epoch / cfg.epochs, 0.0), 1.0)
    return cfg.lr0 * (1.0 - frac) ** cfg.poly_power


def set_deterministic(seed: int, enabled: bool = True) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if enabled:
        os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")
        torch.use_deterministic_algorithms(True, warn_only=True)


def make_optimizer(model: RINDNet, cfg: TrainConfig) -> torch.optim.SGD:
    params = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.SGD(params, lr=cfg.lr0, momentum=cfg.momentum, weight_decay=cfg.weight_decay)


def compute_losses(model: RINDNet, batch: dict, cfg: TrainConfig) -> dict[str, torch.Tensor]:
    """Per-sample edge, attention and total losses for one batch (all shape [B])."""
    pred = model(batch["image"])
    edge_params = EdgeLossParams(cfg.beta, cfg.gamma1)
    labels = batch["labels"]
    if model.config.generic_mode:
        edge = edge_loss_maps(pred.P[:, 0], labels.amax(dim=1), edge_params)
    else:
        edge = edge_loss_maps(pred.Y, labels, edge_params).sum(dim=1)
    if pred.A is None:
        # without attention there is nothing to balance against
        return {"edge": edge, "attention": torch.zeros_like(edge), "total": edge}
    att = focal_loss_maps(pred.A, batch["target"], FocalLossParams(cfg.alpha2, cfg.gamma2))
    return {"edge": edge, "attention": att, "total": cfg.lam * edge + (1.0 - cfg.lam) * att}


def _collate_order(n: int, cfg: TrainConfig, epoch: int) -> list[int]:
    rng = np.random.default_rng([cfg.seed, epoch, 0x5EED])
    return rng.permutation(n).tolist()


def train_epoch(model: RINDNet, split: DatasetSplit | TrainingSet, cfg: TrainConfig, epoch: int = 0,
                optimizer: torch.optim.Optimizer | None = None, lr: float | None = None) -> dict[str, float]:
    """One pass over the rotation-expanded split; one SGD step per batch."""
    data = split if isinstance(split, TrainingSet) else TrainingSet(
        split, cfg.crop, cfg.seed, generic=model.config.generic_mode)
    if len(data) == 0:
        raise ValueError("cannot train on an empty split")
    data.epoch = epoch
    optimizer = optimizer or make_optimizer(model, cfg)
    lr = poly_lr(epoch, cfg) if lr is None else lr
    for group in optimizer.param_groups:
        group["lr"] = lr

    order = _collate_order(len(data), cfg, epoch)
    loader = DataLoader(
        torch.utils.data.Subset(data, order),
        batch_size=cfg.batch_size,
        shuffle=False,
        num_workers=cfg.num_workers,
    )
    model.train()
    sums = {"total": 0.0, "edge": 0.0, "attention": 0.0}
    count = empty_planes = 0
    for batch_idx, batch in enumerate(loader):
        empty_planes += int((batch["labels"].amax(dim=(-2, -1)) == 0).sum())
        losses = compute_losses(model, batch, cfg)
        bad = ~torch.isfinite(losses["total"])
        if bad.any():
            offender = batch["id"][int(bad.nonzero()[0, 0])]
            raise NumericError(f"non-finite loss at epoch {epoch}, batch {batch_idx}, sample {offender}")
        optimizer.zero_grad(set_to_none=True)
        losses["total"].mean().backward()
        optimizer.step()
        n = losses["total"].shape[0]
        for k in sums:
            sums[k] += float(losses[k].detach().sum())
        count += n
    if empty_planes:
        log.warning("epoch %d: %d label planes had no edge pixels in their crop (no positive supervision)",
                    epoch, empty_planes)
    return {k: v / count for k, v in sums.items()}


@dataclass
class FitResult:
    checkpoint: Path | None
    curve: list[dict[str, float]] = field(default_factory=list)


def _write_curve(path: Path, curve: list[dict[str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CURVE_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in curve:
            w.writerow({k: (row[k] if k == "epoch" else f"{row[k]:.8g}") for k in CURVE_FIELDS})


def read_curve(path: str | Path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def _save(model, optimizer, out_dir: Path, epoch: int, cfg: TrainConfig, curve) -> Path:
    name = f"ckpt_epoch{epoch:03d}.pt"
    path = save_checkpoint(
        model,
        out_dir / name,
        epoch=epoch,
        lr=poly_lr(epoch, cfg),
        seed=cfg.seed,
        train_config=config_to_dict(cfg),
        config_hash=config_hash(model.config, cfg),
        running_loss=curve[-1]["total"] if curve else None,
        loss_curve_tail=curve[-5:],
    )
    torch.save(optimizer.state_dict(), out_dir / f"{name}.optim")
    (out_dir / "latest").write_text(name + "\n")
    return path


def fit(model: RINDNet, split: DatasetSplit, cfg: TrainConfig, out_dir: str | Path | None = None,
        resume: str | Path | None = None) -> FitResult:
    """Train for ``cfg.epochs`` epochs, optionally resuming from a checkpoint written by this function.

    The learning rate for epoch ``e`` (0-based) is ``poly_lr(e)``. Checkpoints
    are written every ``cfg.ckpt_every`` epochs and after the last epoch, along
    with ``loss_curve.csv``.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if len(split) == 0:
        raise ValueError("training split is empty")
    optimizer = make_optimizer(model, cfg)
    curve: list[dict[str, float]] = []
    start = 0
    if resume is not None:
        resume = Path(resume)
        manifest = json.loads(Path(str(resume) + ".json").read_text())
        model.load_state_dict(read_archive(resume))
        optim_path = Path(str(resume) + ".optim")
        if optim_path.is_file():
            optimizer.load_state_dict(torch.load(optim_path, weights_only=True))
        start = int(manifest["epoch"])
        curve_path = resume.parent / "loss_curve.csv"
        if curve_path.is_file():
            curve = [row for row in read_curve(curve_path) if row["epoch"] <= start]

    data = TrainingSet(split, cfg.crop, cfg.seed, generic=model.config.generic_mode)
    ckpt = None
    for epoch in range(start, cfg.epochs):
        lr = poly_lr(epoch, cfg)
        stats = train_epoch(model, data, cfg, epoch, optimizer, lr)
        for k, v in stats.items():
            if not math.isfinite(v):
                raise NumericError(f"non-finite {k} loss at epoch {epoch}")
        curve.append({"epoch": epoch + 1, "lr": lr, **stats})
        log.info("epoch %d/%d lr %.3g total %.4f edge %.4f att %.4f", epoch + 1, cfg.epochs, lr,
                 stats["total"], stats["edge"], stats["attention"])
        if out is not None:
            _write_curve(out / "loss_curve.csv", curve)
            if (epoch + 1) % cfg.ckpt_every == 0 or epoch + 1 == cfg.epochs:
                ckpt = _save(model, optimizer, out, epoch + 1, cfg, curve)
    if out is not None and ckpt is None:
        _write_curve(out / "loss_curve.csv", curve)
        ckpt = _save(model, optimizer, out, start, cfg, curve)
    return FitResult(ckpt, curve)
