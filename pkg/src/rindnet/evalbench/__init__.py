"""Boundary-benchmark evaluation: NMS, pixel correspondence, ODS/OIS/AP."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from rindnet.config import EDGE_TYPES
from rindnet.dataio import DatasetSplit, decode_labels, decode_prediction
from rindnet.errors import LoadError
from rindnet.evalbench.matching import MatchCounts, match_edges, tolerance_graph
from rindnet.evalbench.metrics import (
    DEFAULT_THRESHOLDS,
    MAX_DIST_FRAC,
    PRCurve,
    average_precision,
    compute_ods_ois_ap,
    image_counts,
    pr_curve,
    prf,
)
from rindnet.evalbench.nms import conv_tri, edge_orientation, nms_thin

EVAL_TYPES = EDGE_TYPES + ("generic",)


@dataclass
class EvalParams:
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    max_dist_frac: float = MAX_DIST_FRAC
    nms: bool = True


@dataclass
class TypeReport:
    thresholds: list[float]
    P: list[float]
    R: list[float]
    F: list[float]
    ODS: float
    OIS: float
    AP: float
    ODS_threshold: float
    per_image: list[dict] = field(default_factory=list)


@dataclass
class EvalReport:
    types: dict[str, TypeReport]
    params: EvalParams

    def summary_rows(self) -> list[tuple[str, float, float, float]]:
        rows = [(t, r.ODS, r.OIS, r.AP) for t, r in self.types.items()]
        four = [self.types[t] for t in EDGE_TYPES if t in self.types]
        if len(four) > 1:
            rows.append(("average",) + tuple(float(np.mean([getattr(r, m) for r in four])) for m in ("ODS", "OIS", "AP")))
        return rows

    def to_dict(self) -> dict:
        return {
            "params": {
                "thresholds": list(self.params.thresholds),
                "max_dist_frac": self.params.max_dist_frac,
                "nms": self.params.nms,
            },
            "types": {t: r.__dict__ for t, r in self.types.items()},
            "summary": [dict(zip(("type", "ODS", "OIS", "AP"), row)) for row in self.summary_rows()],
        }


def evaluate_maps(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], params: EvalParams = EvalParams(),
                  ids: Sequence[str] | None = None) -> TypeReport:
    """Evaluate soft maps of one edge type against binary ground truth."""
    thinned = [nms_thin(p) if params.nms else np.asarray(p, dtype=np.float64) for p in preds]
    curve = pr_curve(thinned, gts, params.thresholds, params.max_dist_frac, ids)
    p, r, f = curve.prf()
    s = compute_ods_ois_ap(curve)
    return TypeReport(
        thresholds=[float(t) for t in curve.thresholds],
        P=p.tolist(), R=r.tolist(), F=f.tolist(),
        ODS=s["ODS"], OIS=s["OIS"], AP=s["AP"], ODS_threshold=s["ODS_threshold"],
        per_image=s["per_image"],
    )


def _gt_plane(labels: np.ndarray, etype: str) -> np.ndarray:
    if etype == "generic":
        return labels.max(axis=0)
    return labels[EDGE_TYPES.index(etype)]


def prediction_path(pred_dir: Path, sample_id: str, etype: str) -> Path:
    return Path(pred_dir) / f"{sample_id}_{etype}.png"


def evaluate_dataset(pred_dir: str | Path, split: DatasetSplit, types: Sequence[str] = EDGE_TYPES,
                     params: EvalParams = EvalParams(), out_dir: str | Path | None = None,
                     plots: bool = True) -> EvalReport:
    """Evaluate ``<pred_dir>/<id>_<type>.png`` maps against the split's labels."""
    unknown = [t for t in types if t not in EVAL_TYPES]
    if unknown:
        raise ValueError(f"unknown edge types {unknown}; choose from {EVAL_TYPES}")
    pred_dir = Path(pred_dir)
    for sample_id in split.ids:
        for t in types:
            if not prediction_path(pred_dir, sample_id, t).is_file():
                raise LoadError(f"missing prediction for id {sample_id!r}: {sample_id}_{t}.png")
    labels = {sid: decode_labels(split.label_paths(sid)) for sid in split.ids}
    reports = {}
    for t in types:
        preds, gts = [], []
        for sid in split.ids:
            pred = decode_prediction(prediction_path(pred_dir, sid, t))
            gt = _gt_plane(labels[sid], t)
            if pred.shape != gt.shape:
                raise LoadError(f"prediction {sid}_{t}.png is {pred.shape}, ground truth is {gt.shape}")
            preds.append(pred)
            gts.append(gt)
        reports[t] = evaluate_maps(preds, gts, params, split.ids)
    report = EvalReport(reports, params)
    if out_dir is not None:
        write_report(report, out_dir, plots=plots)
    return report


def write_report(report: EvalReport, out_dir: str | Path, plots: bool = True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["type", "ODS", "OIS", "AP"])
        for name, ods, ois, ap in report.summary_rows():
            w.writerow([name, f"{ods:.6f}", f"{ois:.6f}", f"{ap:.6f}"])
    for t, r in report.types.items():
        with open(out / f"pr_{t}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "P", "R", "F"])
            for row in zip(r.thresholds, r.P, r.R, r.F):
                w.writerow([f"{v:.6f}" for v in row])
    if plots:
        from rindnet.evalbench.plots import plot_pr_csvs

        plot_pr_csvs([out / f"pr_{t}.csv" for t in report.types], out)


def format_summary(report: EvalReport) -> str:
    lines = [f"{'type':<14}{'ODS':>8}{'OIS':>8}{'AP':>8}"]
    for name, ods, ois, ap in report.summary_rows():
        lines.append(f"{name:<14}{ods:>8.3f}{ois:>8.3f}{ap:>8.3f}")
    return "\n".join(lines)


__all__ = [
    "EVAL_TYPES",
    "EvalParams",
    "EvalReport",
    "MatchCounts",
    "PRCurve",
    "TypeReport",
    "average_precision",
    "compute_ods_ois_ap",
    "conv_tri",
    "edge_orientation",
    "evaluate_dataset",
    "evaluate_maps",
    "format_summary",
    "image_counts",
    "match_edges",
    "nms_thin",
    "pr_curve",
    "prf",
    "tolerance_graph",
    "write_report",
]
