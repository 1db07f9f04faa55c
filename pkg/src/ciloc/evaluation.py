"""Localization error metrics and dataset-level aggregation."""
from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field

import numpy as np


class EvaluationError(ValueError):
    pass


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=float).reshape(-1, 3)
    g = np.asarray(getattr(gt, "contacts", gt), dtype=float).reshape(-1, 3)
    if len(p) == 0 or len(g) == 0:
        raise EvaluationError("prediction and ground truth must be non-empty")
    if len(p) != len(g):
        raise EvaluationError(f"prediction has {len(p)} contacts, ground truth has {len(g)}")
    return p, g


def metric_nearest(pred, gt) -> np.ndarray:
    """Distance from each predicted contact to the closest ground-truth contact."""
    p, g = _pair(pred, gt)
    return np.min(np.linalg.norm(p[:, None, :] - g[None, :, :], axis=2), axis=1)


def metric_labeled(pred, gt) -> np.ndarray:
    """Distance from each predicted contact to the ground-truth contact with the same number."""
    p, g = _pair(pred, gt)
    return np.linalg.norm(p - g, axis=1)


def score(mean_a: float, mean_b: float) -> float:
    return (mean_a + mean_b) / 2.0


@dataclass
class EvalReport:
    dataset: str
    per_electrode_a: list[float] = field(default_factory=list)
    per_electrode_b: list[float] = field(default_factory=list)
    mean_a: float = 0.0
    mean_b: float = 0.0
    score: float = 0.0

    def row(self) -> dict:
        return {"dataset": self.dataset, "mean_a": self.mean_a, "mean_b": self.mean_b, "score": self.score}


def evaluate(pred, gt, dataset: str = "") -> EvalReport:
    a = metric_nearest(pred, gt)
    b = metric_labeled(pred, gt)
    ma, mb = float(np.mean(a)), float(np.mean(b))
    return EvalReport(dataset, a.tolist(), b.tolist(), ma, mb, score(ma, mb))


def aggregate(reports) -> dict:
    """Mean and median of score, mean_a and mean_b over datasets."""
    reports = list(reports)
    if not reports:
        raise EvaluationError("cannot aggregate an empty list of reports")
    out = {}
    for stat, fn in (("mean", statistics.fmean), ("median", statistics.median)):
        out[stat] = {k: float(fn([getattr(r, k) for r in reports])) for k in ("mean_a", "mean_b", "score")}
    out["count"] = len(reports)
    return out


def report_json(reports, summary: dict) -> dict:
    return {
        "datasets": [
            dict(r.row(), per_electrode_a=r.per_electrode_a, per_electrode_b=r.per_electrode_b) for r in reports
        ],
        "summary": summary,
    }


def report_csv(reports, summary: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dataset", "mean_a", "mean_b", "score"])
    for r in reports:
        writer.writerow([r.dataset, repr(r.mean_a), repr(r.mean_b), repr(r.score)])
    for stat in ("mean", "median"):
        s = summary[stat]
        writer.writerow([stat.capitalize(), repr(s["mean_a"]), repr(s["mean_b"]), repr(s["score"])])
    return buf.getvalue()
