"""Confusion-matrix accounting: precision, TPR, FPR, F1, per op and micro.

Every (tuple, op) prediction is scored independently; the micro report
pools raw counts across operations.  A metric with a zero denominator is
reported as None rather than coerced to 0 or NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .encoding import Encoder, encode_dataset
from .errors import ConfigError
from .neuralnet import Network, forward


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


@dataclass(frozen=True)
class OpMetrics:
    confusion: Confusion
    precision: float | None
    tpr: float | None
    fpr: float | None
    f1: float | None


@dataclass(frozen=True)
class MetricsReport:
    per_op: tuple[OpMetrics, ...]
    micro: OpMetrics


def _ratio(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def _op_metrics(c: Confusion) -> OpMetrics:
    precision = _ratio(c.tp, c.tp + c.fp)
    tpr = _ratio(c.tp, c.tp + c.fn)
    fpr = _ratio(c.fp, c.fp + c.tn)
    if precision is None or tpr is None or precision + tpr == 0:
        f1 = None
    else:
        f1 = 2.0 * precision * tpr / (precision + tpr)
    return OpMetrics(c, precision, tpr, fpr, f1)


def score(preds: np.ndarray, labels: np.ndarray) -> MetricsReport:
    """Score 0/1 prediction and label matrices of shape (n_tuples, n_ops)."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ConfigError("prediction and label shapes differ")
    if preds.ndim == 1:
        preds = preds[:, None]
        labels = labels[:, None]
    per_op = []
    for k in range(preds.shape[1]):
        p, y = preds[:, k], labels[:, k]
        per_op.append(
            _op_metrics(
                Confusion(
                    tp=int(np.sum((p == 1) & (y == 1))),
                    fp=int(np.sum((p == 1) & (y == 0))),
                    tn=int(np.sum((p == 0) & (y == 0))),
                    fn=int(np.sum((p == 0) & (y == 1))),
                )
            )
        )
    pooled = per_op[0].confusion
    for m in per_op[1:]:
        pooled = pooled + m.confusion
    return MetricsReport(per_op=tuple(per_op), micro=_op_metrics(pooled))


def evaluate(
    net: Network, encoder: Encoder, test: Dataset, threshold: float = 0.5
) -> MetricsReport:
    """Score thresholded network predictions against the dataset labels."""
    X = encode_dataset(encoder, test)
    probs = forward(net, X)
    preds = (probs > threshold).astype(np.int64)
    return score(preds, test.labels_matrix())


def report_to_csv(report: MetricsReport) -> str:
    """CSV rows op0..opN then micro; undefined metrics render as NA."""
    fmt = lambda v: "NA" if v is None else f"{v:.6f}"
    lines = ["row,tp,fp,tn,fn,precision,tpr,fpr,f1"]
    rows = [(f"op{k}", m) for k, m in enumerate(report.per_op)] + [("micro", report.micro)]
    for name, m in rows:
        c = m.confusion
        lines.append(
            f"{name},{c.tp},{c.fp},{c.tn},{c.fn},"
            f"{fmt(m.precision)},{fmt(m.tpr)},{fmt(m.fpr)},{fmt(m.f1)}"
        )
    return "\n".join(lines) + "\n"
