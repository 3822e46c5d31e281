"""Mean best-match IoU of truth instances grouped by area."""

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from dataclasses_json import DataClassJsonMixin

from ..errors import RangeError
from ..grid import VOID_ID, IdMap, check_same_hw

logger = logging.getLogger("spectrapan")


@dataclass
class SizeBin(DataClassJsonMixin):
    lower: float
    upper: float
    mean_iou: float
    count: int


@dataclass
class SizeIoUTable(DataClassJsonMixin):
    """Bins [0, t0), [t0, t1), ..., [tn, inf); empty bins carry NaN with count 0."""

    thresholds: list[float]
    bins: list[SizeBin] = field(default_factory=list)

    @property
    def means(self) -> list[float]:
        return [b.mean_iou for b in self.bins]

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame([b.to_dict() for b in self.bins], columns=["lower", "upper", "mean_iou", "count"])

    def to_markdown(self) -> str:
        lines = ["| area | mean IoU | instances |", "|------|----------|-----------|"]
        for b in self.bins:
            upper = "inf" if np.isinf(b.upper) else f"{b.upper:g}"
            lines.append(f"| [{b.lower:g}, {upper}) | {b.mean_iou:.4f} | {b.count} |")
        return "\n".join(lines)


def best_match_iou(pred: IdMap, truth: IdMap) -> dict[int, tuple[int, float]]:
    """For every truth instance: (area, highest IoU against any predicted instance)."""
    check_same_hw(pred, truth)
    p, t = pred.ids.ravel(), truth.ids.ravel()
    t_ids, t_area = np.unique(t, return_counts=True)
    p_ids, p_area = np.unique(p, return_counts=True)
    truth_area = dict(zip(t_ids.tolist(), t_area.tolist()))
    pred_area = dict(zip(p_ids.tolist(), p_area.tolist()))
    best = {tid: 0.0 for tid in truth_area if tid != VOID_ID}

    both = (p != VOID_ID) & (t != VOID_ID)
    if not both.any():
        return {tid: (truth_area[tid], 0.0) for tid in best}
    pairs, inter = np.unique(np.stack([p[both], t[both]]), axis=1, return_counts=True)
    for pid, tid, n in zip(pairs[0].tolist(), pairs[1].tolist(), inter.tolist()):
        iou = n / (pred_area[pid] + truth_area[tid] - n)
        best[tid] = max(best[tid], iou)
    return {tid: (truth_area[tid], iou) for tid, iou in best.items()}


def table_from_matches(matches: Sequence[tuple[int, float]], thresholds: Sequence[float]) -> SizeIoUTable:
    """Bin (area, IoU) pairs by area and average the IoU within each bin."""
    thresholds = [float(x) for x in thresholds]
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise RangeError(f"size thresholds must be strictly increasing, got {thresholds}")
    areas = np.array([a for a, _ in matches], dtype=np.float64)
    ious = np.array([i for _, i in matches], dtype=np.float64)
    which = np.digitize(areas, thresholds)
    edges = [0.0, *thresholds, float("inf")]
    bins = []
    for k in range(len(thresholds) + 1):
        sel = which == k
        mean = float(ious[sel].mean()) if sel.any() else float("nan")
        bins.append(SizeBin(edges[k], edges[k + 1], mean, int(sel.sum())))
    return SizeIoUTable(thresholds, bins)


def iou_by_size(pred: IdMap, truth: IdMap, thresholds: Sequence[float]) -> SizeIoUTable:
    return table_from_matches(list(best_match_iou(pred, truth).values()), thresholds)
