"""
Panoptic Quality

- segments match when they share a category and IoU > 0.5
- pixels of a prediction lying on truth void are left out of its union
- unmatched predictions that are mostly (> 50 %) truth void are not false positives
- PQ / SQ / RQ are computed per category and averaged over categories seen
"""

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd
from dataclasses_json import DataClassJsonMixin

from ..grid import VOID_ID, check_same_hw
from ..pipeline import PanopticSeg

logger = logging.getLogger("spectrapan")

MATCH_IOU = 0.5


@dataclass
class PQStatCat(DataClassJsonMixin):
    iou: float = 0.0
    tp: int = 0
    fp: int = 0
    fn: int = 0
    is_thing: bool = True

    def __iadd__(self, other: "PQStatCat") -> "PQStatCat":
        self.iou += other.iou
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self

    @property
    def seen(self) -> bool:
        return self.tp + self.fp + self.fn > 0

    def scores(self) -> tuple[float, float, float]:
        """(pq, sq, rq) of this category."""
        denom = self.tp + 0.5 * self.fp + 0.5 * self.fn
        if denom == 0:
            return 0.0, 0.0, 0.0
        sq = self.iou / self.tp if self.tp else 0.0
        rq = self.tp / denom
        return self.iou / denom, sq, rq


@dataclass
class CategoryPQ(DataClassJsonMixin):
    category_id: int
    is_thing: bool
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int


@dataclass
class PQSummary(DataClassJsonMixin):
    pq: float
    sq: float
    rq: float
    n: int


@dataclass
class PQReport(DataClassJsonMixin):
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int
    per_category: list[CategoryPQ] = field(default_factory=list)
    things: PQSummary | None = None
    stuff: PQSummary | None = None

    def to_dataframe(self) -> pd.DataFrame:
        columns = ["category_id", "is_thing", "pq", "sq", "rq", "tp", "fp", "fn"]
        return pd.DataFrame([c.to_dict() for c in self.per_category], columns=columns)

    def to_markdown(self) -> str:
        lines = [
            "## Panoptic Quality",
            "",
            f"**PQ**: {self.pq:.4f}  **SQ**: {self.sq:.4f}  **RQ**: {self.rq:.4f}",
            f"**TP / FP / FN**: {self.tp} / {self.fp} / {self.fn}",
            "",
        ]
        if self.per_category:
            lines.extend(
                [
                    "| category | kind | PQ | SQ | RQ | TP | FP | FN |",
                    "|----------|------|----|----|----|----|----|----|",
                ]
            )
            for c in self.per_category:
                kind = "thing" if c.is_thing else "stuff"
                lines.append(
                    f"| {c.category_id} | {kind} | {c.pq:.4f} | {c.sq:.4f} | {c.rq:.4f} | {c.tp} | {c.fp} | {c.fn} |"
                )
            lines.append("")
        return "\n".join(lines)


@dataclass
class PQStat:
    """Per-category accumulator; per-image stats merge with `+=`."""

    per_cat: dict[int, PQStatCat] = field(default_factory=dict)

    def __getitem__(self, category_id: int) -> PQStatCat:
        if category_id not in self.per_cat:
            self.per_cat[category_id] = PQStatCat()
        return self.per_cat[category_id]

    def __iadd__(self, other: "PQStat") -> "PQStat":
        for cat, stat in other.per_cat.items():
            mine = self[cat]
            mine += stat
            mine.is_thing = stat.is_thing
        return self

    def _summary(self, cats: list[int]) -> PQSummary:
        if not cats:
            return PQSummary(0.0, 0.0, 0.0, 0)
        scores = np.array([self.per_cat[c].scores() for c in cats])
        pq, sq, rq = scores.mean(axis=0)
        return PQSummary(float(pq), float(sq), float(rq), len(cats))

    def report(self) -> PQReport:
        seen = sorted(c for c, s in self.per_cat.items() if s.seen)
        totals = [sum(getattr(self.per_cat[c], k) for c in seen) for k in ("tp", "fp", "fn")]
        if not seen:
            # nothing labeled on either side: identical, empty segmentations
            return PQReport(1.0, 1.0, 1.0, 0, 0, 0)
        rows = []
        for c in seen:
            s = self.per_cat[c]
            pq, sq, rq = s.scores()
            rows.append(CategoryPQ(c, s.is_thing, pq, sq, rq, s.tp, s.fp, s.fn))
        overall = self._summary(seen)
        things = [c for c in seen if self.per_cat[c].is_thing]
        stuff = [c for c in seen if not self.per_cat[c].is_thing]
        return PQReport(
            pq=overall.pq,
            sq=overall.sq,
            rq=overall.rq,
            tp=totals[0],
            fp=totals[1],
            fn=totals[2],
            per_category=rows,
            things=self._summary(things),
            stuff=self._summary(stuff),
        )


def pq_stat(pred: PanopticSeg, truth: PanopticSeg) -> PQStat:
    """Match segments of one image and count tp / fp / fn per category."""
    check_same_hw(pred.segment_map, truth.segment_map)
    p = pred.segment_map.ids.ravel()
    t = truth.segment_map.ids.ravel()

    pairs, inter = np.unique(np.stack([p, t]), axis=1, return_counts=True)
    p_ids, p_area = np.unique(p, return_counts=True)
    t_ids, t_area = np.unique(t, return_counts=True)
    pred_area = dict(zip(p_ids.tolist(), p_area.tolist()))
    truth_area = dict(zip(t_ids.tolist(), t_area.tolist()))
    on_void: dict[int, int] = {}
    overlaps: list[tuple[int, int, int]] = []
    for pid, tid, n in zip(pairs[0].tolist(), pairs[1].tolist(), inter.tolist()):
        if pid == VOID_ID:
            continue
        if tid == VOID_ID:
            on_void[pid] = n
        else:
            overlaps.append((pid, tid, n))

    stat = PQStat()
    for seg in truth.segments.values():
        stat[seg.category_id].is_thing = seg.is_thing
    for seg in pred.segments.values():
        if seg.category_id not in stat.per_cat:
            stat[seg.category_id].is_thing = seg.is_thing

    matched_pred, matched_truth = set(), set()
    for pid, tid, n in overlaps:
        if pid not in pred.segments or tid not in truth.segments:
            continue
        cat = truth.segments[tid].category_id
        if pred.segments[pid].category_id != cat:
            continue
        union = pred_area[pid] + truth_area[tid] - n - on_void.get(pid, 0)
        iou = n / union
        if iou > MATCH_IOU:
            stat[cat].tp += 1
            stat[cat].iou += iou
            matched_pred.add(pid)
            matched_truth.add(tid)

    for tid, seg in truth.segments.items():
        if tid not in matched_truth and truth_area.get(tid, 0) > 0:
            stat[seg.category_id].fn += 1
    for pid, seg in pred.segments.items():
        area = pred_area.get(pid, 0)
        if pid in matched_pred or area == 0:
            continue
        if on_void.get(pid, 0) / area > 0.5:
            continue
        stat[seg.category_id].fp += 1
    return stat


def panoptic_quality(pred: PanopticSeg, truth: PanopticSeg) -> PQReport:
    report = pq_stat(pred, truth).report()
    logger.info(f"PQ {report.pq:.4f} (tp {report.tp}, fp {report.fp}, fn {report.fn})")
    return report


def report_rows(report: PQReport) -> list[dict[str, Any]]:
    """Per-category rows followed by an "all" row, ready for CSV."""
    rows = report.to_dataframe().to_dict(orient="records")
    rows.append(
        {"category_id": "all", "is_thing": "", "pq": report.pq, "sq": report.sq, "rq": report.rq,
         "tp": report.tp, "fp": report.fp, "fn": report.fn}
    )
    return rows
