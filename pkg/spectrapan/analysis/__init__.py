"""
Evaluation reports

1. Panoptic Quality with per-category and thing / stuff breakdown
2. Mean IoU of truth instances grouped by area
"""

from .panoptic_quality import PQReport, PQStat, panoptic_quality, pq_stat
from .size_iou import SizeIoUTable, best_match_iou, iou_by_size, table_from_matches

__all__ = [
    "PQReport",
    "PQStat",
    "panoptic_quality",
    "pq_stat",
    "SizeIoUTable",
    "best_match_iou",
    "iou_by_size",
    "table_from_matches",
]
