"""
Post-processing of per-pixel predictions into a panoptic segmentation.

decode (nearest uv-grid cell) -> cluster_instances (cell grouping, radius
merge, area threshold) -> majority_vote (thing class per instance, one
segment per stuff class).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from dataclasses_json import DataClassJsonMixin
from scipy import ndimage

from .codec import DecodedCells, UVGrid, decode_pe
from .errors import FormatError, RangeError
from .grid import VOID_ID, CategoryTable, Field, IdMap, check_same_hw, read_panoptic_png, write_panoptic_png
from .utils.serialize import dumps_json, loads_json

logger = logging.getLogger("spectrapan")

ORPHAN_POLICIES = ("void", "nearest")


@dataclass(frozen=True)
class FusionConfig:
    merge_radius: float = 1.5
    # None derives the threshold from the image size, see `area_threshold`
    min_instance_area: int | None = None
    categories: CategoryTable = field(default_factory=CategoryTable)
    orphan_policy: str = "void"

    def __post_init__(self):
        if self.merge_radius < 0:
            raise RangeError(f"merge_radius must be >= 0, got {self.merge_radius}")
        if self.min_instance_area is not None and self.min_instance_area < 1:
            raise RangeError(f"min_instance_area must be >= 1, got {self.min_instance_area}")
        if self.orphan_policy not in ORPHAN_POLICIES:
            raise RangeError(f"orphan_policy must be one of {ORPHAN_POLICIES}, got {self.orphan_policy!r}")

    def area_threshold(self, height: int, width: int) -> float:
        if self.min_instance_area is not None:
            return float(self.min_instance_area)
        return max(32.0, 0.0005 * height * width)


@dataclass(frozen=True)
class SegmentInfo(DataClassJsonMixin):
    id: int
    category_id: int
    is_thing: bool
    area: int


@dataclass(frozen=True, eq=False)
class PanopticSeg:
    """Segment id map plus the table segment id -> (category, thing flag, area)."""

    segment_map: IdMap
    segments: dict[int, SegmentInfo]

    def __post_init__(self):
        present = set(self.segment_map.labels().tolist())
        missing = present - set(self.segments)
        if missing:
            raise FormatError(f"segment ids {sorted(missing)} have no entry in the segment table")
        stuff = [s.category_id for s in self.segments.values() if not s.is_thing]
        if len(stuff) != len(set(stuff)):
            raise FormatError("more than one segment for a stuff category")

    @property
    def height(self) -> int:
        return self.segment_map.height

    @property
    def width(self) -> int:
        return self.segment_map.width

    def segments_info(self) -> list[SegmentInfo]:
        return [self.segments[k] for k in sorted(self.segments)]

    def category_of(self, segment_id: int) -> int:
        return self.segments[segment_id].category_id

    def __repr__(self) -> str:
        things = sum(s.is_thing for s in self.segments.values())
        return f"PanopticSeg({self.height}x{self.width}, {things} things, {len(self.segments) - things} stuff)"


def _rank_groups(keys: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """Order by decreasing size, ties by lowest key."""
    return np.lexsort((keys, -sizes))


def cluster_instances(decoded: DecodedCells, cfg: FusionConfig) -> IdMap:
    """
    Group labeled pixels by decoded cell, merge each group into the first larger
    kept group whose cell center lies within `merge_radius` cells, drop merged
    groups below the area threshold and number the rest 1..K by decreasing size.
    """
    h, w = decoded.shape
    labeled = ~decoded.void
    out = np.zeros((h, w), dtype=np.int64)
    if not labeled.any():
        return IdMap(out)

    cells, inverse, counts = np.unique(decoded.cells[labeled], return_inverse=True, return_counts=True)
    rows, cols = cells // decoded.grid_w, cells % decoded.grid_w
    owner = np.arange(len(cells))
    kept: list[int] = []
    for g in _rank_groups(cells, counts):
        if kept:
            k = np.asarray(kept)
            near = np.flatnonzero(np.hypot(rows[k] - rows[g], cols[k] - cols[g]) <= cfg.merge_radius)
            if near.size:
                owner[g] = k[near[0]]
                continue
        kept.append(g)

    merged = np.bincount(owner, weights=counts, minlength=len(cells))
    threshold = cfg.area_threshold(h, w)
    survivors = np.array([g for g in kept if merged[g] >= threshold], dtype=np.int64)
    new_id = np.zeros(len(cells), dtype=np.int64)
    if survivors.size:
        ranked = survivors[_rank_groups(cells[survivors], merged[survivors])]
        new_id[ranked] = np.arange(1, len(ranked) + 1)
    dropped = len(kept) - survivors.size
    logger.debug(f"clustering: {len(cells)} cells, {len(kept)} after merging, {dropped} below {threshold:g} px")
    out[labeled] = new_id[owner][inverse]
    return IdMap(out)


def _modal_thing_class(instances: np.ndarray, semantics: np.ndarray, thing: np.ndarray) -> dict[int, int]:
    """Most frequent thing class per instance, ties by lowest class id."""
    pick = (instances != VOID_ID) & thing
    if not pick.any():
        return {}
    pairs, counts = np.unique(np.stack([instances[pick], semantics[pick]]), axis=1, return_counts=True)
    order = np.lexsort((pairs[1], -counts, pairs[0]))
    pairs = pairs[:, order]
    first = np.r_[True, pairs[0, 1:] != pairs[0, :-1]]
    return dict(zip(pairs[0, first].tolist(), pairs[1, first].tolist()))


def majority_vote(instances: IdMap, semantics: IdMap, cfg: FusionConfig) -> PanopticSeg:
    """
    Each instance takes the modal thing class of its pixels (instances without any
    thing-class pixel dissolve). Pixels outside the surviving instances join the
    single segment of their stuff class; thing-class or unknown pixels become void,
    or join the nearest instance under the "nearest" orphan policy.
    """
    check_same_hw(instances, semantics)
    inst, sem = instances.ids, semantics.ids
    table = cfg.categories
    thing = np.isin(sem, table.thing_ids)
    stuff = np.isin(sem, table.stuff_ids)

    out = np.zeros(inst.shape, dtype=np.int64)
    segments: dict[int, SegmentInfo] = {}
    next_id = 1
    for iid, cat in sorted(_modal_thing_class(inst, sem, thing).items()):
        mask = inst == iid
        out[mask] = next_id
        segments[next_id] = SegmentInfo(next_id, int(cat), True, int(mask.sum()))
        next_id += 1

    covered = out != VOID_ID
    orphans = ~covered & thing
    if cfg.orphan_policy == "nearest" and covered.any() and orphans.any():
        _, (near_r, near_c) = ndimage.distance_transform_edt(~covered, return_indices=True)
        out[orphans] = out[near_r[orphans], near_c[orphans]]
        for sid in segments:
            segments[sid] = SegmentInfo(sid, segments[sid].category_id, True, int((out == sid).sum()))

    for cat in np.unique(sem[~covered & stuff]).tolist():
        mask = ~covered & (sem == cat)
        out[mask] = next_id
        segments[next_id] = SegmentInfo(next_id, int(cat), False, int(mask.sum()))
        next_id += 1
    return PanopticSeg(IdMap(out), segments)


def fuse_decoded(sem_logits: Field, decoded: DecodedCells, cfg: FusionConfig) -> PanopticSeg:
    """Cluster already decoded cells and vote classes from the semantic argmax."""
    semantics = IdMap(sem_logits.values.argmax(axis=0))
    return majority_vote(cluster_instances(decoded, cfg), semantics, cfg)


def fuse(sem_logits: Field, inst_pred: Field, grid: UVGrid, cfg: FusionConfig) -> PanopticSeg:
    check_same_hw(sem_logits, inst_pred)
    return fuse_decoded(sem_logits, decode_pe(inst_pred, grid), cfg)


def panoptic_from_labels(instances: IdMap, semantics: IdMap, categories: CategoryTable) -> PanopticSeg:
    """Ground-truth panoptic segmentation of labeled instance and semantic maps."""
    return majority_vote(instances, semantics, FusionConfig(categories=categories))


def write_panoptic(seg: PanopticSeg) -> tuple[bytes, bytes]:
    """PNG of segment ids plus a JSON segments_info table."""
    info = {"segments_info": [{**s.to_dict(), "isthing": int(s.is_thing)} for s in seg.segments_info()]}
    for entry in info["segments_info"]:
        entry.pop("is_thing")
    return write_panoptic_png(seg.segment_map), (dumps_json(info, indent=2) + "\n").encode("utf-8")


def read_panoptic(png: bytes, segments_json: bytes | str | None = None) -> PanopticSeg:
    """
    Read a panoptic PNG with its segments_info JSON. Without a table every non-void
    id becomes a class-agnostic thing segment of category 0.
    """
    segment_map = read_panoptic_png(png)
    ids, areas = np.unique(segment_map.ids, return_counts=True)
    area_of = dict(zip(ids.tolist(), areas.tolist()))
    if segments_json is None:
        logger.warning("no segment table given, reading segments as class-agnostic things")
        segments = {i: SegmentInfo(i, 0, True, area_of[i]) for i in segment_map.labels().tolist()}
        return PanopticSeg(segment_map, segments)
    try:
        obj = loads_json(segments_json)
        entries = obj["segments_info"] if isinstance(obj, dict) else obj
        segments = {
            int(e["id"]): SegmentInfo(
                int(e["id"]),
                int(e["category_id"]),
                bool(e.get("isthing", e.get("is_thing", True))),
                int(area_of.get(int(e["id"]), 0)),
            )
            for e in entries
        }
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"malformed segments table: {e}") from e
    return PanopticSeg(segment_map, segments)
