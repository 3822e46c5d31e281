import math

import numpy as np
import pytest

from spectrapan.analysis import PQStat, best_match_iou, iou_by_size, panoptic_quality, pq_stat, table_from_matches
from spectrapan.analysis.panoptic_quality import report_rows
from spectrapan.errors import RangeError, ShapeError
from spectrapan.grid import IdMap
from spectrapan.pipeline import PanopticSeg, SegmentInfo, panoptic_from_labels


def _seg(ids, cats: dict[int, tuple[int, bool]]) -> PanopticSeg:
    ids = np.asarray(ids)
    segments = {sid: SegmentInfo(sid, cat, thing, int((ids == sid).sum())) for sid, (cat, thing) in cats.items()}
    return PanopticSeg(IdMap(ids), segments)


def test_identical_segmentations(categories):
    inst = IdMap(np.array([[1, 1, 0, 2], [1, 1, 0, 2]]))
    sem = IdMap(np.array([[2, 2, 1, 3], [2, 2, 1, 3]]))
    truth = panoptic_from_labels(inst, sem, categories)
    report = panoptic_quality(truth, truth)
    assert report.pq == pytest.approx(1.0)
    assert (report.tp, report.fp, report.fn) == (3, 0, 0)
    assert report.things.n == 2 and report.stuff.n == 1


def test_disjoint_segmentations():
    truth = _seg([[1, 1, 0, 0]], {1: (2, True)})
    pred = _seg([[0, 0, 1, 1]], {1: (2, True)})
    # the prediction lies on truth void and is not counted
    report = panoptic_quality(pred, truth)
    assert report.pq == 0.0
    assert (report.tp, report.fp, report.fn) == (0, 0, 1)


def test_partial_match_and_class_confusion():
    truth = np.zeros((4, 10), dtype=np.int64)
    truth[:, :5] = 1
    truth[:, 7:] = 2
    pred = np.zeros((4, 10), dtype=np.int64)
    pred[:, :4] = 1
    pred[:, 7:] = 2
    report = panoptic_quality(
        _seg(pred, {1: (2, True), 2: (2, True)}),
        _seg(truth, {1: (2, True), 2: (3, True)}),
    )
    by_cat = {c.category_id: c for c in report.per_category}
    # one match at IoU 16 / 20 plus one false positive
    assert by_cat[2].pq == pytest.approx(0.8 / 1.5)
    assert by_cat[2].sq == pytest.approx(0.8)
    assert (by_cat[2].tp, by_cat[2].fp, by_cat[2].fn) == (1, 1, 0)
    assert by_cat[3].pq == 0.0 and by_cat[3].fn == 1
    assert report.pq == pytest.approx(0.4 / 1.5)


def test_one_match_one_miss():
    truth = np.zeros((2, 10), dtype=np.int64)
    truth[:, :5] = 1
    truth[:, 7:] = 2
    pred = np.zeros((2, 10), dtype=np.int64)
    pred[:, :4] = 1
    report = panoptic_quality(_seg(pred, {1: (2, True)}), _seg(truth, {1: (2, True), 2: (2, True)}))
    assert (report.tp, report.fp, report.fn) == (1, 0, 1)
    assert report.pq == pytest.approx(0.8 / 1.5)


def test_half_coverage_is_not_a_match():
    truth = _seg([[1, 1, 1, 1]], {1: (2, True)})
    pred = _seg([[1, 1, 0, 0]], {1: (2, True)})
    assert panoptic_quality(pred, truth).pq == 0.0


def test_low_iou_is_not_a_match():
    truth = _seg([[1, 1, 1, 1]], {1: (2, True)})
    pred = _seg([[1, 1, 2, 2]], {1: (2, True), 2: (2, True)})
    report = panoptic_quality(pred, truth)
    assert report.pq == 0.0
    assert (report.tp, report.fp, report.fn) == (0, 2, 1)


def test_union_excludes_truth_void():
    truth = _seg([[1, 1, 1, 0]], {1: (2, True)})
    pred = _seg([[1, 1, 1, 1]], {1: (2, True)})
    assert panoptic_quality(pred, truth).sq == pytest.approx(1.0)


def test_empty_against_empty():
    empty = _seg([[0, 0]], {})
    assert panoptic_quality(empty, empty).pq == 1.0


def test_stats_accumulate_over_images():
    truth = _seg([[1, 1, 0, 0]], {1: (2, True)})
    miss = _seg([[0, 0, 0, 0]], {})
    total = PQStat()
    total += pq_stat(truth, truth)
    total += pq_stat(miss, truth)
    report = total.report()
    assert (report.tp, report.fn) == (1, 1)
    assert report.pq == pytest.approx(1.0 / 1.5)


def test_report_outputs():
    truth = _seg([[1, 1, 2, 2]], {1: (2, True), 2: (1, False)})
    report = panoptic_quality(truth, truth)
    assert list(report.to_dataframe()["category_id"]) == [1, 2]
    assert "| 2 | thing |" in report.to_markdown()
    rows = report_rows(report)
    assert rows[-1]["category_id"] == "all"


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        pq_stat(_seg([[0, 0]], {}), _seg([[0, 0, 0]], {}))


def test_best_match_iou():
    truth = IdMap(np.array([[1, 1, 1, 1, 2, 0]]))
    pred = IdMap(np.array([[5, 5, 5, 7, 0, 7]]))
    matches = best_match_iou(pred, truth)
    assert matches[1] == (4, pytest.approx(0.75))
    assert matches[2] == (1, 0.0)
    assert best_match_iou(IdMap.zeros(1, 6), truth)[1] == (4, 0.0)


def test_iou_by_size():
    truth = np.zeros((10, 10), dtype=np.int64)
    truth[:2, :2] = 1  # 4 px
    truth[5:, 5:] = 2  # 25 px
    table = iou_by_size(IdMap(truth), IdMap(truth), [10, 100])
    assert table.means[0] == 1.0 and table.means[1] == 1.0
    assert math.isnan(table.means[2])
    assert [b.count for b in table.bins] == [1, 1, 0]
    assert "inf" in table.to_markdown()


def test_iou_by_size_partial_and_empty():
    truth = np.zeros((10, 10), dtype=np.int64)
    truth[:2, :2] = 1
    truth[5:, 5:9] = 2  # 20 px
    pred = truth.copy()
    pred[5:, 7:9] = 0
    table = iou_by_size(IdMap(pred), IdMap(truth), [10, 100])
    assert table.means[:2] == [1.0, 0.5]
    empty = iou_by_size(IdMap.zeros(10, 10), IdMap(truth), [10, 100])
    assert empty.means[:2] == [0.0, 0.0]


def test_size_thresholds_must_increase():
    with pytest.raises(RangeError):
        table_from_matches([(4, 1.0)], [10, 10])


def _relabel(seg: PanopticSeg, mapping: dict[int, int]) -> PanopticSeg:
    ids = seg.segment_map.ids
    new = np.zeros_like(ids)
    for old, sid in mapping.items():
        new[ids == old] = sid
    segments = {mapping[s.id]: SegmentInfo(mapping[s.id], s.category_id, s.is_thing, s.area) for s in seg.segments.values()}
    return PanopticSeg(IdMap(new), segments)


@pytest.mark.parametrize("seed", range(10))
def test_scores_ignore_segment_ids(seed):
    rng = np.random.default_rng(seed)
    truth_ids = np.repeat(np.repeat(rng.integers(0, 5, size=(4, 4)), 3, axis=0), 3, axis=1)
    pred_ids = truth_ids.copy()
    flip = rng.random(pred_ids.shape) < 0.15
    pred_ids[flip] = rng.integers(0, 5, size=int(flip.sum()))
    cats = {sid: (2 + sid % 2, True) for sid in range(1, 5)}
    truth = _seg(truth_ids, {int(s): cats[s] for s in np.unique(truth_ids) if s})
    pred = _seg(pred_ids, {int(s): cats[s] for s in np.unique(pred_ids) if s})
    ref = panoptic_quality(pred, truth)
    ref_sizes = iou_by_size(pred.segment_map, truth.segment_map, [20, 60])
    for _ in range(3):
        t_map = dict(zip(range(1, 5), rng.choice(np.arange(10, 1000), size=4, replace=False).tolist()))
        p_map = dict(zip(range(1, 5), rng.choice(np.arange(10, 1000), size=4, replace=False).tolist()))
        t2 = _relabel(truth, {k: v for k, v in t_map.items() if k in truth.segments})
        p2 = _relabel(pred, {k: v for k, v in p_map.items() if k in pred.segments})
        report = panoptic_quality(p2, t2)
        assert (report.tp, report.fp, report.fn) == (ref.tp, ref.fp, ref.fn)
        assert (report.pq, report.sq, report.rq) == (pytest.approx(ref.pq), pytest.approx(ref.sq), pytest.approx(ref.rq))
        sizes = iou_by_size(p2.segment_map, t2.segment_map, [20, 60])
        assert [b.count for b in sizes.bins] == [b.count for b in ref_sizes.bins]
        assert np.allclose(sizes.means, ref_sizes.means, equal_nan=True)
