import tracemalloc

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from spectrapan.codec import PEConfig, encode_pe, gamma, label_centroids
from spectrapan.errors import DegenerateInputError, RangeError, ShapeError
from spectrapan.gradcheck import check_gradient, compare
from spectrapan.grid import Field, IdMap, WeightMask
from spectrapan.losses import (
    LossWeights,
    affine_invariant_depth_loss,
    dice_loss,
    direct_regression_loss,
    instance_pe_loss,
    panoptic_loss,
    semantic_ce_loss,
    silog_loss,
    tv_loss_ce,
    tv_loss_regression,
    uv_ce_loss,
    weighted_reduce,
)

SMALL_PE = PEConfig(L=2, grid_h=8, grid_w=8)
GRAD_TOL = 1e-5
DIRECT_TARGET = Field(np.random.default_rng(1234).uniform(0, 1, size=(3, 3, 4)))


def _losses(rng):
    """Every differentiable loss as a closure over random 3 x 4 inputs, with a prediction shape or starting point."""
    ids = rng.integers(0, 4, size=(3, 4))
    ids[0, 0] = 1
    inst = IdMap(ids)
    target = encode_pe(inst, SMALL_PE)
    weights = WeightMask(rng.uniform(0.1, 1.0, size=(3, 4)))
    labels = IdMap(rng.integers(0, 3, size=(3, 4)))
    depth_t = Field(rng.uniform(0.5, 2.0, size=(1, 3, 4)))
    valid = rng.random((3, 4)) < 0.8
    valid[0, :3] = True
    valid = WeightMask(valid.astype(float))
    # affine gradients are checked near a positive affine image of the target, away from flat regions
    near_target = rng.uniform(0.5, 2.0) * depth_t.values + rng.uniform(-1.0, 1.0) + 0.1 * rng.normal(size=(1, 3, 4))
    return {
        "pe": (lambda p: instance_pe_loss(p, target, weights), (8, 3, 4)),
        "direct_l1": (lambda p: direct_regression_loss(p, DIRECT_TARGET, weights, "l1"), (3, 3, 4)),
        "direct_l2": (lambda p: direct_regression_loss(p, DIRECT_TARGET, weights, "l2"), (3, 3, 4)),
        "ce": (lambda p: semantic_ce_loss(p, labels, weights), (3, 3, 4)),
        "tv_l1": (lambda p: tv_loss_regression(p, "l1"), (3, 3, 4)),
        "tv_l2": (lambda p: tv_loss_regression(p, "l2"), (3, 3, 4)),
        "tv_pe": (lambda p: tv_loss_regression(p, "pe"), (8, 3, 4)),
        "tv_ce": (tv_loss_ce, (3, 3, 4)),
        "dice": (lambda p: dice_loss(p, inst, SMALL_PE), (8, 3, 4)),
        "affine": (lambda p: affine_invariant_depth_loss(p, depth_t, valid), near_target),
    }


@pytest.mark.parametrize("seed", range(100))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    for name, (fn, start) in _losses(rng).items():
        pred = Field(start if isinstance(start, np.ndarray) else rng.normal(size=start))
        res = check_gradient(fn, pred)
        assert res.rel_error < GRAD_TOL, (name, res)


@pytest.mark.parametrize("seed", range(20))
def test_silog_gradient(seed):
    rng = np.random.default_rng(seed)
    target = Field(rng.uniform(0.5, 2.0, size=(1, 3, 4)))
    valid = WeightMask(np.ones((3, 4)))
    pred = Field(rng.uniform(0.5, 2.0, size=(1, 3, 4)))
    res = check_gradient(lambda p: silog_loss(p, target, valid, 0.5), pred)
    assert res.rel_error < GRAD_TOL


def test_compare_reports_relative_error():
    res = compare(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    assert res.rel_error == 0.0 and res.passed()
    assert not compare(np.array([1.0]), np.array([-1.0])).passed()


def test_weighted_reduce():
    w = WeightMask(np.array([[1.0, 0.0], [0.5, 0.5]]))
    assert weighted_reduce(np.array([[2.0, 100.0], [1.0, 3.0]]), w) == pytest.approx(2.0)
    assert weighted_reduce(np.array([[1.0, 3.0]]), WeightMask(np.array([[0.25, 0.75]]))) == pytest.approx(2.5)
    assert weighted_reduce(np.array([[1.0, 3.0]]), WeightMask(np.array([[0.0, 0.4]]))) == pytest.approx(3.0)
    with pytest.raises(DegenerateInputError):
        weighted_reduce(np.ones((2, 2)), WeightMask(np.zeros((2, 2))))


def test_weighted_reduce_ignores_weight_scale(rng):
    values = rng.normal(size=(5, 7))
    w = rng.uniform(0.001, 0.02, size=(5, 7))
    base = weighted_reduce(values, WeightMask(w))
    for k in (1e-3, 0.5, 40.0):
        assert weighted_reduce(values, WeightMask(k * w)) == pytest.approx(base, rel=1e-12)


def test_pe_loss_values(pe):
    inst = IdMap(np.ones((4, 4), dtype=np.int64))
    target = encode_pe(inst, pe)
    w = WeightMask.uniform(4, 4)
    assert instance_pe_loss(target, target, w).value == 0.0
    # each half of a target has squared norm L
    assert instance_pe_loss(Field(np.zeros(target.shape)), target, w).value == pytest.approx(np.sqrt(pe.L))
    with pytest.raises(ShapeError):
        instance_pe_loss(Field(np.zeros((6, 4, 4))), Field(np.zeros((6, 4, 4))), w)


def test_direct_loss_sums_channels():
    pred = Field(np.zeros((3, 1, 2)))
    target = Field(np.full((3, 1, 2), 0.5))
    w = WeightMask.uniform(1, 2)
    assert direct_regression_loss(pred, target, w, "l1").value == pytest.approx(1.5)
    assert direct_regression_loss(pred, target, w, "l2").value == pytest.approx(0.75)
    with pytest.raises(RangeError):
        direct_regression_loss(pred, target, w, "huber")


def test_ce_ignores_label():
    logits = Field(np.zeros((2, 1, 2)))
    labels = IdMap(np.array([[0, 255]]))
    res = semantic_ce_loss(logits, labels, WeightMask.uniform(1, 2))
    assert res.value == pytest.approx(np.log(2))
    assert np.all(res.gradient.values[:, 0, 1] == 0)
    with pytest.raises(RangeError):
        semantic_ce_loss(logits, IdMap(np.array([[0, 2]])), WeightMask.uniform(1, 2))


def test_tv_values():
    flat = Field(np.ones((4, 3, 3)))
    assert tv_loss_regression(flat, "pe").value == 0.0
    ramp = Field(np.arange(3, dtype=float)[None, None, :].repeat(2, axis=1))
    # 4 horizontal unit steps over 7 neighbor pairs
    assert tv_loss_regression(ramp, "l1").value == pytest.approx(4 / 7)
    with pytest.raises(DegenerateInputError):
        tv_loss_regression(Field(np.zeros((1, 1, 1))), "l1")
    with pytest.raises(RangeError):
        tv_loss_regression(Field(np.zeros((1, 2, 2))), "linf")


def test_ce_saturates():
    logits = np.zeros((3, 1, 1))
    logits[1] = 50.0
    assert semantic_ce_loss(Field(logits), IdMap(np.array([[1]])), WeightMask.uniform(1, 1)).value < 1e-12


def test_tv_single_pair():
    assert tv_loss_regression(Field(np.array([[[0.0, 1.0]]])), "l1").value == pytest.approx(1.0)
    assert tv_loss_ce(Field(np.zeros((2, 2, 2)))).value == pytest.approx(np.log(2))


def test_tv_ce_uniform():
    res = tv_loss_ce(Field(np.zeros((4, 3, 5))))
    assert res.value == pytest.approx(2 * 4 * np.log(4))


def test_dice_perfect_single_instance():
    inst = IdMap(np.ones((3, 3), dtype=np.int64))
    target = encode_pe(inst, SMALL_PE)
    assert dice_loss(target, inst, SMALL_PE).value == pytest.approx(0.0, abs=1e-12)


def test_dice_matches_pairwise_distances(rng):
    inst = IdMap(rng.integers(0, 4, size=(5, 6)))
    pred = Field(rng.normal(size=(8, 5, 6)))
    uniq, u, v, inverse = label_centroids(inst)
    keep = uniq != 0
    codes = np.concatenate([gamma(u, 2), gamma(v, 2)], axis=1)[keep]
    member = (inverse[None, :] == np.flatnonzero(keep)[:, None]).astype(float)
    p = np.exp(-cdist(codes, pred.values.reshape(8, -1).T, "sqeuclidean"))
    w = 1.0 / member.sum(axis=1)
    expected = 1.0 - 2.0 * (w * (p * member).sum(axis=1)).sum() / (w * (member + p).sum(axis=1)).sum()
    assert dice_loss(pred, inst, SMALL_PE).value == pytest.approx(expected, rel=1e-10)


def test_dice_memory_stays_at_instances_by_pixels(rng):
    # 30 instances on 240 x 240 at L=4; a (K, 4L, N) intermediate alone would be 440 MB
    pe = PEConfig(L=4, grid_h=80, grid_w=80)
    ids = np.repeat(np.repeat(np.arange(1, 31).reshape(5, 6), 48, axis=0), 40, axis=1)
    pred = Field(rng.normal(size=(16, 240, 240)))
    tracemalloc.start()
    try:
        dice_loss(pred, IdMap(ids), pe)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    assert peak < 200 * 2**20


def test_dice_range_and_empty():
    inst = IdMap(np.array([[1, 1, 2, 2], [1, 1, 2, 2]]))
    perfect = dice_loss(encode_pe(inst, SMALL_PE), inst, SMALL_PE).value
    off = dice_loss(Field(np.zeros((8, 2, 4))), inst, SMALL_PE).value
    assert 0.0 <= perfect < off <= 1.0
    with pytest.raises(DegenerateInputError):
        dice_loss(Field(np.zeros((8, 2, 4))), IdMap.zeros(2, 4), SMALL_PE)


def test_affine_invariance(rng):
    target = Field(rng.uniform(0.5, 2.0, size=(1, 4, 4)))
    valid = WeightMask.uniform(4, 4)
    shifted = Field(3.0 * target.values + 7.0)
    assert affine_invariant_depth_loss(shifted, target, valid).value == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DegenerateInputError):
        affine_invariant_depth_loss(Field(np.ones((1, 4, 4))), target, valid)


def test_silog_scale_invariance(rng):
    target = Field(rng.uniform(0.5, 2.0, size=(1, 4, 4)))
    valid = WeightMask.uniform(4, 4)
    scaled = Field(2.5 * target.values)
    assert silog_loss(scaled, target, valid, lam=1.0).value == pytest.approx(0.0, abs=1e-12)
    assert silog_loss(scaled, target, valid, lam=0.0).value == pytest.approx(np.log(2.5) ** 2)
    with pytest.raises(RangeError):
        silog_loss(scaled, target, valid, lam=1.5)
    with pytest.raises(RangeError):
        silog_loss(Field(-target.values), target, valid)


def test_silog_joint_rescaling(rng):
    pred = Field(rng.uniform(0.5, 2.0, size=(1, 4, 4)))
    target = Field(rng.uniform(0.5, 2.0, size=(1, 4, 4)))
    valid = WeightMask.uniform(4, 4)
    base = silog_loss(pred, target, valid, 0.5).value
    for k in (0.1, 3.0, 250.0):
        scaled = silog_loss(Field(k * pred.values), Field(k * target.values), valid, 0.5).value
        assert scaled == pytest.approx(base, rel=1e-9)


def test_uv_ce_is_sum_of_both_axes():
    u = Field(np.zeros((3, 1, 1)))
    v = Field(np.zeros((5, 1, 1)))
    res = uv_ce_loss(u, v, IdMap(np.array([[2]])), IdMap(np.array([[4]])), WeightMask.uniform(1, 1))
    assert res.value == pytest.approx(np.log(3) + np.log(5))


def test_panoptic_loss_composition(rng):
    inst = IdMap(np.array([[0, 1, 1, 2], [0, 1, 2, 2], [0, 0, 2, 2]]))
    sem = IdMap(np.array([[1, 2, 2, 3], [1, 2, 3, 3], [1, 1, 3, 3]]))
    sem_logits = Field(rng.normal(size=(4, 3, 4)))
    inst_pred = Field(rng.normal(size=(8, 3, 4)))
    w = WeightMask.uniform(3, 4)
    full = panoptic_loss(sem_logits, sem, inst_pred, inst, SMALL_PE, w, w)
    assert set(full.components) == {"sem", "sem_tv", "inst", "inst_tv", "dice"}
    assert full.value == pytest.approx(sum(full.components.values()))
    only_inst = panoptic_loss(sem_logits, sem, inst_pred, inst, SMALL_PE, w, w, LossWeights(sem=0, tv=0, dice=0))
    assert only_inst.value == pytest.approx(full.components["inst"])
    assert np.all(only_inst.semantic_grad.values == 0)
    no_things = panoptic_loss(sem_logits, sem, inst_pred, IdMap.zeros(3, 4), SMALL_PE, w, w)
    assert "dice" not in no_things.components
    with pytest.raises(RangeError):
        LossWeights(dice=-1.0)


def test_affine_invariance_random_triples():
    rng = np.random.default_rng(11)
    valid = WeightMask.uniform(3, 5)
    for _ in range(100):
        d = Field(rng.normal(size=(1, 3, 5)))
        a, b = rng.uniform(0.1, 10.0), rng.normal(scale=5.0)
        assert affine_invariant_depth_loss(Field(a * d.values + b), d, valid).value < 1e-9


def test_silog_constant_log_offset():
    rng = np.random.default_rng(12)
    y = Field(rng.uniform(0.5, 3.0, size=(1, 4, 4)))
    res = silog_loss(Field(np.e * y.values), y, WeightMask.uniform(4, 4), lam=0.5)
    assert res.value == pytest.approx(0.5, abs=1e-9)
