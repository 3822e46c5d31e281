"""
Scalar losses with analytic gradients w.r.t. the prediction.

Per-pixel losses are reduced with the weighted average sum(w * l) / sum(w).
Non-differentiable points (zero-norm halves, absolute-value kinks, median
ties) take subgradient 0.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax

from .codec import PEConfig, label_centroids, gamma
from .errors import DegenerateInputError, RangeError, ShapeError
from .grid import VOID_ID, Field, IdMap, WeightMask, check_same_hw

logger = logging.getLogger("spectrapan")

TV_NORMS = ("l1", "l2", "pe")


@dataclass(frozen=True, eq=False)
class LossResult:
    value: float
    gradient: Field

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise RangeError(f"non-finite loss value {self.value}")


@dataclass(frozen=True)
class LossWeights:
    """Multiplier of each term of the composed panoptic loss."""

    sem: float = 1.0
    inst: float = 1.0
    tv: float = 1.0
    dice: float = 1.0

    def __post_init__(self):
        for name in ("sem", "inst", "tv", "dice"):
            if getattr(self, name) < 0:
                raise RangeError(f"loss weight {name} must be non-negative")


def _normalized_weights(weights: WeightMask | np.ndarray) -> np.ndarray:
    w = weights.weights if isinstance(weights, WeightMask) else np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        raise DegenerateInputError("weights sum to zero, the weighted average is undefined")
    return w / total


def weighted_reduce(per_pixel: Field | np.ndarray, weights: WeightMask) -> float:
    """sum(w * l) / sum(w) over a 1 x H x W (or H x W) per-pixel loss."""
    values = per_pixel.values if isinstance(per_pixel, Field) else np.asarray(per_pixel, dtype=np.float64)
    if values.ndim == 3:
        if values.shape[0] != 1:
            raise ShapeError(f"per-pixel loss needs one channel, got {values.shape[0]}")
        values = values[0]
    if values.shape != weights.shape:
        raise ShapeError(f"loss shape {values.shape} does not match weights {weights.shape}")
    return float((_normalized_weights(weights) * values).sum())


def _check_pair(pred: Field, target: Field) -> None:
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")


def _unit(x: np.ndarray, norm: np.ndarray) -> np.ndarray:
    """x / norm along axis 0, 0 where the norm vanishes."""
    return np.divide(x, norm, out=np.zeros_like(x), where=norm > 0)


def _half_norms(delta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    half = delta.shape[0] // 2
    du, dv = delta[:half], delta[half:]
    return du, dv, np.linalg.norm(du, axis=0), np.linalg.norm(dv, axis=0)


def _check_pe_channels(channels: int) -> None:
    if channels % 4 or channels == 0:
        raise ShapeError(f"embedding channels must be a positive multiple of 4, got {channels}")


def instance_pe_loss(pred: Field, target: Field, weights: WeightMask) -> LossResult:
    """Two-half embedding distance 0.5 * (|d_u| + |d_v|), weighted average over pixels."""
    _check_pair(pred, target)
    _check_pe_channels(pred.channels)
    check_same_hw(pred, weights)
    wn = _normalized_weights(weights)
    du, dv, nu, nv = _half_norms(pred.values - target.values)
    value = float((wn * 0.5 * (nu + nv)).sum())
    grad = 0.5 * np.concatenate([_unit(du, nu), _unit(dv, nv)]) * wn
    return LossResult(value, Field(grad))


def direct_regression_loss(pred: Field, target: Field, weights: WeightMask, norm: str = "l1") -> LossResult:
    """Per-pixel sum over channels of |d| ("l1") or d^2 ("l2"), weighted average over pixels."""
    _check_pair(pred, target)
    check_same_hw(pred, weights)
    wn = _normalized_weights(weights)
    delta = pred.values - target.values
    if norm == "l1":
        value = (wn * np.abs(delta).sum(axis=0)).sum()
        grad = np.sign(delta) * wn
    elif norm == "l2":
        value = (wn * (delta**2).sum(axis=0)).sum()
        grad = 2.0 * delta * wn
    else:
        raise RangeError(f"unknown regression norm {norm!r}")
    return LossResult(float(value), Field(grad))


def semantic_ce_loss(logits: Field, target: IdMap, weights: WeightMask, ignore: int | None = 255) -> LossResult:
    """Softmax cross-entropy over the channel axis; pixels labeled `ignore` get weight 0."""
    check_same_hw(logits, target, weights)
    n = logits.channels
    labels = target.ids
    ignored = labels == ignore if ignore is not None else np.zeros(labels.shape, dtype=bool)
    if np.any((labels >= n) & ~ignored):
        raise RangeError(f"class index {int(labels[~ignored].max())} out of range for {n} classes")
    wn = _normalized_weights(np.where(ignored, 0.0, weights.weights))
    safe = np.where(ignored, 0, labels)
    logp = log_softmax(logits.values, axis=0)
    picked = np.take_along_axis(logp, safe[None], axis=0)[0]
    value = float(-(wn * picked).sum())
    grad = np.exp(logp)
    np.put_along_axis(grad, safe[None], np.take_along_axis(grad, safe[None], axis=0) - 1.0, axis=0)
    return LossResult(value, Field(grad * wn))


def _pair_norm(diff: np.ndarray, norm: str) -> tuple[np.ndarray, np.ndarray]:
    """Norm of difference vectors along axis 0 and its derivative w.r.t. the difference."""
    if norm == "l1":
        return np.abs(diff).sum(axis=0), np.sign(diff)
    if norm == "l2":
        length = np.linalg.norm(diff, axis=0)
        return length, _unit(diff, length)
    if norm == "pe":
        du, dv, nu, nv = _half_norms(diff)
        return 0.5 * (nu + nv), 0.5 * np.concatenate([_unit(du, nu), _unit(dv, nv)])
    raise RangeError(f"unknown total-variation norm {norm!r}, expected one of {TV_NORMS}")


def tv_loss_regression(pred: Field, norm: str = "pe") -> LossResult:
    """Mean norm of the differences over every vertical and horizontal neighbor pair."""
    if norm == "pe":
        _check_pe_channels(pred.channels)
    y = pred.values
    pairs = (pred.height - 1) * pred.width + pred.height * (pred.width - 1)
    if pairs == 0:
        raise DegenerateInputError("total variation needs at least two pixels")
    vert, d_vert = _pair_norm(y[:, 1:, :] - y[:, :-1, :], norm)
    horiz, d_horiz = _pair_norm(y[:, :, 1:] - y[:, :, :-1], norm)
    value = (vert.sum() + horiz.sum()) / pairs
    grad = np.zeros_like(y)
    grad[:, 1:, :] += d_vert / pairs
    grad[:, :-1, :] -= d_vert / pairs
    grad[:, :, 1:] += d_horiz / pairs
    grad[:, :, :-1] -= d_horiz / pairs
    return LossResult(float(value), Field(grad))


def tv_loss_ce(logits: Field) -> LossResult:
    """
    Cross-entropy total variation of the per-pixel class distributions:
    sum over pixels with a lower and a right neighbor of
    0.5 * (H(P_ij, P_i+1,j) + H(P_ij, P_i,j+1)), H(a, b) = -sum a log b.
    """
    if logits.height < 2 or logits.width < 2:
        raise DegenerateInputError("cross-entropy total variation needs H, W >= 2")
    logp = log_softmax(logits.values, axis=0)
    p = np.exp(logp)
    a = p[:, :-1, :-1]
    grad = np.zeros_like(p)
    value = 0.0
    for nb in (np.s_[:, 1:, :-1], np.s_[:, :-1, 1:]):
        log_b = logp[nb]
        h = -(a * log_b).sum(axis=0)
        value += 0.5 * h.sum()
        # d/d(logits of a) = -a (log b + H); d/d(logits of b) = b - a
        grad[:, :-1, :-1] += 0.5 * (-a * (log_b + h))
        grad[nb] += 0.5 * (p[nb] - a)
    return LossResult(float(value), Field(grad))


def dice_loss(pred: Field, instances: IdMap, cfg: PEConfig) -> LossResult:
    """
    Generalized soft DICE over instances with fuzzy participation
    p_l = exp(-|pred_u - t_l,u|^2) * exp(-|pred_v - t_l,v|^2) and weights w_l = 1 / area_l:
    1 - 2 sum_l w_l sum r p / sum_l w_l sum (r + p).
    """
    if pred.channels != cfg.dim:
        raise ShapeError(f"prediction has {pred.channels} channels, expected {cfg.dim}")
    check_same_hw(pred, instances)
    uniq, u, v, inverse = label_centroids(instances)
    labeled = np.flatnonzero(uniq != VOID_ID)
    if len(labeled) == 0:
        raise DegenerateInputError("DICE needs at least one labeled instance")

    flat = pred.values.reshape(cfg.dim, -1)
    codes = np.concatenate([gamma(u, cfg.L), gamma(v, cfg.L)], axis=1)[labeled]
    areas = np.bincount(inverse, minlength=len(uniq))[labeled].astype(np.float64)
    member = inverse[None, :] == labeled[:, None]  # r, (K, N)

    # |x - c|^2 = |x|^2 - 2 c.x + |c|^2, kept at (K, N)
    sq = (flat**2).sum(axis=0)[None, :] - 2.0 * codes @ flat + (codes**2).sum(axis=1)[:, None]
    p = np.exp(-np.maximum(sq, 0.0))
    w = 1.0 / areas
    numer = (w * (p * member).sum(axis=1)).sum()
    denom = len(labeled) + (w * p.sum(axis=1)).sum()
    value = 1.0 - 2.0 * numer / denom

    dl_dp = -2.0 * w[:, None] * (member * denom - numer) / denom**2
    g = dl_dp * p
    grad = -2.0 * (flat * g.sum(axis=0)[None, :] - codes.T @ g)
    return LossResult(float(value), Field(grad.reshape(pred.shape)))


def _valid_mask(valid: WeightMask, *fields: Field) -> np.ndarray:
    for f in fields:
        if f.channels != 1:
            raise ShapeError(f"depth inputs need one channel, got {f.channels}")
    check_same_hw(valid, *fields)
    return valid.weights > 0


def _median_index(x: np.ndarray) -> int:
    """Index of the median, the lower middle element for even counts."""
    return int(np.argsort(x, kind="stable")[(len(x) - 1) // 2])


def _align(x: np.ndarray) -> tuple[np.ndarray, int, float]:
    m = _median_index(x)
    e = x - x[m]
    s = np.abs(e).mean()
    if not s > 0:
        raise DegenerateInputError("disparity has zero spread around its median")
    return e, m, s


def affine_invariant_depth_loss(pred: Field, target: Field, valid: WeightMask) -> LossResult:
    """Mean |d_hat* - d_hat| over valid pixels, d_hat = (d - median d) / mean |d - median d|."""
    mask = _valid_mask(valid, pred, target)
    n = int(mask.sum())
    if n < 2:
        raise DegenerateInputError("affine-invariant loss needs at least two valid pixels")
    d = pred.values[0][mask]
    e, m, s = _align(d)
    e_t, _, s_t = _align(target.values[0][mask])
    r = e_t / s_t - e / s
    value = np.abs(r).mean()

    g = -np.sign(r) / n  # dL/d d_hat
    sign_e = np.sign(e)
    big_g, ge = g.sum(), (g * e).sum()
    grad = g / s - ge / (n * s**2) * sign_e
    grad[m] += -big_g / s + ge / (n * s**2) * sign_e.sum()

    full = np.zeros(pred.values.shape[1:])
    full[mask] = grad
    return LossResult(float(value), Field.from_plane(full))


def silog_loss(pred: Field, target: Field, valid: WeightMask, lam: float = 0.5) -> LossResult:
    """Scale-invariant log loss mean(d^2) - lam * mean(d)^2, d = log y - log y*."""
    if not 0.0 <= lam <= 1.0:
        raise RangeError(f"lambda must lie in [0, 1], got {lam}")
    mask = _valid_mask(valid, pred, target)
    n = int(mask.sum())
    if n == 0:
        raise DegenerateInputError("scale-invariant log loss needs a valid pixel")
    y, y_t = pred.values[0][mask], target.values[0][mask]
    if np.any(y <= 0) or np.any(y_t <= 0):
        raise RangeError("depth must be positive on valid pixels")
    d = np.log(y) - np.log(y_t)
    mean_d = d.mean()
    value = max((d**2).mean() - lam * mean_d**2, 0.0)
    full = np.zeros(pred.values.shape[1:])
    full[mask] = (2.0 * d / n - 2.0 * lam * mean_d / n) / y
    return LossResult(float(value), Field.from_plane(full))


@dataclass(frozen=True, eq=False)
class UVLossResult:
    value: float
    u_gradient: Field
    v_gradient: Field


def uv_ce_loss(u_logits: Field, v_logits: Field, u_bins: IdMap, v_bins: IdMap, weights: WeightMask) -> UVLossResult:
    """Independent u / v classification baseline: sum of the two cross-entropies."""
    u = semantic_ce_loss(u_logits, u_bins, weights, ignore=None)
    v = semantic_ce_loss(v_logits, v_bins, weights, ignore=None)
    return UVLossResult(u.value + v.value, u.gradient, v.gradient)


@dataclass(eq=False)
class PanopticLossResult:
    value: float
    components: dict[str, float] = field(default_factory=dict)
    semantic_grad: Field | None = None
    instance_grad: Field | None = None


def panoptic_loss(
    sem_logits: Field,
    semantics: IdMap,
    inst_pred: Field,
    instances: IdMap,
    pe_cfg: PEConfig,
    sem_weights: WeightMask,
    inst_weights: WeightMask,
    loss_weights: LossWeights = LossWeights(),
    ignore_index: int | None = 255,
    tv_norm: str = "pe",
) -> PanopticLossResult:
    """
    Semantic cross-entropy and its total variation, plus instance embedding loss,
    its total variation and DICE, each scaled by `loss_weights`.
    """
    from .codec import encode_pe

    check_same_hw(sem_logits, semantics, inst_pred, instances, sem_weights, inst_weights)
    target = encode_pe(instances, pe_cfg)
    parts: dict[str, tuple[float, LossResult]] = {
        "sem": (loss_weights.sem, semantic_ce_loss(sem_logits, semantics, sem_weights, ignore_index)),
        "sem_tv": (loss_weights.tv, tv_loss_ce(sem_logits)),
        "inst": (loss_weights.inst, instance_pe_loss(inst_pred, target, inst_weights)),
        "inst_tv": (loss_weights.tv, tv_loss_regression(inst_pred, tv_norm)),
    }
    if len(instances.labels()):
        parts["dice"] = (loss_weights.dice, dice_loss(inst_pred, instances, pe_cfg))
    else:
        logger.debug("no labeled instance, DICE term skipped")

    sem_grad = np.zeros(sem_logits.shape)
    inst_grad = np.zeros(inst_pred.shape)
    value = 0.0
    for name, (scale, res) in parts.items():
        value += scale * res.value
        if name.startswith("sem"):
            sem_grad += scale * res.gradient.values
        else:
            inst_grad += scale * res.gradient.values
    return PanopticLossResult(
        value=float(value),
        components={name: res.value for name, (_, res) in parts.items()},
        semantic_grad=Field(sem_grad),
        instance_grad=Field(inst_grad),
    )
