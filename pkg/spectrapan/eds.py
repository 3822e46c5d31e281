"""
Edge distance sampling.

Pixels are weighted by their exact Euclidean distance d to the nearest label
boundary: w = w_min + (1 - w_min) * exp(-d^2 / D^2). Boundaries are
4-connected id transitions, void transitions included.
"""

import logging
from dataclasses import dataclass

import numpy as np
from dataclasses_json import DataClassJsonMixin
from scipy import ndimage

from .errors import RangeError
from .grid import Field, IdMap, WeightMask, check_same_hw

logger = logging.getLogger("spectrapan")

EDT_BACKENDS = ("envelope", "scipy")


@dataclass(frozen=True)
class EDSConfig(DataClassJsonMixin):
    w_min: float = 0.0
    D: float = 20.0
    backend: str = "envelope"

    def __post_init__(self):
        if not 0.0 <= self.w_min <= 1.0:
            raise RangeError(f"w_min must lie in [0, 1], got {self.w_min}")
        if not self.D > 0:
            raise RangeError(f"D must be positive, got {self.D}")
        if self.backend not in EDT_BACKENDS:
            raise RangeError(f"unknown distance transform backend {self.backend!r}, expected one of {EDT_BACKENDS}")


def boundary_mask(idmap: IdMap) -> np.ndarray:
    """Boolean H x W mask: True where some 4-neighbor carries a different id."""
    ids = idmap.ids
    mask = np.zeros(ids.shape, dtype=bool)
    vertical = ids[1:, :] != ids[:-1, :]
    mask[1:, :] |= vertical
    mask[:-1, :] |= vertical
    horizontal = ids[:, 1:] != ids[:, :-1]
    mask[:, 1:] |= horizontal
    mask[:, :-1] |= horizontal
    return mask


def combined_boundary(instances: IdMap, semantics: IdMap) -> np.ndarray:
    """Union of instance and semantic boundaries."""
    check_same_hw(instances, semantics)
    return boundary_mask(instances) | boundary_mask(semantics)


def no_boundary_distance(height: int, width: int) -> float:
    """Stand-in for an infinite distance, strictly above the image diagonal."""
    return float(height + width)


def _column_distances(boundary: np.ndarray) -> np.ndarray:
    """Per-column distance in rows to the nearest boundary pixel, capped at H + W."""
    h, w = boundary.shape
    f = np.where(boundary, 0, h + w).astype(np.int64)
    for i in range(1, h):
        np.minimum(f[i], f[i - 1] + 1, out=f[i])
    for i in range(h - 2, -1, -1):
        np.minimum(f[i], f[i + 1] + 1, out=f[i])
    return f


def _lower_envelope_rows(f: np.ndarray) -> np.ndarray:
    """
    Squared 1-D distance transform of every row at once:
    out[r, q] = min_p (f[r, p] + (q - p)^2), via the lower envelope of parabolas.

    Each row keeps its own envelope (vertices v, boundaries z, top index k); the
    scalar per-row algorithm is stepped for all rows in lockstep.
    """
    n_rows, n = f.shape
    rows = np.arange(n_rows)
    q2 = np.arange(n, dtype=np.int64) ** 2
    lifted = f + q2  # f[p] + p^2
    v = np.zeros((n_rows, n), dtype=np.int64)
    z = np.empty((n_rows, n + 1), dtype=np.float64)
    z[:, 0] = -np.inf
    z[:, 1] = np.inf
    k = np.zeros(n_rows, dtype=np.int64)

    for q in range(1, n):
        while True:
            vk = v[rows, k]
            s = (lifted[:, q] - lifted[rows, vk]) / (2.0 * (q - vk))
            pop = s <= z[rows, k]
            if not pop.any():
                break
            k -= pop
        k += 1
        v[rows, k] = q
        z[rows, k] = s
        z[rows, k + 1] = np.inf

    out = np.empty((n_rows, n), dtype=np.int64)
    k[:] = 0
    for q in range(n):
        while True:
            advance = z[rows, k + 1] < q
            if not advance.any():
                break
            k += advance
        vk = v[rows, k]
        out[:, q] = (q - vk) ** 2 + f[rows, vk]
    return out


def distance_transform(boundary: np.ndarray, backend: str = "envelope") -> Field:
    """
    Exact Euclidean distance from each pixel center to the nearest boundary pixel center.

    Without any boundary pixel every entry is `no_boundary_distance(H, W)`.
    """
    boundary = np.asarray(boundary, dtype=bool)
    if boundary.ndim != 2:
        raise RangeError(f"boundary must be a 2-D mask, got shape {boundary.shape}")
    h, w = boundary.shape
    if not boundary.any():
        return Field(np.full((1, h, w), no_boundary_distance(h, w)))
    if backend == "scipy":
        dist = ndimage.distance_transform_edt(~boundary)
    elif backend == "envelope":
        cols = _column_distances(boundary)
        dist = np.sqrt(_lower_envelope_rows(cols**2).astype(np.float64))
    else:
        raise RangeError(f"unknown distance transform backend {backend!r}")
    return Field(dist[None])


def weights_from_distance(distance: np.ndarray, cfg: EDSConfig) -> np.ndarray:
    d = np.asarray(distance, dtype=np.float64)
    w = cfg.w_min + (1.0 - cfg.w_min) * np.exp(-(d**2) / cfg.D**2)
    return np.clip(w, cfg.w_min, 1.0)


def eds_weights_for_boundary(boundary: np.ndarray, cfg: EDSConfig) -> WeightMask:
    boundary = np.asarray(boundary, dtype=bool)
    if not boundary.any():
        # infinite distance everywhere
        return WeightMask(np.full(boundary.shape, cfg.w_min, dtype=np.float64))
    distance = distance_transform(boundary, backend=cfg.backend).values[0]
    return WeightMask(weights_from_distance(distance, cfg))


def eds_weights(idmap: IdMap, cfg: EDSConfig) -> WeightMask:
    """Edge-distance weights of an instance or semantic map."""
    mask = boundary_mask(idmap)
    logger.debug(f"EDS: {int(mask.sum())} boundary pixels on a {idmap.height}x{idmap.width} map")
    return eds_weights_for_boundary(mask, cfg)
