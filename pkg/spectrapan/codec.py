"""
Label codec: instance maps <-> per-pixel centroid targets.

Every labeled pixel is tagged with the center of mass of its instance,
normalized to [-1, 1] through pixel centers (u = 2 (col + 0.5) / W - 1).
Three target encodings are supported:

- spectral positional embedding: concat(gamma(u), gamma(v)), 4L channels,
  void pixels carry the zero vector
- RGB-direct: ((u + 1) / 2, (v + 1) / 2, 1), void is (0, 0, 0)
- independent u / v classification bins, void gets the extra bin `bins`

Predictions are decoded back to cells of a discretized uv-grid by
nearest-neighbor search, with void competing as an extra candidate.
"""

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from dataclasses_json import DataClassJsonMixin
from scipy.spatial.distance import cdist

from .errors import DegenerateInputError, RangeError, ShapeError
from .grid import VOID_ID, Field, IdMap

logger = logging.getLogger("spectrapan")

# pixels per nearest-neighbor block, keeps the distance matrices small
_DECODE_CHUNK = 1 << 15


@dataclass(frozen=True)
class PEConfig(DataClassJsonMixin):
    L: int = 4
    grid_h: int = 80
    grid_w: int = 80

    def __post_init__(self):
        if self.L < 1:
            raise RangeError(f"number of harmonics must be >= 1, got {self.L}")
        if self.grid_h < 2 or self.grid_w < 2:
            raise RangeError(f"uv-grid must be at least 2x2, got {self.grid_h}x{self.grid_w}")

    @property
    def dim(self) -> int:
        """Embedding size per pixel (4L)."""
        return 4 * self.L


@dataclass(frozen=True)
class Centroid(DataClassJsonMixin):
    u: float
    v: float


def gamma(p, L: int) -> np.ndarray:
    """Sine-cosine lifting of a coordinate: out[2l] = sin(2^l pi p), out[2l+1] = cos(2^l pi p).

    `p` may be a scalar or an array; the harmonics are appended as a last axis.
    """
    p = np.asarray(p, dtype=np.float64)
    angles = p[..., None] * (np.pi * 2.0 ** np.arange(L))
    out = np.empty(p.shape + (2 * L,), dtype=np.float64)
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def normalize_col(col, width: int):
    return 2.0 * (np.asarray(col, dtype=np.float64) + 0.5) / width - 1.0


def normalize_row(row, height: int):
    return 2.0 * (np.asarray(row, dtype=np.float64) + 0.5) / height - 1.0


def centroid_of(pixels: Iterable[tuple[int, int]], height: int, width: int) -> Centroid:
    """Center of mass of a pixel set, in normalized coordinates."""
    pts = np.asarray(list(pixels), dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise DegenerateInputError("centroid of an empty pixel set")
    row, col = pts.mean(axis=0)
    return Centroid(u=float(normalize_col(col, width)), v=float(normalize_row(row, height)))


def label_centroids(idmap: IdMap) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-id centroids in one pass.

    Returns (unique ids, u, v, inverse index of every pixel into the unique ids).
    The void id, when present, gets a centroid too; callers mask it.
    """
    h, w = idmap.shape
    uniq, inverse = np.unique(idmap.ids.ravel(), return_inverse=True)
    rows, cols = np.indices((h, w))
    counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    mean_row = np.bincount(inverse, weights=rows.ravel() + 0.5, minlength=len(uniq)) / counts
    mean_col = np.bincount(inverse, weights=cols.ravel() + 0.5, minlength=len(uniq)) / counts
    u = 2.0 * mean_col / w - 1.0
    v = 2.0 * mean_row / h - 1.0
    return uniq, u, v, inverse


def instance_centroids(idmap: IdMap) -> dict[int, Centroid]:
    """Centroid of every non-void id of the map."""
    uniq, u, v, _ = label_centroids(idmap)
    return {
        int(i): Centroid(float(cu), float(cv))
        for i, cu, cv in zip(uniq, u, v)
        if i != VOID_ID
    }


def instance_areas(idmap: IdMap) -> dict[int, int]:
    uniq, counts = np.unique(idmap.ids, return_counts=True)
    return {int(i): int(c) for i, c in zip(uniq, counts) if i != VOID_ID}


def encode_pe(idmap: IdMap, cfg: PEConfig) -> Field:
    """Positional-embedding targets, 4L x H x W."""
    uniq, u, v, inverse = label_centroids(idmap)
    table = np.concatenate([gamma(u, cfg.L), gamma(v, cfg.L)], axis=1)
    table[uniq == VOID_ID] = 0.0
    per_pixel = table[inverse]  # (H*W, 4L)
    return Field(per_pixel.T.reshape(cfg.dim, idmap.height, idmap.width))


def encode_rgb_direct(idmap: IdMap) -> Field:
    """Direct regression targets: (u, v) rescaled to [0, 1] plus an "is instance" channel."""
    uniq, u, v, inverse = label_centroids(idmap)
    table = np.stack([(u + 1.0) / 2.0, (v + 1.0) / 2.0, np.ones_like(u)], axis=1)
    table[uniq == VOID_ID] = 0.0
    per_pixel = np.clip(table[inverse], 0.0, 1.0)
    return Field(per_pixel.T.reshape(3, idmap.height, idmap.width))


def coordinate_bin(p, bins: int) -> np.ndarray:
    """Uniform bin of [-1, 1]: floor((p + 1) / 2 * bins), clamped to [0, bins - 1]."""
    p = np.asarray(p, dtype=np.float64)
    return np.clip(np.floor((p + 1.0) / 2.0 * bins), 0, bins - 1).astype(np.int64)


def encode_uv_classes(idmap: IdMap, bins: int) -> tuple[IdMap, IdMap]:
    """Per-pixel u and v bin indices of the instance centroid; void pixels get `bins`."""
    if bins < 2:
        raise RangeError(f"need at least 2 bins, got {bins}")
    uniq, u, v, inverse = label_centroids(idmap)
    u_bin = coordinate_bin(u, bins)
    v_bin = coordinate_bin(v, bins)
    is_void = uniq == VOID_ID
    u_bin[is_void] = bins
    v_bin[is_void] = bins
    shape = idmap.shape
    return IdMap(u_bin[inverse].reshape(shape)), IdMap(v_bin[inverse].reshape(shape))


@dataclass(frozen=True, eq=False)
class UVGrid:
    """Candidate centroid positions at the cell centers of a uniform grid over [-1, 1]^2.

    Candidate index = row * grid_w + col; the void candidate (zero vector) is
    ordered last, at index grid_h * grid_w.
    """

    L: int
    grid_h: int
    grid_w: int
    u: np.ndarray
    v: np.ndarray
    u_codes: np.ndarray
    v_codes: np.ndarray

    @property
    def dim(self) -> int:
        return 4 * self.L

    @property
    def num_cells(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def void_index(self) -> int:
        return self.num_cells

    @property
    def candidates(self) -> np.ndarray:
        """All encodings, (grid_h * grid_w + 1) x 4L, void last."""
        uu = np.broadcast_to(self.u_codes[None], (self.grid_h, self.grid_w, 2 * self.L))
        vv = np.broadcast_to(self.v_codes[:, None], (self.grid_h, self.grid_w, 2 * self.L))
        cells = np.concatenate([uu, vv], axis=-1).reshape(self.num_cells, self.dim)
        return np.vstack([cells, np.zeros((1, self.dim))])

    def cell_rc(self, index) -> tuple[np.ndarray, np.ndarray]:
        index = np.asarray(index)
        return index // self.grid_w, index % self.grid_w

    def cell_center(self, index: int) -> Centroid:
        if not 0 <= index < self.num_cells:
            raise RangeError(f"cell {index} outside a {self.grid_h}x{self.grid_w} grid")
        r, c = self.cell_rc(index)
        return Centroid(float(self.u[c]), float(self.v[r]))

    def quantize(self, centroid: Centroid) -> int:
        col = int(coordinate_bin(centroid.u, self.grid_w))
        row = int(coordinate_bin(centroid.v, self.grid_h))
        return row * self.grid_w + col


def cell_centers(n: int) -> np.ndarray:
    return -1.0 + (2.0 * np.arange(n) + 1.0) / n


def build_uv_grid(cfg: PEConfig) -> UVGrid:
    u = cell_centers(cfg.grid_w)
    v = cell_centers(cfg.grid_h)
    return UVGrid(
        L=cfg.L,
        grid_h=cfg.grid_h,
        grid_w=cfg.grid_w,
        u=u,
        v=v,
        u_codes=gamma(u, cfg.L),
        v_codes=gamma(v, cfg.L),
    )


@dataclass(frozen=True, eq=False)
class DecodedCells:
    """Nearest-candidate assignment of every pixel.

    `cells` holds candidate indices (the void index on void pixels), `void`
    flags void pixels and `distance` the winning distance.
    """

    cells: np.ndarray
    void: np.ndarray
    distance: np.ndarray
    void_index: int
    grid_w: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def as_idmap(self) -> IdMap:
        """Cell index + 1 on labeled pixels, 0 on void."""
        return IdMap(np.where(self.void, VOID_ID, self.cells + 1))

    @classmethod
    def from_idmap(cls, idmap: IdMap, grid: UVGrid) -> "DecodedCells":
        """Inverse of `as_idmap`; the distance plane is left at zero."""
        ids = idmap.ids
        if ids.size and ids.max() > grid.num_cells:
            raise RangeError(f"cell id {int(ids.max())} outside a {grid.grid_h}x{grid.grid_w} grid")
        void = ids == VOID_ID
        cells = np.where(void, grid.void_index, ids - 1)
        return cls(cells, void, np.zeros(ids.shape), grid.void_index, grid.grid_w)


def decode_pe(pred: Field, grid: UVGrid) -> DecodedCells:
    """Assign each pixel to the candidate minimizing the two-half distance.

    The distance to cell (r, c) is 0.5 * (|p_u - gamma(u_c)| + |p_v - gamma(v_r)|),
    so the u and v searches separate; ties go to the lowest candidate index and
    void wins only when strictly closer.
    """
    if pred.channels != grid.dim:
        raise ShapeError(f"prediction has {pred.channels} channels, grid expects {grid.dim}")
    half = 2 * grid.L
    flat = pred.values.reshape(grid.dim, -1).T
    n = flat.shape[0]
    cells = np.empty(n, dtype=np.int64)
    void = np.empty(n, dtype=bool)
    distance = np.empty(n, dtype=np.float64)
    for start in range(0, n, _DECODE_CHUNK):
        block = flat[start : start + _DECODE_CHUNK]
        du = cdist(block[:, :half], grid.u_codes)
        dv = cdist(block[:, half:], grid.v_codes)
        cu = du.argmin(axis=1)
        cv = dv.argmin(axis=1)
        idx = np.arange(len(block))
        best = 0.5 * (du[idx, cu] + dv[idx, cv])
        void_d = 0.5 * (np.linalg.norm(block[:, :half], axis=1) + np.linalg.norm(block[:, half:], axis=1))
        is_void = void_d < best
        sl = slice(start, start + len(block))
        cells[sl] = np.where(is_void, grid.void_index, cv * grid.grid_w + cu)
        void[sl] = is_void
        distance[sl] = np.where(is_void, void_d, best)
    shape = (pred.height, pred.width)
    return DecodedCells(cells.reshape(shape), void.reshape(shape), distance.reshape(shape), grid.void_index, grid.grid_w)


def decode_rgb_direct(pred: Field, grid: UVGrid) -> DecodedCells:
    """Decode RGB-direct predictions: void iff the instance channel is below 0.5."""
    if pred.channels != 3:
        raise ShapeError(f"RGB-direct prediction needs 3 channels, got {pred.channels}")
    u = 2.0 * pred.values[0] - 1.0
    v = 2.0 * pred.values[1] - 1.0
    col = coordinate_bin(u, grid.grid_w)
    row = coordinate_bin(v, grid.grid_h)
    void = pred.values[2] < 0.5
    cells = np.where(void, grid.void_index, row * grid.grid_w + col)
    distance = np.hypot(u - grid.u[col], v - grid.v[row])
    return DecodedCells(cells, void, np.where(void, 0.0, distance), grid.void_index, grid.grid_w)


def decode_uv_classes(u_logits: Field, v_logits: Field, grid: UVGrid) -> DecodedCells:
    """Decode independent u / v classification logits (last channel is the void bin)."""
    if u_logits.channels != grid.grid_w + 1 or v_logits.channels != grid.grid_h + 1:
        raise ShapeError(
            f"uv logits need {grid.grid_w + 1} and {grid.grid_h + 1} channels, "
            f"got {u_logits.channels} and {v_logits.channels}"
        )
    col = u_logits.values.argmax(axis=0)
    row = v_logits.values.argmax(axis=0)
    void = (col == grid.grid_w) | (row == grid.grid_h)
    cells = np.where(void, grid.void_index, row * grid.grid_w + col)
    return DecodedCells(cells, void, np.zeros(cells.shape), grid.void_index, grid.grid_w)


def contrast_ratio(points: int, L: int | None = None) -> float:
    """Largest pairwise over smallest adjacent distance among `points` 1-D cell centers.

    With `L=None` distances are taken on the raw coordinates, otherwise between
    their gamma embeddings.
    """
    if points < 2:
        raise RangeError(f"need at least 2 grid points, got {points}")
    if L is None:
        # integer cell units; the ratio is invariant to the affine map onto [-1, 1]
        return float(points - 1)
    codes = gamma(cell_centers(points), L)
    longest = cdist(codes, codes).max()
    shortest = np.linalg.norm(np.diff(codes, axis=0), axis=1).min()
    return float(longest / shortest)
