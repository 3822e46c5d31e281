"""
Synthetic scenes: rasterized circles and rectangles on a void (or stuff) background.

Shapes are drawn in order, later shapes occlude earlier ones. Shape i gets
instance id i + 1. Pixel (row, col) is covered by a circle when its center
(row + 0.5, col + 0.5) lies within the radius.
"""

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from dataclasses_json import DataClassJsonMixin

from ..codec import PEConfig, build_uv_grid, instance_centroids
from ..errors import SceneError
from ..grid import VOID_ID, CategoryTable, IdMap

logger = logging.getLogger("spectrapan")

# semantic ids used by the generated suites
BACKGROUND_STUFF = 1
THING_CLASSES = (2, 3)


def default_categories() -> CategoryTable:
    return CategoryTable.from_flags({BACKGROUND_STUFF: False, **{c: True for c in THING_CLASSES}})


@dataclass(frozen=True)
class Shape(DataClassJsonMixin):
    """circle: params = (center_row, center_col, radius); rectangle: params = (top, left, height, width)."""

    kind: Literal["circle", "rectangle"]
    params: tuple[float, ...]
    class_id: int

    @classmethod
    def circle(cls, row: float, col: float, radius: float, class_id: int) -> "Shape":
        return cls("circle", (float(row), float(col), float(radius)), class_id)

    @classmethod
    def rectangle(cls, top: int, left: int, height: int, width: int, class_id: int) -> "Shape":
        return cls("rectangle", (top, left, height, width), class_id)

    def mask(self, height: int, width: int) -> np.ndarray:
        if self.kind == "circle":
            cy, cx, r = self.params
            if r <= 0:
                raise SceneError(f"circle radius must be positive, got {r}")
            if cy - r < 0 or cx - r < 0 or cy + r > height or cx + r > width:
                raise SceneError(f"circle {self.params} leaves the {height}x{width} image")
            rows, cols = np.ogrid[:height, :width]
            return (rows + 0.5 - cy) ** 2 + (cols + 0.5 - cx) ** 2 <= r**2
        if self.kind == "rectangle":
            top, left, h, w = (int(p) for p in self.params)
            if h < 1 or w < 1:
                raise SceneError(f"rectangle {self.params} is empty")
            if top < 0 or left < 0 or top + h > height or left + w > width:
                raise SceneError(f"rectangle {self.params} leaves the {height}x{width} image")
            m = np.zeros((height, width), dtype=bool)
            m[top : top + h, left : left + w] = True
            return m
        raise SceneError(f"unknown shape kind {self.kind!r}")


@dataclass(frozen=True)
class SceneSpec(DataClassJsonMixin):
    height: int
    width: int
    shapes: tuple[Shape, ...] = ()
    seed: int = 0
    void_background: bool = True
    background_class: int = BACKGROUND_STUFF
    name: str = ""

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise SceneError(f"scene must be at least 1x1, got {self.height}x{self.width}")


def generate_scene(spec: SceneSpec) -> tuple[IdMap, IdMap]:
    """Rasterize a scene into (instances, semantics)."""
    instances = np.zeros((spec.height, spec.width), dtype=np.int64)
    background = VOID_ID if spec.void_background else spec.background_class
    semantics = np.full((spec.height, spec.width), background, dtype=np.int64)
    for i, shape in enumerate(spec.shapes):
        m = shape.mask(spec.height, spec.width)
        instances[m] = i + 1
        semantics[m] = shape.class_id
    return IdMap(instances), IdMap(semantics)


def random_scene(
    seed: int,
    height: int = 64,
    width: int = 64,
    max_shapes: int = 6,
    void_background: bool = True,
) -> SceneSpec:
    """Random circles and rectangles of thing classes; shapes may occlude each other."""
    rng = np.random.default_rng(seed)
    shapes = []
    for _ in range(int(rng.integers(1, max_shapes + 1))):
        cls = int(rng.choice(THING_CLASSES))
        if rng.random() < 0.5:
            r = float(rng.uniform(2, min(height, width) / 4))
            cy = float(rng.uniform(r, height - r))
            cx = float(rng.uniform(r, width - r))
            shapes.append(Shape.circle(cy, cx, r, cls))
        else:
            h = int(rng.integers(1, height // 2 + 1))
            w = int(rng.integers(1, width // 2 + 1))
            shapes.append(Shape.rectangle(int(rng.integers(0, height - h + 1)), int(rng.integers(0, width - w + 1)), h, w, cls))
    return SceneSpec(height, width, tuple(shapes), seed=seed, void_background=void_background, name=f"random-{seed}")


def roundtrip_scene(
    seed: int,
    height: int = 64,
    width: int = 64,
    pe: PEConfig = PEConfig(),
    max_instances: int = 5,
    merge_radius: float = 1.5,
    min_side: int = 6,
    max_side: int = 14,
    border_cells: int = 2,
    attempts: int = 200,
) -> SceneSpec:
    """
    Non-overlapping rectangles on a stuff background whose centroids fall in
    distinct uv-grid cells, pairwise more than merge_radius + 2 cells apart and
    at least `border_cells` away from the grid border.
    """
    rng = np.random.default_rng(seed)
    grid = build_uv_grid(pe)
    occupied = np.zeros((height, width), dtype=bool)
    shapes: list[Shape] = []
    cells: list[tuple[int, int]] = []
    for _ in range(attempts):
        if len(shapes) == max_instances:
            break
        h, w = (int(x) for x in rng.integers(min_side, max_side + 1, size=2))
        if h > height or w > width:
            continue
        top = int(rng.integers(0, height - h + 1))
        left = int(rng.integers(0, width - w + 1))
        shape = Shape.rectangle(top, left, h, w, int(rng.choice(THING_CLASSES)))
        m = shape.mask(height, width)
        if (m & occupied).any():
            continue
        c = instance_centroids(IdMap(m.astype(np.int64)))[1]
        r, col = (int(x) for x in grid.cell_rc(grid.quantize(c)))
        if not (border_cells <= r < pe.grid_h - border_cells and border_cells <= col < pe.grid_w - border_cells):
            continue
        if any(np.hypot(r - r2, col - c2) <= merge_radius + 2 for r2, c2 in cells):
            continue
        occupied |= m
        shapes.append(shape)
        cells.append((r, col))
    if not shapes:
        raise SceneError(f"could not place any instance for seed {seed}")
    return SceneSpec(height, width, tuple(shapes), seed=seed, void_background=False, name=f"roundtrip-{seed}")


def _strips(widths: list[int], height: int, vertical: bool) -> np.ndarray:
    ids = np.repeat(np.arange(1, len(widths) + 1), widths)
    return np.tile(ids, (height, 1)) if vertical else np.tile(ids[:, None], (1, height))


def loss_scale_suite() -> list[tuple[str, IdMap]]:
    """Fixed scenes of adjacent instances with unequal sizes, every pixel labeled."""
    rows = np.repeat([0, 1], [20, 44])
    cols = np.repeat([0, 1, 2], [8, 16, 40])
    tiles = rows[:, None] * 3 + cols[None, :] + 1
    return [
        ("vertical-strips", IdMap(_strips([4, 4, 8, 16, 32], 64, vertical=True))),
        ("horizontal-strips", IdMap(_strips([6, 10, 16, 32], 64, vertical=False))),
        ("tiling", IdMap(tiles)),
        ("uneven-strips", IdMap(_strips([4, 16, 8, 36], 64, vertical=True))),
    ]


def toy_scene(seed: int = 0, size: int = 256) -> SceneSpec:
    """One 48x48 square and a cluster of eight small squares on void.

    The small squares alternate between 4x4 and 3x3 on a 16-pixel pitch and
    jitter with the seed.
    """
    rng = np.random.default_rng(seed)
    big = [Shape.rectangle(24, 24, 48, 48, THING_CLASSES[0])]
    small = []
    for i, top in enumerate((150, 180)):
        for j, left in enumerate((130, 146, 162, 178)):
            side = 4 if (i + j) % 2 == 0 else 3
            dt, dl = (int(x) for x in rng.integers(-2, 3, size=2))
            small.append(Shape.rectangle(top + dt, left + dl, side, side, THING_CLASSES[1]))
    return SceneSpec(size, size, tuple(big + small), seed=seed, name=f"toy-{seed}")


def toy_suite(seed: int = 0, count: int = 2) -> list[SceneSpec]:
    return [toy_scene(seed + k) for k in range(count)]


@dataclass
class SceneSummary(DataClassJsonMixin):
    name: str
    height: int
    width: int
    instances: int
    areas: list[int] = field(default_factory=list)


def summarize(spec: SceneSpec) -> SceneSummary:
    instances, _ = generate_scene(spec)
    _, counts = np.unique(instances.ids[instances.ids != VOID_ID], return_counts=True)
    return SceneSummary(spec.name, spec.height, spec.width, len(counts), counts.tolist())
