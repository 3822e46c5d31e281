"""
Grid types shared by every stage of the toolkit, plus their on-disk formats.

- IdMap: H x W integer ids, 0 is void
- Field: C x H x W finite reals (targets, predictions, embeddings, disparity)
- WeightMask: H x W reals in [0, 1]
- panoptic PNG (id = R + 256 G + 65536 B) and the raw field container
"""

import io
import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from dataclasses_json import DataClassJsonMixin
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, RangeError, ShapeError

logger = logging.getLogger("spectrapan")

VOID_ID = 0
MAX_PNG_ID = 1 << 24

FIELD_MAGIC = b"SPFIELD\x00"
FIELD_VERSION = 1
# magic, version, channels, height, width
_FIELD_HEADER = struct.Struct("<8sIIII")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class IdMap:
    """Row-major grid of non-negative integer ids."""

    ids: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids)
        if ids.ndim != 2:
            raise ShapeError(f"IdMap needs a 2-D array, got shape {ids.shape}")
        if ids.size and not np.issubdtype(ids.dtype, np.integer):
            if not np.all(np.equal(np.mod(ids, 1), 0)):
                raise RangeError("IdMap ids must be integers")
        ids = ids.astype(np.int64)
        if ids.size and ids.min() < 0:
            raise RangeError("IdMap ids must be non-negative")
        object.__setattr__(self, "ids", _frozen(ids))

    @classmethod
    def zeros(cls, height: int, width: int) -> "IdMap":
        return cls(np.zeros((height, width), dtype=np.int64))

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.ids.shape

    def labels(self) -> np.ndarray:
        """Sorted non-void ids present in the map."""
        present = np.unique(self.ids)
        return present[present != VOID_ID]

    def __eq__(self, other) -> bool:
        return isinstance(other, IdMap) and np.array_equal(self.ids, other.ids)

    def __repr__(self) -> str:
        return f"IdMap({self.height}x{self.width}, {len(self.labels())} labels)"


@dataclass(frozen=True, eq=False)
class Field:
    """Channel-major C x H x W grid of finite reals."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ShapeError(f"Field needs a C x H x W array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise RangeError("Field values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_plane(cls, plane: np.ndarray) -> "Field":
        """Wrap a single H x W plane as a 1-channel field."""
        return cls(np.asarray(plane, dtype=np.float64)[None])

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def __eq__(self, other) -> bool:
        return isinstance(other, Field) and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"Field({self.channels}x{self.height}x{self.width})"


@dataclass(frozen=True, eq=False)
class WeightMask:
    """Per-pixel loss weights, every entry in [0, 1]."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 2:
            raise ShapeError(f"WeightMask needs a 2-D array, got shape {weights.shape}")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0) or np.any(weights > 1):
            raise RangeError("weights must lie in [0, 1]")
        object.__setattr__(self, "weights", _frozen(weights))

    @classmethod
    def uniform(cls, height: int, width: int, value: float = 1.0) -> "WeightMask":
        return cls(np.full((height, width), value, dtype=np.float64))

    @property
    def height(self) -> int:
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def as_field(self) -> Field:
        return Field.from_plane(self.weights)

    def __eq__(self, other) -> bool:
        return isinstance(other, WeightMask) and np.array_equal(self.weights, other.weights)


@dataclass(frozen=True)
class Category(DataClassJsonMixin):
    id: int
    name: str
    is_thing: bool


@dataclass
class CategoryTable(DataClassJsonMixin):
    """Minimal category table: id, name and the thing/stuff flag."""

    categories: list[Category] = field(default_factory=list)

    def __post_init__(self):
        self._by_id = {c.id: c for c in self.categories}
        if len(self._by_id) != len(self.categories):
            raise FormatError("duplicate category ids")

    @classmethod
    def from_flags(cls, flags: dict[int, bool]) -> "CategoryTable":
        return cls([Category(int(k), f"class_{k}", bool(v)) for k, v in sorted(flags.items())])

    @classmethod
    def from_json(cls, data: str | bytes) -> "CategoryTable":
        """Parse either a bare list or a COCO-style {"categories": [...]} object."""
        try:
            obj = json.loads(data)
        except json.JSONDecodeError as e:
            raise FormatError(f"category table is not valid JSON: {e}") from e
        if isinstance(obj, dict):
            obj = obj.get("categories")
        if not isinstance(obj, list):
            raise FormatError("category table must be a list of categories")
        cats = []
        for entry in obj:
            try:
                cats.append(
                    Category(
                        id=int(entry["id"]),
                        name=str(entry.get("name", f"class_{entry['id']}")),
                        is_thing=bool(entry.get("isthing", entry.get("is_thing", False))),
                    )
                )
            except (KeyError, TypeError, ValueError) as e:
                raise FormatError(f"bad category entry {entry!r}") from e
        return cls(cats)

    def to_json_list(self) -> list[dict]:
        return [{"id": c.id, "name": c.name, "isthing": int(c.is_thing)} for c in self.categories]

    def __contains__(self, category_id: int) -> bool:
        return int(category_id) in self._by_id

    def __iter__(self):
        return iter(self.categories)

    def __len__(self) -> int:
        return len(self.categories)

    def is_thing(self, category_id: int) -> bool:
        cat = self._by_id.get(int(category_id))
        return bool(cat and cat.is_thing)

    def is_stuff(self, category_id: int) -> bool:
        cat = self._by_id.get(int(category_id))
        return bool(cat and not cat.is_thing)

    @property
    def thing_ids(self) -> list[int]:
        return [c.id for c in self.categories if c.is_thing]

    @property
    def stuff_ids(self) -> list[int]:
        return [c.id for c in self.categories if not c.is_thing]


def rgb2id(rgb: np.ndarray) -> np.ndarray:
    rgb = rgb.astype(np.int64)
    return rgb[..., 0] + 256 * rgb[..., 1] + 65536 * rgb[..., 2]


def id2rgb(ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    rgb = np.stack([ids & 0xFF, (ids >> 8) & 0xFF, (ids >> 16) & 0xFF], axis=-1)
    return rgb.astype(np.uint8)


def read_panoptic_png(data: bytes) -> IdMap:
    """Decode an 8-bit RGB panoptic PNG into an IdMap."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            fmt, mode = img.format, img.mode
            rgb = np.asarray(img)
    except (UnidentifiedImageError, OSError, SyntaxError, EOFError) as e:
        raise FormatError(f"not a readable PNG: {e}") from e
    if fmt != "PNG":
        raise FormatError(f"expected a PNG image, got {fmt}")
    if mode != "RGB":
        raise FormatError(f"expected an 8-bit RGB PNG, got mode {mode}")
    return IdMap(rgb2id(rgb))


def write_panoptic_png(idmap: IdMap) -> bytes:
    """Encode an IdMap as an RGB PNG. Ids must stay below 2**24."""
    if idmap.ids.size and idmap.ids.max() >= MAX_PNG_ID:
        raise RangeError(f"id {int(idmap.ids.max())} does not fit in 24 bits")
    buf = io.BytesIO()
    Image.fromarray(id2rgb(idmap.ids)).save(buf, format="PNG")
    return buf.getvalue()


def write_field(f: Field) -> bytes:
    """Serialize a Field into the raw container (little-endian float32 payload)."""
    f32_max = np.finfo(np.float32).max
    if f.values.size and np.abs(f.values).max() > f32_max:
        raise RangeError("field values overflow float32")
    header = _FIELD_HEADER.pack(FIELD_MAGIC, FIELD_VERSION, *f.shape)
    return header + f.values.astype("<f4").tobytes(order="C")


def read_field(data: bytes) -> Field:
    if len(data) < _FIELD_HEADER.size:
        raise FormatError("truncated field header")
    magic, version, c, h, w = _FIELD_HEADER.unpack_from(data)
    if magic != FIELD_MAGIC:
        raise FormatError(f"bad field magic {magic!r}")
    if version != FIELD_VERSION:
        raise FormatError(f"unsupported field version {version}")
    if min(c, h, w) < 1:
        raise FormatError(f"invalid field dimensions {c}x{h}x{w}")
    payload = memoryview(data)[_FIELD_HEADER.size :]
    expected = c * h * w * 4
    if len(payload) < expected:
        raise FormatError(f"truncated payload: {len(payload)} of {expected} bytes")
    if len(payload) > expected:
        raise FormatError(f"{len(payload) - expected} trailing bytes after payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(c, h, w).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise FormatError("field payload holds non-finite values")
    return Field(values)


def check_same_hw(*items: IdMap | Field | WeightMask | None) -> tuple[int, int]:
    """Return the common (H, W) of grids, raising ShapeError when they differ."""
    dims = set()
    for it in items:
        if it is None:
            continue
        dims.add((it.height, it.width))
    if len(dims) > 1:
        raise ShapeError(f"grid dimensions differ: {sorted(dims)}")
    if not dims:
        raise ShapeError("no grid to take dimensions from")
    return dims.pop()
