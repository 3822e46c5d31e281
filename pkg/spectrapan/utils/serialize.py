import json
import math
from typing import Any, Type, TypeVar

import dataclasses_json
import numpy as np


def to_plain(obj: Any) -> Any:
    """Recursively turn numpy scalars/arrays into Python values; non-finite floats become None."""
    if isinstance(obj, dataclasses_json.DataClassJsonMixin):
        obj = obj.to_dict()
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def dumps_json(obj: Any, indent: int | None = None) -> str:
    """Deterministic JSON: sorted keys, compact separators unless indented."""
    separators = (",", ":") if indent is None else (",", ": ")
    return json.dumps(to_plain(obj), sort_keys=True, indent=indent, separators=separators)


G = TypeVar("G", bound=dataclasses_json.DataClassJsonMixin)


def loads_json(s: str, cls: Type[G] | None = None):
    obj = json.loads(s)
    return cls.from_dict(obj) if cls is not None else obj
