"""
Cross-assignment loss at instance borders.

For every pixel that touches another labeled instance, the loss it would incur
if it were predicted with the neighbor's target is compared against the
distance between the two centroids, 0.5 * (|du| + |dv|). With direct
coordinates the two coincide; the spectral embedding flattens the spread.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from dataclasses_json import DataClassJsonMixin, config
from scipy import stats

from ..codec import gamma, label_centroids
from ..errors import DegenerateInputError, RangeError
from ..grid import VOID_ID, IdMap
from .scenes import loss_scale_suite

logger = logging.getLogger("spectrapan")

_NEIGHBORS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def _skip(_):
    return True


@dataclass
class LossScaleReport(DataClassJsonMixin):
    encoding: str
    n_records: int
    mean_loss: float
    cv: float
    correlation: float
    rows: np.ndarray = field(default=None, metadata=config(exclude=_skip))
    cols: np.ndarray = field(default=None, metadata=config(exclude=_skip))
    label: np.ndarray = field(default=None, metadata=config(exclude=_skip))
    neighbor: np.ndarray = field(default=None, metadata=config(exclude=_skip))
    distance: np.ndarray = field(default=None, metadata=config(exclude=_skip))
    loss: np.ndarray = field(default=None, metadata=config(exclude=_skip))

    def to_dataframe(self) -> pd.DataFrame:
        """One row per (border pixel, neighboring instance)."""
        return pd.DataFrame(
            {
                "row": self.rows,
                "col": self.cols,
                "label": self.label,
                "neighbor": self.neighbor,
                "centroid_distance": self.distance,
                "loss": self.loss,
            }
        )


def _parse_encoding(encoding: str | int) -> int | None:
    if encoding == "direct":
        return None
    L = int(str(encoding).removeprefix("pe"))
    if L < 1:
        raise RangeError(f"number of harmonics must be >= 1, got {L}")
    return L


def border_pairs(instances: IdMap) -> np.ndarray:
    """Unique (flat pixel index, own label, neighbor label) triples across labeled borders."""
    ids = instances.ids
    h, w = ids.shape
    flat = np.arange(h * w).reshape(h, w)
    found = []
    for dr, dc in _NEIGHBORS:
        src = np.s_[max(dr, 0) : h + min(dr, 0), max(dc, 0) : w + min(dc, 0)]
        dst = np.s_[max(-dr, 0) : h + min(-dr, 0), max(-dc, 0) : w + min(-dc, 0)]
        a, b = ids[dst], ids[src]
        hit = (a != b) & (a != VOID_ID) & (b != VOID_ID)
        found.append(np.stack([flat[dst][hit], a[hit], b[hit]], axis=1))
    triples = np.concatenate(found)
    return np.unique(triples, axis=0) if len(triples) else triples


def cv_of(values: np.ndarray) -> float:
    """Coefficient of variation std / mean (population std); NaN for a zero mean."""
    mean = values.mean()
    return float(values.std() / mean) if mean > 0 else float("nan")


def correlation_of(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    if np.array_equal(x, y):
        return 1.0
    return float(stats.pearsonr(x, y)[0])


def loss_scale_analysis(instances: IdMap, encoding: str | int = 4) -> LossScaleReport:
    """`encoding` is "direct" or the number of harmonics L of the spectral embedding."""
    L = _parse_encoding(encoding)
    triples = border_pairs(instances)
    if len(triples) == 0:
        raise DegenerateInputError("no border between two labeled instances")

    uniq, u, v, _ = label_centroids(instances)
    index = {int(k): i for i, k in enumerate(uniq)}
    ia = np.array([index[int(a)] for a in triples[:, 1]])
    ib = np.array([index[int(b)] for b in triples[:, 2]])
    du, dv = u[ia] - u[ib], v[ia] - v[ib]
    distance = 0.5 * (np.abs(du) + np.abs(dv))
    if L is None:
        loss = distance
    else:
        gu, gv = gamma(u, L), gamma(v, L)
        loss = 0.5 * (np.linalg.norm(gu[ia] - gu[ib], axis=1) + np.linalg.norm(gv[ia] - gv[ib], axis=1))

    rows, cols = np.divmod(triples[:, 0], instances.width)
    name = "direct" if L is None else f"pe{L}"
    report = LossScaleReport(
        encoding=name,
        n_records=len(triples),
        mean_loss=float(loss.mean()),
        cv=cv_of(loss),
        correlation=correlation_of(distance, loss),
        rows=rows,
        cols=cols,
        label=triples[:, 1],
        neighbor=triples[:, 2],
        distance=distance,
        loss=loss,
    )
    logger.info(f"loss scale [{name}]: {report.n_records} records, cv {report.cv:.4f}, corr {report.correlation:.4f}")
    return report


@dataclass
class SuiteRow(DataClassJsonMixin):
    scene: str
    instances: int
    direct_cv: float
    pe_cv: float
    direct_correlation: float
    pe_correlation: float


def run_loss_scale_suite(L: int = 4, workers: int = 1) -> list[SuiteRow]:
    """Both encodings on every fixed suite scene; rows keep the suite order."""

    def one(item: tuple[str, IdMap]) -> SuiteRow:
        name, inst = item
        direct = loss_scale_analysis(inst, "direct")
        pe = loss_scale_analysis(inst, L)
        return SuiteRow(name, len(inst.labels()), direct.cv, pe.cv, direct.correlation, pe.correlation)

    suite = loss_scale_suite()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, suite))
    return [one(item) for item in suite]


def suite_dataframe(rows: list[SuiteRow]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in rows])
