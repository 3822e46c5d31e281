"""Central finite-difference checks of analytic loss gradients."""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from dataclasses_json import DataClassJsonMixin

from .grid import Field
from .losses import LossResult

logger = logging.getLogger("spectrapan")


@dataclass(frozen=True)
class GradCheckResult(DataClassJsonMixin):
    max_abs_error: float
    rel_error: float
    analytic_norm: float
    numeric_norm: float

    def passed(self, tol: float = 1e-5) -> bool:
        return self.rel_error < tol


def numeric_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """(f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every entry of x."""
    x = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(x)
        flat[i] = orig - eps
        lo = fn(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def compare(analytic: np.ndarray, numeric: np.ndarray) -> GradCheckResult:
    """rel_error = |a - n| / max(|a| + |n|, 1e-12), norms taken over all entries."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    a_norm, n_norm = float(np.linalg.norm(a)), float(np.linalg.norm(n))
    diff = a - n
    return GradCheckResult(
        max_abs_error=float(np.abs(diff).max()) if diff.size else 0.0,
        rel_error=float(np.linalg.norm(diff) / max(a_norm + n_norm, 1e-12)),
        analytic_norm=a_norm,
        numeric_norm=n_norm,
    )


def check_gradient(loss_fn: Callable[[Field], LossResult], pred: Field, eps: float = 1e-5) -> GradCheckResult:
    """Compare `loss_fn(pred).gradient` with central differences of `loss_fn(pred).value`."""
    analytic = loss_fn(pred).gradient.values
    numeric = numeric_gradient(lambda x: loss_fn(Field(x)).value, pred.values, eps)
    res = compare(analytic, numeric)
    logger.debug(f"gradient check: rel error {res.rel_error:.3g}, max abs error {res.max_abs_error:.3g}")
    return res
