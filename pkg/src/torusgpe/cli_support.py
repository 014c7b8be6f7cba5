"""Rate fitting and sweep verdicts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveValue

BOUNDED_RATIO = 3.0
RATE_TARGET = -0.4
RATE_RESIDUAL = 0.15


def fitRate(omegas, values) -> tuple[float, float, float]:
    """Least-squares slope and intercept of log(value) against log(omega),
    and the RMS of the log misfit."""
    om = np.asarray(omegas, dtype=float)
    va = np.asarray(values, dtype=float)
    if om.size < 3 or om.size != va.size:
        raise ValueError("need at least three (omega, value) pairs")
    if np.any(va <= 0) or np.any(om <= 0):
        raise NonPositiveValue("log fit needs positive values")
    x, y = np.log(om), np.log(va)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = math.sqrt(float(np.mean((y - A @ np.array([slope, icpt])) ** 2)))
    return float(slope), float(icpt), resid


def bounded(values, ratio: float = BOUNDED_RATIO) -> bool:
    """max/min of positive values at most ``ratio``."""
    va = np.asarray(values, dtype=float)
    if np.any(va <= 0):
        return False
    return bool(va.max() / va.min() <= ratio)


def strictly_decreasing(values) -> bool:
    va = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(va) < 0))


def rate_ok(slope: float, resid: float, target: float = RATE_TARGET,
            max_resid: float = RATE_RESIDUAL) -> bool:
    return slope <= target and resid < max_resid


@dataclass
class ConvergenceReport:
    omega_list: list
    metric_name: str
    values: list
    fitted_rate: float | None = None
    fit_residual: float | None = None
    passed: bool = False
    criterion: str = ""
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"omega_list": list(map(float, self.omega_list)), "metric_name": self.metric_name,
                "values": list(map(float, self.values)), "fitted_rate": self.fitted_rate,
                "fit_residual": self.fit_residual, "pass": self.passed,
                "criterion": self.criterion, **self.extra}
