"""Transverse trap profiles U(s) on s >= -sqrt(omega) and numerical
checks of their comparison with s^2."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import OutOfDomain

VARIANTS = ("Quadratic", "GaussianRing", "Tabulated")


@dataclass(frozen=True)
class PotentialSpec:
    """Trap profile.  ``samples`` is a pair (s_nodes, U_values) for Tabulated."""

    variant: str
    omega: float
    m_param: float = 2.0
    samples: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown potential variant {self.variant!r}")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.variant == "GaussianRing" and not self.m_param > 0:
            raise ValueError("m_param must be positive")
        if self.variant == "Tabulated":
            if self.samples is None:
                raise ValueError("Tabulated potential needs samples")
            s, u = (np.asarray(a, dtype=float) for a in self.samples)
            if s.ndim != 1 or s.shape != u.shape or s.size < 4 or np.any(np.diff(s) <= 0):
                raise ValueError("samples must be increasing 1D arrays of equal length >= 4")
            if np.any(u < 0):
                raise ValueError("tabulated potential must be nonnegative")
            object.__setattr__(self, "_spline", CubicSpline(s, u))
            object.__setattr__(self, "_range", (s[0], s[-1]))

    @property
    def s_min(self) -> float:
        return -math.sqrt(self.omega)

    def with_omega(self, omega: float) -> "PotentialSpec":
        return PotentialSpec(self.variant, omega, self.m_param, self.samples)


def evalU(spec: PotentialSpec, s):
    """U(s); raises OutOfDomain below -sqrt(omega) or outside a table."""
    scalar = np.ndim(s) == 0
    s = np.asarray(s, dtype=float)
    rw = math.sqrt(spec.omega)
    if np.any(s < -rw * (1.0 + 1e-15)):
        raise OutOfDomain(f"s must be >= -sqrt(omega) = {-rw}")
    if spec.variant == "Quadratic":
        u = s * s
    elif spec.variant == "GaussianRing":
        m = spec.m_param
        r2 = (1.0 + s / rw) ** 2
        # expm1 keeps the O(s^2) cancellation near s = 0 accurate
        u = 0.5 * m * spec.omega * ((r2 - 1.0) + m * np.expm1((1.0 - r2) / m))
    else:
        lo, hi = spec._range
        if np.any(s < lo) or np.any(s > hi):
            raise OutOfDomain(f"tabulated potential defined on [{lo}, {hi}] only")
        u = spec._spline(s)
    return float(u) if scalar else u


@dataclass
class HypothesisReport:
    C1: float
    c_low: float
    c_high: float
    passed: bool
    warning: bool
    grid: np.ndarray

    def as_dict(self) -> dict:
        return {"C1": self.C1, "c_low": self.c_low, "c_high": self.c_high,
                "pass": self.passed, "warning": self.warning,
                "grid": {"s_min": float(self.grid[0]), "s_max": float(self.grid[-1]),
                         "n": int(self.grid.size)}}


def checkHypotheses(spec: PotentialSpec, tol_grid: int = 1025,
                    warn_C1: float = 10.0, window: float | None = None) -> HypothesisReport:
    """Compare U with s^2 on an s-grid over [-sqrt(w), sqrt(w)] (s = 0 dropped).

    ``window`` restricts the grid to |s| <= window.  For GaussianRing
    sqrt(w)|U - s^2|/s^2 ~ |s| near the ring, so C1 stays bounded in omega on
    a fixed window but grows like sqrt(w) on the full one.

    ``warning`` flags a C1 above ``warn_C1``: the profile is comparable to s^2
    but does not approach it at the 1/sqrt(omega) scale.
    """
    if tol_grid < 64:
        raise ValueError("tol_grid must be at least 64")
    rw = math.sqrt(spec.omega)
    half = rw if window is None else min(rw, float(window))
    if not half > 0:
        raise ValueError("window must be positive")
    s = np.linspace(-half, half, int(tol_grid))
    if spec.variant == "Tabulated":
        lo, hi = spec._range
        s = s[(s >= lo) & (s <= hi)]
    s = s[np.abs(s) > 1e-12 * rw]
    u = evalU(spec, s)
    ratio = u / s**2
    C1 = float(np.max(rw * np.abs(u - s**2) / s**2))
    c_low, c_high = float(np.min(ratio)), float(np.max(ratio))
    ok = all(math.isfinite(x) for x in (C1, c_low, c_high)) and c_low > 0
    return HypothesisReport(C1, c_low, c_high, ok, bool(C1 > warn_C1), s)
