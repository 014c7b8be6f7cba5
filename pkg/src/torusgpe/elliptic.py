"""Complete elliptic integrals and Jacobi elliptic functions.

K and E come from the arithmetic-geometric mean, (sn, cn, dn) from the
descending Landen recurrence on the AGM sequence.  Everything is vectorised
over the argument ``z``; the modulus is a scalar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidModulus, MassTooSmall

TWO_PI_SQ = 2.0 * math.pi**2
_AGM_TOL = 1e-17
_AGM_MAX = 64


@dataclass(frozen=True)
class EllipticModulus:
    """Modulus k in the open interval (0, 1)."""

    k: float

    def __post_init__(self):
        k = float(self.k)
        if not (0.0 < k < 1.0) or not math.isfinite(k):
            raise InvalidModulus(f"modulus must lie in (0, 1), got {self.k!r}")
        object.__setattr__(self, "k", k)

    @property
    def kp(self) -> float:
        """Complementary modulus sqrt(1 - k^2), computed without cancellation."""
        return math.sqrt((1.0 - self.k) * (1.0 + self.k))


def _as_modulus(k) -> EllipticModulus:
    return k if isinstance(k, EllipticModulus) else EllipticModulus(k)


def _agm_sequence(k: float):
    """Return lists (a_n, c_n) of the AGM started at (1, k')."""
    kp = math.sqrt((1.0 - k) * (1.0 + k))
    a, b, c = 1.0, kp, k
    a_seq, c_seq = [a], [c]
    for _ in range(_AGM_MAX):
        if abs(c) <= _AGM_TOL * a:
            break
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        a_seq.append(a)
        c_seq.append(c)
    return a_seq, c_seq


def completeK(k) -> float:
    """Complete elliptic integral of the first kind K(k)."""
    a_seq, _ = _agm_sequence(_as_modulus(k).k)
    return math.pi / (2.0 * a_seq[-1])


def completeE(k) -> float:
    """Complete elliptic integral of the second kind E(k)."""
    mod = _as_modulus(k)
    a_seq, c_seq = _agm_sequence(mod.k)
    s = sum(2.0 ** (n - 1) * c * c for n, c in enumerate(c_seq))
    return math.pi / (2.0 * a_seq[-1]) * (1.0 - s)


def completeKE(k) -> tuple[float, float]:
    """Both integrals from one AGM run."""
    mod = _as_modulus(k)
    a_seq, c_seq = _agm_sequence(mod.k)
    K = math.pi / (2.0 * a_seq[-1])
    s = sum(2.0 ** (n - 1) * c * c for n, c in enumerate(c_seq))
    return K, K * (1.0 - s)


def jacobi(z, k):
    """Jacobi elliptic functions (sn, cn, dn) at ``z`` for modulus ``k``.

    Scalars in give floats out; arrays give arrays of the same shape.
    """
    mod = _as_modulus(k)
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=float)
    a_seq, c_seq = _agm_sequence(mod.k)
    n = len(a_seq) - 1
    phi = (2.0**n) * a_seq[n] * z
    for j in range(n, 0, -1):
        phi = 0.5 * (phi + np.arcsin(c_seq[j] / a_seq[j] * np.sin(phi)))
    sn = np.sin(phi)
    cn = np.cos(phi)
    # k'^2 + k^2 cn^2 avoids the cancellation in 1 - k^2 sn^2 near k = 1
    dn = np.sqrt(mod.kp**2 + (mod.k * cn) ** 2)
    if scalar:
        return float(sn), float(cn), float(dn)
    return sn, cn, dn


def massOfModulus(k) -> float:
    """m(k) = 8 E(k) K(k), the mass of the dnoidal circle state."""
    K, E = completeKE(k)
    return 8.0 * E * K


def invertMass(m: float, k_lo: float = 1e-12, k_hi: float = 1.0 - 1e-12,
               max_iter: int = 200) -> EllipticModulus:
    """Solve 8 E(k) K(k) = m for k by bisection.

    m(k) is strictly increasing from 2 pi^2 (k -> 0) to infinity (k -> 1),
    so the root is unique whenever m > 2 pi^2.
    """
    m = float(m)
    if not m > TWO_PI_SQ:
        raise MassTooSmall(f"dnoidal branch needs m > 2*pi^2 = {TWO_PI_SQ:.15g}, got {m}")
    if massOfModulus(k_hi) < m:
        raise MassTooSmall(f"m = {m} exceeds the representable bracket (k_hi = {k_hi})")
    lo, hi = k_lo, k_hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if massOfModulus(mid) < m:
            lo = mid
        else:
            hi = mid
    # pick the better of the two final bracket ends
    k = lo if abs(massOfModulus(lo) - m) <= abs(massOfModulus(hi) - m) else hi
    return EllipticModulus(k)
