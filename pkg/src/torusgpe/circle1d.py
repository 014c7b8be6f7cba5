"""Cubic NLS on the unit circle: ground states, energy, linearised
spectrum and split-step evolution.

The periodic grid is theta_j = 2 pi j / N.  Derivatives are spectral and
integrals use the rectangle rule, which is exact for trigonometric
polynomials of degree < N.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg

from . import elliptic
from .errors import DegenerateBranch

TWO_PI = 2.0 * math.pi
TWO_PI_SQ = elliptic.TWO_PI_SQ


class Branch(str, Enum):
    CONSTANT = "Constant"
    DNOIDAL = "Dnoidal"


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def theta_grid(N: int) -> np.ndarray:
    return TWO_PI * np.arange(N) / N


def wavenumbers(N: int) -> np.ndarray:
    return np.fft.fftfreq(N, d=1.0 / N)


@dataclass
class CircleField:
    """Complex samples of a function on the circle at N equispaced points."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 1:
            raise ValueError("CircleField needs a 1D array")
        if v.size < 8 or not _is_pow2(v.size):
            raise ValueError(f"N_theta must be a power of two >= 8, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("CircleField values must be finite")
        self.values = v

    @property
    def N_theta(self) -> int:
        return self.values.size

    @property
    def theta(self) -> np.ndarray:
        return theta_grid(self.N_theta)

    def derivative(self, order: int = 1) -> np.ndarray:
        return spectral_derivative(self.values, order)

    def to_csv(self, path) -> None:
        th = self.theta
        with open(path, "w") as fh:
            fh.write("theta,re,im\n")
            for t, z in zip(th, self.values):
                fh.write(f"{t:.17g},{z.real:.17g},{z.imag:.17g}\n")


def spectral_derivative(values: np.ndarray, order: int = 1, axis: int = -1) -> np.ndarray:
    """Fourier derivative along ``axis`` (period 2 pi)."""
    n = values.shape[axis]
    l = wavenumbers(n)
    mult = (1j * l) ** order
    if order % 2 == 1:
        mult[n // 2] = 0.0  # Nyquist mode has no odd derivative
    shape = [1] * values.ndim
    shape[axis] = n
    out = np.fft.ifft(np.fft.fft(values, axis=axis) * mult.reshape(shape), axis=axis)
    if np.isrealobj(values):
        return out.real
    return out


def l2_norm(values: np.ndarray) -> float:
    return math.sqrt(TWO_PI / values.size * float(np.sum(np.abs(values) ** 2)))


def mass1d(w) -> float:
    v = w.values if isinstance(w, CircleField) else np.asarray(w)
    return TWO_PI / v.size * float(np.sum(np.abs(v) ** 2))


def h1_norm(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=complex)
    d = spectral_derivative(values)
    return math.sqrt(l2_norm(values) ** 2 + l2_norm(d) ** 2)


@dataclass(frozen=True)
class DnoidalGroundState:
    """Ground state of the circle NLS at mass m.

    For the constant branch ``k`` is None, ``alpha = sqrt(2 pi / m)`` so that
    the profile is 1/alpha, and ``beta`` is infinite (the k -> 0 limit).
    """

    branch: Branch
    kappa: int
    m: float
    k: float | None
    alpha: float
    beta: float
    mu_inf: float

    def profile(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.branch is Branch.CONSTANT:
            return np.full(theta.shape, math.sqrt(self.m / TWO_PI))
        # centre on theta = 0; dn is even and 2K*beta = 2 pi periodic
        t = np.mod(theta + math.pi, TWO_PI) - math.pi
        _, _, dn = elliptic.jacobi(t / self.beta, self.k)
        return dn / self.alpha

    def sample(self, N_theta: int) -> CircleField:
        return CircleField(self.profile(theta_grid(N_theta)).astype(complex))


def groundState1d(m: float, kappa: int) -> DnoidalGroundState:
    """Circle ground state at mass ``m`` for nonlinearity sign ``kappa``."""
    if not m > 0:
        raise ValueError("mass must be positive")
    if kappa not in (1, -1):
        raise ValueError("kappa must be +1 or -1")
    if kappa == 1 or m <= TWO_PI_SQ:
        mu = -m / TWO_PI**2 if kappa == 1 else m / TWO_PI**2
        return DnoidalGroundState(Branch.CONSTANT, kappa, float(m), None,
                                  math.sqrt(TWO_PI / m), math.inf, mu)
    mod = elliptic.invertMass(m)
    K = elliptic.completeK(mod)
    beta = math.pi / K
    alpha = beta / math.sqrt(4.0 * math.pi)
    mu = (2.0 - mod.k**2) * K**2 / math.pi**2
    return DnoidalGroundState(Branch.DNOIDAL, -1, float(m), mod.k, alpha, beta, mu)


def energy1d(w, kappa: int) -> float:
    """E[w] = 1/2 |w'|^2 + kappa/(8 pi) |w|_4^4 on the circle."""
    v = w.values if isinstance(w, CircleField) else np.asarray(w, dtype=complex)
    h = TWO_PI / v.size
    dw = spectral_derivative(v)
    kin = 0.5 * h * float(np.sum(np.abs(dw) ** 2))
    quart = h * float(np.sum(np.abs(v) ** 4))
    return kin + kappa / (8.0 * math.pi) * quart


def el_residual1d(gs: DnoidalGroundState, N_theta: int) -> np.ndarray:
    """Pointwise residual of -Q'' + kappa/(2 pi) Q^3 + mu Q."""
    q = gs.profile(theta_grid(N_theta))
    return -spectral_derivative(q, 2) + gs.kappa / TWO_PI * q**3 + gs.mu_inf * q


def second_derivative_matrix(N: int) -> np.ndarray:
    """Dense Fourier second-derivative matrix on N equispaced points."""
    l = wavenumbers(N)
    col = np.fft.ifft(-(l**2)).real  # symbol of d^2 is -l^2 (Nyquist kept)
    return scipy.linalg.circulant(col)


def linearized_operator1d(gs: DnoidalGroundState, N_theta: int) -> np.ndarray:
    """Dense matrix of -d^2 + mu + (3 kappa / 2 pi) Q^2 on real perturbations."""
    q = gs.profile(theta_grid(N_theta))
    L = -second_derivative_matrix(N_theta)
    L[np.diag_indices(N_theta)] += gs.mu_inf + 3.0 * gs.kappa / TWO_PI * q**2
    return 0.5 * (L + L.T)


def _check_not_borderline(gs: DnoidalGroundState) -> None:
    if gs.branch is Branch.CONSTANT and gs.kappa == -1 and abs(gs.m - TWO_PI_SQ) <= 1e-12 * TWO_PI_SQ:
        raise DegenerateBranch("m = 2 pi^2 is the bifurcation point; spectrum not defined here")


def linearizedSpectrum1d(gs: DnoidalGroundState, n_eigs: int, N_theta: int):
    """Lowest ``n_eigs`` eigenpairs of the linearised operator, ascending.

    Eigenvectors are normalised in L^2 of the circle.
    """
    _check_not_borderline(gs)
    L = linearized_operator1d(gs, N_theta)
    w, V = scipy.linalg.eigh(L, subset_by_index=[0, n_eigs - 1])
    V = V / math.sqrt(TWO_PI / N_theta)
    return [(float(w[i]), V[:, i]) for i in range(n_eigs)]


def dnoidalEigenvalues(k: float) -> tuple[float, float, float]:
    """Three lowest periodic eigenvalues of -d^2 + (2 - k^2) - 6 dn^2."""
    r = math.sqrt(k**4 - k**2 + 1.0)
    return (k**2 - 2.0) - 2.0 * r, 0.0, (k**2 - 2.0) + 2.0 * r


def coercivityConstant1d(gs: DnoidalGroundState, N_theta: int = 512) -> float:
    """Smallest eigenvalue of the linearised operator on span{Q, Q'}^perp."""
    _check_not_borderline(gs)
    L = linearized_operator1d(gs, N_theta)
    q = gs.profile(theta_grid(N_theta))
    dq = spectral_derivative(q)
    cols = [q]
    if np.linalg.norm(dq) > 1e-10 * np.linalg.norm(q):
        cols.append(dq)
    A = np.stack(cols, axis=1)
    # orthonormal basis of the complement from a full QR
    Qf, _ = np.linalg.qr(A, mode="complete")
    B = Qf[:, A.shape[1]:]
    return float(scipy.linalg.eigvalsh(B.T @ L @ B, subset_by_index=[0, 0])[0])


@dataclass
class Trajectory1D:
    times: np.ndarray
    fields: list = field(default_factory=list)
    mass: np.ndarray | None = None
    energy: np.ndarray | None = None

    @property
    def final(self) -> CircleField:
        return self.fields[-1]


def _step_count(dt: float, T: float) -> int:
    if not (dt > 0 and T >= dt):
        raise ValueError("need 0 < dt <= T")
    return max(1, int(round(T / dt)))


def evolve1d(w0: CircleField, kappa: int, dt: float, T: float,
             record_every: int | None = None) -> Trajectory1D:
    """Strang split-step integration of i w_t = -w'' + kappa/(2 pi)|w|^2 w.

    The number of steps is round(T/dt) and the step is adjusted to land on T.
    """
    n = _step_count(dt, T)
    h = T / n
    if record_every is None:
        record_every = n
    N = w0.N_theta
    lin = np.exp(-1j * wavenumbers(N) ** 2 * h)
    g = kappa / TWO_PI
    w = w0.values.copy()
    times, fields, mass, energy = [0.0], [CircleField(w.copy())], [mass1d(w)], [energy1d(w, kappa)]
    for j in range(1, n + 1):
        w = w * np.exp(-0.5j * g * h * np.abs(w) ** 2)
        w = np.fft.ifft(lin * np.fft.fft(w))
        w = w * np.exp(-0.5j * g * h * np.abs(w) ** 2)
        if j % record_every == 0 or j == n:
            if times[-1] != j * h:
                times.append(j * h)
                fields.append(CircleField(w.copy()))
                mass.append(mass1d(w))
                energy.append(energy1d(w, kappa))
    return Trajectory1D(np.array(times), fields, np.array(mass), np.array(energy))
