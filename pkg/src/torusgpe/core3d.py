"""Grids, fields, weighted functionals and the truncated transverse
projection for states v(s, z, theta) near the ring.

Layout: ``Field3D.values`` has shape (N_s, N_z, N_theta), theta fastest.
s uses the cell-centred stretched grid of :mod:`transverse`, z a periodic
cell-centred grid with Fourier differentiation, theta a Fourier grid.

Quadrature: sigma * dV in s (midpoint), h_z in z, 2 pi / N_theta in theta.
Because s-nodes sit at cell centres, the first node is half a cell away
from s_min and the 1/sigma weight is finite on every node.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .circle1d import TWO_PI, CircleField, wavenumbers
from .potentials import PotentialSpec
from .transverse import RadialGrid, TransverseEigenResult, solveTransverse

MIN_NZ = 16
MIN_NTHETA = 16


def smoothstep_cutoff(x):
    """chi(x): 0 on [0, 1], 1 on [2, inf), quintic smoothstep between."""
    t = np.clip(np.asarray(x, dtype=float) - 1.0, 0.0, 1.0)
    return t**3 * (t * (6.0 * t - 15.0) + 10.0)


def chi_omega(s, omega: float):
    return smoothstep_cutoff(np.asarray(s, dtype=float) + math.sqrt(omega))


@dataclass(eq=False)
class Grid3D:
    radial: RadialGrid
    z_nodes: np.ndarray
    z_max: float
    N_theta: int

    def __post_init__(self):
        nz = len(self.z_nodes)
        if self.z_max < 8.0:
            raise ValueError("z_max must be at least 8")
        if nz < MIN_NZ:
            raise ValueError(f"N_z must be at least {MIN_NZ}")
        n = self.N_theta
        if n < MIN_NTHETA or n & (n - 1):
            raise ValueError(f"N_theta must be a power of two >= {MIN_NTHETA}")

    @classmethod
    def make(cls, omega: float, N_s: int = 64, N_z: int = 32, N_theta: int = 32,
             s_max: float = 8.0, z_max: float = 8.0, a_core: float = 6.0,
             growth: float = 1.2) -> "Grid3D":
        if s_max < 8.0:
            raise ValueError("s_max must be at least 8")
        radial = RadialGrid.make(omega, N_s, s_max=s_max, a_core=a_core, growth=growth)
        hz = 2.0 * z_max / N_z
        z = -z_max + (np.arange(N_z) + 0.5) * hz
        return cls(radial, z, float(z_max), int(N_theta))

    @property
    def omega(self) -> float:
        return self.radial.omega

    @property
    def N_s(self) -> int:
        return self.radial.N_s

    @property
    def N_z(self) -> int:
        return len(self.z_nodes)

    @property
    def shape(self) -> tuple:
        return (self.N_s, self.N_z, self.N_theta)

    @property
    def h_z(self) -> float:
        return 2.0 * self.z_max / self.N_z

    @property
    def d_theta(self) -> float:
        return TWO_PI / self.N_theta

    @property
    def theta(self) -> np.ndarray:
        return TWO_PI * np.arange(self.N_theta) / self.N_theta

    @cached_property
    def w_sz(self) -> np.ndarray:
        """Weights of sigma ds dz on the (s, z) plane."""
        return np.outer(self.radial.quad_weights, np.full(self.N_z, self.h_z))

    @cached_property
    def w_sz_inv(self) -> np.ndarray:
        """Weights of (1/sigma) ds dz."""
        return np.outer(self.radial.dV / self.radial.sigma, np.full(self.N_z, self.h_z))

    @cached_property
    def w_sz_flat(self) -> np.ndarray:
        """Weights of ds dz (no Jacobian)."""
        return np.outer(self.radial.dV, np.full(self.N_z, self.h_z))

    @cached_property
    def z_second_derivative(self) -> np.ndarray:
        k = 2.0 * math.pi * np.fft.fftfreq(self.N_z, d=self.h_z)
        return scipy.linalg.circulant(np.fft.ifft(-(k**2)).real)

    def metadata(self) -> dict:
        return {"omega": self.omega, "N_s": self.N_s, "N_z": self.N_z, "N_theta": self.N_theta,
                "s_min": self.radial.s_min, "s_max": self.radial.s_max, "z_max": self.z_max,
                "s_faces": self.radial.faces.tolist()}


@dataclass(eq=False)
class Field3D:
    values: np.ndarray
    grid: Grid3D

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    def copy(self) -> "Field3D":
        return Field3D(self.values.copy(), self.grid)


# ---------------------------------------------------------------- norms

def _vals(v):
    return v.values if isinstance(v, Field3D) else v


def massMod(v: Field3D) -> float:
    """Weighted mass: integral of |v|^2 sigma ds dz dtheta."""
    g = v.grid
    return g.d_theta * float(np.sum(np.abs(v.values) ** 2 * g.w_sz[:, :, None]))


def l2_sigma(v: Field3D) -> float:
    return math.sqrt(massMod(v))


def l2_inv_sigma_sq(values: np.ndarray, grid: Grid3D) -> float:
    return grid.d_theta * float(np.sum(np.abs(values) ** 2 * grid.w_sz_inv[:, :, None]))


def l4_sigma_4(values: np.ndarray, grid: Grid3D) -> float:
    return grid.d_theta * float(np.sum(np.abs(values) ** 4 * grid.w_sz[:, :, None]))


def inner_sigma(u: np.ndarray, v: np.ndarray, grid: Grid3D) -> complex:
    return grid.d_theta * complex(np.sum(np.conj(u) * v * grid.w_sz[:, :, None]))


def dtheta(values: np.ndarray, order: int = 1) -> np.ndarray:
    n = values.shape[-1]
    mult = (1j * wavenumbers(n)) ** order
    if order % 2:
        mult[n // 2] = 0.0
    return np.fft.ifft(np.fft.fft(values, axis=-1) * mult, axis=-1)


def theta_seminorm_sq(values: np.ndarray, grid: Grid3D) -> float:
    """|d_theta v|^2 in L^2(1/sigma), computed mode by mode."""
    vh = np.fft.fft(values, axis=-1)
    l2 = wavenumbers(grid.N_theta) ** 2
    dens = np.sum(np.abs(vh) ** 2 * grid.w_sz_inv[:, :, None], axis=(0, 1))
    return grid.d_theta / grid.N_theta * float(np.sum(l2 * dens))


# ---------------------------------------------------------------- transverse model

@dataclass(eq=False)
class ProjectionBasis:
    Phi_omega: np.ndarray
    Phi_tilde: np.ndarray
    norm_chi_phi: float
    grid: Grid3D


class Model3D:
    """Grid plus trap: the solved transverse ground state, Lambda and the
    per-angular-mode eigen-decompositions of the linear operator

        L_l = omega (H_2D - Lambda) + l^2 / sigma^2.
    """

    def __init__(self, grid: Grid3D, spec: PotentialSpec, order: int = 6):
        if abs(spec.omega - grid.omega) > 1e-12 * grid.omega:
            raise ValueError("potential and grid disagree on omega")
        self.grid = grid
        self.spec = spec
        self.order = order
        self.transverse: TransverseEigenResult = solveTransverse(grid.radial, spec, 2, order=order)
        Hz = -grid.z_second_derivative + np.diag(grid.z_nodes**2)
        ez, Vz = np.linalg.eigh(0.5 * (Hz + Hz.T))
        self.ez = ez
        self.Vz = Vz  # orthonormal in the plain dot product
        psi0 = Vz[:, 0] / math.sqrt(grid.h_z)
        self.psi_z0 = psi0 * np.sign(psi0.sum())
        self.lam_s = self.transverse.lam
        self.Lambda = self.lam_s + float(ez[0])
        self.Lambda_prime = min(self.transverse.lam_prime + float(ez[0]), self.lam_s + float(ez[1]))
        self._modes = None

    @property
    def omega(self) -> float:
        return self.grid.omega

    # operators on fields ------------------------------------------------
    def apply_Hs(self, values: np.ndarray) -> np.ndarray:
        """(H_s - lambda_s) acting along axis 0 of an (N_s, ...) array."""
        op = self.transverse.operator
        flat = values.reshape(values.shape[0], -1)
        out = (op.K @ flat) / op.mass[:, None] + (op.U - self.lam_s)[:, None] * flat
        return out.reshape(values.shape)

    def apply_Hz(self, values: np.ndarray) -> np.ndarray:
        """(H_z - e_z0) acting along axis 1."""
        Hz = -self.grid.z_second_derivative + np.diag(self.grid.z_nodes**2 - self.ez[0])
        return np.einsum("jk,ikt->ijt", Hz, values)

    def apply_H2D_minus_Lambda(self, values: np.ndarray) -> np.ndarray:
        return self.apply_Hs(values) + self.apply_Hz(values)

    def apply_Llin(self, values: np.ndarray) -> np.ndarray:
        """omega (H_2D - Lambda) v - sigma^{-2} d_theta^2 v."""
        sig = self.grid.radial.sigma[:, None, None]
        return self.omega * self.apply_H2D_minus_Lambda(values) - dtheta(values, 2) / sig**2

    def sz_seminorm_sq(self, values: np.ndarray) -> float:
        """<(H_2D - Lambda) v, v> in L^2(sigma), from the quadratic form."""
        g = self.grid
        op = self.transverse.operator
        vs = values.reshape(g.N_s, -1)
        grad = op.G @ vs
        sf = g.radial.sigma_faces[op.face_ids] * op.face_weights
        s_part = float(np.sum(sf[:, None] * np.abs(grad) ** 2)) \
            + float(np.sum((op.mass * (op.U - self.lam_s))[:, None] * np.abs(vs) ** 2))
        # z part: spectral form sum (e_z - e_z0) |coefficient|^2
        c = np.einsum("jk,ijt->ikt", self.Vz, values)
        dz = (self.ez - self.ez[0])[None, :, None]
        z_part = float(np.sum(op.mass[:, None, None] * dz * np.abs(c) ** 2))
        return g.d_theta * g.h_z * (s_part + z_part)

    @cached_property
    def basis(self) -> ProjectionBasis:
        g = self.grid
        Phi = np.outer(self.transverse.phi, self.psi_z0)
        chi = chi_omega(g.radial.nodes, self.omega)[:, None]
        raw = chi * Phi
        nrm = math.sqrt(float(np.sum(raw**2 * g.w_sz)))
        return ProjectionBasis(Phi, raw / nrm, nrm, g)

    # angular-mode spectral machinery -----------------------------------
    @property
    def modes(self) -> "ModeSpectral":
        if self._modes is None:
            self._modes = ModeSpectral(self)
        return self._modes


class ModeSpectral:
    """Eigen-decomposition of L_l for every angular mode l.

    Work arrays use the layout (N_theta, N_s, N_z) of theta-Fourier
    coefficients.  ``forward`` maps such an array to coefficients in the
    L_l eigenbasis (orthonormal in the weighted inner product), ``inverse``
    maps back; ``eig`` has shape (N_theta, N_s, N_z).
    """

    def __init__(self, model: Model3D):
        g = model.grid
        op = model.transverse.operator
        w = model.omega
        r = 1.0 / np.sqrt(op.mass)
        S = (r[:, None] * op.K.toarray() * r[None, :]) + np.diag(op.U - model.lam_s)
        S = 0.5 * (S + S.T)
        inv_sig2 = 1.0 / g.radial.sigma**2
        ls = np.abs(wavenumbers(g.N_theta)).astype(int)
        uniq = np.unique(ls)
        d_s, W_s = {}, {}
        for l in uniq:
            dl, Wl = np.linalg.eigh(w * S + np.diag(l * l * inv_sig2))
            d_s[l], W_s[l] = dl, Wl
        self.W = np.stack([W_s[l] for l in ls])  # (N_theta, N_s, N_s)
        self.WT = np.ascontiguousarray(self.W.transpose(0, 2, 1))
        ds = np.stack([d_s[l] for l in ls])
        dz = w * (model.ez - model.ez[0])
        self.eig = ds[:, :, None] + dz[None, None, :]
        self.Vz = model.Vz
        self.sqrt_mass = np.sqrt(op.mass)
        self.scale = math.sqrt(g.h_z)
        self.grid = g

    def to_modes(self, values: np.ndarray) -> np.ndarray:
        """(N_s, N_z, N_theta) physical -> (N_theta, N_s, N_z) theta-Fourier."""
        return np.fft.fft(values, axis=-1).transpose(2, 0, 1)

    def from_modes(self, vh: np.ndarray) -> np.ndarray:
        return np.fft.ifft(vh.transpose(1, 2, 0), axis=-1)

    def forward(self, vh: np.ndarray) -> np.ndarray:
        y = vh * (self.sqrt_mass[None, :, None] * self.scale)
        return np.matmul(np.matmul(self.WT, y), self.Vz)

    def inverse(self, c: np.ndarray) -> np.ndarray:
        y = np.matmul(np.matmul(self.W, c), self.Vz.T)
        return y / (self.sqrt_mass[None, :, None] * self.scale)

    def apply_function(self, values: np.ndarray, f) -> np.ndarray:
        """f(L_lin) applied to a physical field, f given on the eigenvalues."""
        c = self.forward(self.to_modes(values))
        return self.from_modes(self.inverse(c * f(self.eig)))

    def quadratic_form(self, c: np.ndarray) -> float:
        """<L_lin v, v> from eigen-coefficients of the theta-FFT of v."""
        g = self.grid
        return g.d_theta / g.N_theta * float(np.sum(self.eig * np.abs(c) ** 2))


# ---------------------------------------------------------------- functionals

def energyMod(v: Field3D, kappa: int, model: Model3D, Lambda: float | None = None) -> dict:
    """Modified energy and its three parts.

    ``Lambda`` defaults to the solved value on the model grid; any other
    value shifts the s-z seminorm by (model.Lambda - Lambda) |v|^2.
    """
    g = v.grid
    sz = model.sz_seminorm_sq(v.values)
    if Lambda is not None:
        sz += (model.Lambda - Lambda) * massMod(v)
    th = theta_seminorm_sq(v.values, g)
    q = l4_sigma_4(v.values, g)
    total = 0.5 * model.omega * sz + 0.5 * th + 0.25 * kappa * q
    return {"energy": total, "sz_seminorm_sq": sz, "theta_seminorm_sq": th, "quartic": q}


def sigma_dot_omega_sq(v: Field3D, model: Model3D) -> float:
    return model.sz_seminorm_sq(v.values) + theta_seminorm_sq(v.values, v.grid) / model.omega


def sigma_omega_sq(v: Field3D, model: Model3D) -> float:
    return (1.0 + model.Lambda) * massMod(v) + sigma_dot_omega_sq(v, model)


def project(v: Field3D, basis: ProjectionBasis):
    """Split v into v_par(theta) Phi_tilde + v_perp."""
    g = v.grid
    wphi = (basis.Phi_tilde * g.w_sz)[:, :, None]
    vpar = np.sum(v.values * wphi, axis=(0, 1))
    perp = v.values - vpar[None, None, :] * basis.Phi_tilde[:, :, None]
    return CircleField(vpar), Field3D(perp, g)


def untruncated_projection(v: Field3D, Phi: np.ndarray) -> np.ndarray:
    """Projection onto the untruncated ground state Phi (normalised)."""
    g = v.grid
    n = math.sqrt(float(np.sum(Phi**2 * g.w_sz)))
    P = Phi / n
    coef = np.sum(v.values * (P * g.w_sz)[:, :, None], axis=(0, 1))
    return coef[None, None, :] * P[:, :, None]


def factorized(w, basis: ProjectionBasis) -> Field3D:
    """w(theta) * chi_omega * Phi_omega, with w a CircleField or samples."""
    vals = w.values if isinstance(w, CircleField) else np.asarray(w, dtype=complex)
    if vals.size != basis.grid.N_theta:
        raise ValueError("angular samples do not match N_theta")
    prof = basis.Phi_tilde * basis.norm_chi_phi
    return Field3D(prof[:, :, None] * vals[None, None, :], basis.grid)


def v_from_u(u, grid: Grid3D) -> Field3D:
    """v(s, z, theta) = omega^{1/4} u(r = s + sqrt(omega), z, theta)."""
    r = grid.radial.nodes + math.sqrt(grid.omega)
    R, Z, T = np.meshgrid(r, grid.z_nodes, grid.theta, indexing="ij")
    return Field3D(grid.omega**0.25 * u(R, Z, T), grid)


# ---------------------------------------------------------------- snapshots

_HEADER = struct.Struct("<dqqqdd")


def write_snapshot(v: Field3D, path, extra: dict | None = None) -> None:
    """Binary snapshot: header (omega, N_s, N_z, N_theta, s_max, z_max),
    then complex128 values with theta fastest.  A JSON sidecar holds the
    grid metadata."""
    g = v.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.omega, g.N_s, g.N_z, g.N_theta, g.radial.s_max, g.z_max))
        fh.write(np.ascontiguousarray(v.values, dtype="<c16").tobytes())
    meta = g.metadata()
    if extra:
        meta.update(extra)
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def read_snapshot(path, grid: Grid3D | None = None) -> Field3D:
    with open(path, "rb") as fh:
        omega, ns, nz, nt, s_max, z_max = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<c16")
    if grid is None:
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        faces = np.array(meta["s_faces"])
        radial = RadialGrid.make(omega, ns, s_max=s_max)
        if not np.allclose(radial.faces, faces, rtol=0, atol=1e-12):
            radial = _radial_from_faces(omega, faces)
        hz = 2.0 * z_max / nz
        grid = Grid3D(radial, -z_max + (np.arange(nz) + 0.5) * hz, z_max, nt)
    if grid.shape != (ns, nz, nt):
        raise ValueError("snapshot does not match the supplied grid")
    return Field3D(data.reshape(ns, nz, nt).copy(), grid)


def _radial_from_faces(omega: float, faces: np.ndarray) -> RadialGrid:
    rw = math.sqrt(omega)
    nodes = 0.5 * (faces[1:] + faces[:-1])
    sf = 1.0 + faces / rw
    sf[0] = 0.0
    return RadialGrid(omega, faces[0], faces[-1], len(nodes), faces, nodes, np.diff(faces),
                      1.0 + nodes / rw, sf)
