"""Weighted transverse operator -(1/sigma) d/ds (sigma d/ds) + U(s) on
[-sqrt(omega), s_max] with sigma(s) = 1 + s/sqrt(omega).

Discretisation: cell-centred nodes, fluxes sigma * u' evaluated on cell
faces by a high-order staggered difference, and the operator assembled as
K = G^T diag(sigma_f w_f) G, H = M^{-1} K + U with M = diag(sigma_i dV_i).
H is self-adjoint in the sigma-weighted discrete inner product by
construction.  The face at s_min carries sigma = 0 so no boundary condition
is imposed there; the face at s_max holds u = 0.

The grid is uniform on the core [-a, s_max] and stretched exponentially
towards s_min, where every transverse profile is below roundoff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import GridTooCoarse, NoConvergence
from .potentials import PotentialSpec, evalU

PI_M14 = math.pi ** -0.25
MIN_NS = 32


def fornberg_weights(x0: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at x0 on nodes x."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def phi_inf(s):
    """Hermite ground state pi^{-1/4} exp(-s^2/2)."""
    s = np.asarray(s, dtype=float)
    return PI_M14 * np.exp(-0.5 * s * s)


def dphi_inf(s):
    s = np.asarray(s, dtype=float)
    return -s * phi_inf(s)


def default_s_max(omega: float) -> float:
    return max(8.0, min(math.sqrt(omega), 12.0))


def _stretched_faces(s_min: float, s_max: float, N: int, a_core: float, growth: float):
    """Face positions: uniform for s >= -a_core, exponential stretch below."""
    a = min(a_core, -s_min)
    tail = -a - s_min
    if tail <= 1e-12:
        return np.linspace(s_min, s_max, N + 1)
    h = (s_max - s_min) / N
    for _ in range(100):
        g = math.log(growth) / h
        x_min = -a - math.log1p(g * tail) / g
        h_new = (s_max - x_min) / N
        if abs(h_new - h) < 1e-15 * h:
            break
        h = h_new
    g = math.log(growth) / h
    x = np.linspace(-a - math.log1p(g * tail) / g, s_max, N + 1)
    s = np.where(x >= -a, x, -a - np.expm1(g * (-a - x)) / g)
    s[0], s[-1] = s_min, s_max
    return s


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Cell-centred grid on [s_min, s_max] with the weight sigma.

    ``nodes`` are cell centres, ``dV`` cell widths, ``faces`` the N+1 cell
    boundaries.  ``quad_weights`` = sigma * dV integrate against sigma ds.
    With ``flat=True`` the weight is identically one and both ends carry a
    Dirichlet condition (the formal omega = infinity reference).
    """

    omega: float
    s_min: float
    s_max: float
    N_s: int
    faces: np.ndarray
    nodes: np.ndarray
    dV: np.ndarray
    sigma: np.ndarray
    sigma_faces: np.ndarray
    flat: bool = False

    @classmethod
    def make(cls, omega: float, N_s: int = 1024, s_max: float | None = None,
             a_core: float = 10.0, growth: float = 1.06) -> "RadialGrid":
        if N_s < MIN_NS:
            raise GridTooCoarse(f"N_s = {N_s} < {MIN_NS}")
        rw = math.sqrt(omega)
        s_max = default_s_max(omega) if s_max is None else float(s_max)
        faces = _stretched_faces(-rw, s_max, N_s, a_core, growth)
        nodes = 0.5 * (faces[1:] + faces[:-1])
        sig_f = 1.0 + faces / rw
        sig_f[0] = 0.0
        return cls(float(omega), -rw, s_max, N_s, faces, nodes, np.diff(faces),
                   1.0 + nodes / rw, sig_f)

    @classmethod
    def reference(cls, L: float = 10.0, N_s: int = 1024) -> "RadialGrid":
        """Symmetric grid on [-L, L] with sigma = 1."""
        faces = np.linspace(-L, L, N_s + 1)
        nodes = 0.5 * (faces[1:] + faces[:-1])
        return cls(math.inf, -L, L, N_s, faces, nodes, np.diff(faces),
                   np.ones(N_s), np.ones(N_s + 1), flat=True)

    @property
    def quad_weights(self) -> np.ndarray:
        return self.sigma * self.dV

    @property
    def h_core(self) -> float:
        return float(self.dV[-1])

    def inner(self, u, v) -> complex:
        return np.sum(np.conj(u) * v * self.quad_weights)

    def norm(self, u) -> float:
        return math.sqrt(float(np.sum(np.abs(u) ** 2 * self.quad_weights)))


def _gradient_matrix(grid: RadialGrid, order: int):
    """Face-gradient matrix and face quadrature weights.

    Rows are the faces carrying flux; boundary faces with a Dirichlet
    condition enter the stencils as extra nodes with value 0.
    """
    N = grid.N_s
    f = grid.faces
    pts = list(grid.nodes)
    idx = list(range(N))
    # Dirichlet pseudo-nodes (value 0, column -1)
    pts = np.array(([f[0]] if grid.flat else []) + pts + [f[-1]])
    idx = np.array(([-1] if grid.flat else []) + idx + [-1])
    rows, cols, vals = [], [], []
    face_ids = list(range(0 if grid.flat else 1, N + 1))
    wf = np.empty(len(face_ids))
    p = order
    for r, j in enumerate(face_ids):
        x0 = f[j]
        # nearest p points in the extended node list
        c = np.searchsorted(pts, x0)
        lo = max(0, min(c - p // 2, len(pts) - p))
        sel = slice(lo, lo + p)
        w = fornberg_weights(x0, pts[sel], 1)
        for wi, ci in zip(w, idx[sel]):
            if ci >= 0:
                rows.append(r)
                cols.append(ci)
                vals.append(wi)
        left = grid.nodes[j - 1] if j >= 1 else f[0]
        right = grid.nodes[j] if j < N else f[-1]
        wf[r] = right - left
    G = sps.csr_matrix((vals, (rows, cols)), shape=(len(face_ids), N))
    return G, wf, np.array(face_ids)


@dataclass(eq=False)
class WeightedOperator:
    """H = M^{-1} K + diag(U), self-adjoint for <u, v> = sum conj(u) v M."""

    grid: RadialGrid
    K: sps.csr_matrix
    mass: np.ndarray
    U: np.ndarray
    G: sps.csr_matrix
    face_weights: np.ndarray
    face_ids: np.ndarray

    def matrix(self) -> sps.csr_matrix:
        return (sps.diags(1.0 / self.mass) @ self.K + sps.diags(self.U)).tocsr()

    def apply(self, u):
        return (self.K @ u) / self.mass + self.U * u

    def symmetric(self) -> sps.csr_matrix:
        """M^{1/2} H M^{-1/2}, an ordinary symmetric matrix."""
        r = 1.0 / np.sqrt(self.mass)
        return (sps.diags(r) @ self.K @ sps.diags(r) + sps.diags(self.U)).tocsr()

    def quadratic_form(self, u) -> float:
        """<H u, u> in the weighted inner product, from fluxes."""
        g = self.G @ u
        sf = self.grid.sigma_faces[self.face_ids]
        return float(np.sum(sf * self.face_weights * np.abs(g) ** 2)
                     + np.sum(self.mass * self.U * np.abs(u) ** 2))

    def gradient_at_faces(self, u):
        return self.G @ u


def assembleH1d(grid: RadialGrid, spec: PotentialSpec | None, order: int = 6) -> WeightedOperator:
    """Assemble the weighted operator; ``spec=None`` means U = s^2."""
    if grid.N_s < MIN_NS:
        raise GridTooCoarse(f"N_s = {grid.N_s} < {MIN_NS}")
    if order % 2 or order < 2:
        raise ValueError("order must be an even integer >= 2")
    if spec is not None and not grid.flat and abs(spec.omega - grid.omega) > 1e-12 * grid.omega:
        raise ValueError("grid and potential disagree on omega")
    G, wf, fid = _gradient_matrix(grid, order)
    sf = grid.sigma_faces[fid]
    K = (G.T @ sps.diags(sf * wf) @ G).tocsr()
    K = 0.5 * (K + K.T)
    U = grid.nodes**2 if spec is None else evalU(spec, grid.nodes)
    return WeightedOperator(grid, K.tocsr(), grid.quad_weights.copy(), np.asarray(U, float), G, wf, fid)


@dataclass(eq=False)
class TransverseEigenResult:
    lam: float
    lam_prime: float
    phi: np.ndarray
    residual: float
    grid: RadialGrid
    operator: WeightedOperator
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def Lambda(self) -> float:
        return self.lam + 1.0

    @property
    def Lambda_prime(self) -> float:
        return min(self.lam_prime + 1.0, self.lam + 3.0)

    def Phi(self, z) -> np.ndarray:
        """Phi(s, z) = phi(s) phi_inf(z) on nodes x z."""
        return np.outer(self.phi, phi_inf(z))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("s,phi_omega,phi_inf\n")
            for s, a, b in zip(self.grid.nodes, self.phi, phi_inf(self.grid.nodes)):
                fh.write(f"{s:.17g},{a:.17g},{b:.17g}\n")


def _banded_upper(A: sps.spmatrix):
    A = A.tocoo()
    bw = int(np.max(np.abs(A.col - A.row)))
    n = A.shape[0]
    ab = np.zeros((bw + 1, n))
    up = A.col >= A.row
    ab[bw + A.row[up] - A.col[up], A.col[up]] = A.data[up]
    return ab


def solveTransverse(grid: RadialGrid, spec: PotentialSpec | None, n_eigs: int = 2,
                    order: int = 6, method: str = "banded", shift: float = 0.5,
                    tol: float = 1e-8) -> TransverseEigenResult:
    """Lowest ``n_eigs`` (>= 2) eigenpairs of the weighted operator.

    ``method='banded'`` is a direct LAPACK banded solve, ``'shift-invert'``
    uses ARPACK around ``shift``.
    """
    n_eigs = max(2, int(n_eigs))
    op = assembleH1d(grid, spec, order)
    S = op.symmetric()
    if method == "banded":
        w, V = scipy.linalg.eig_banded(_banded_upper(S), lower=False, select="i",
                                       select_range=(0, n_eigs - 1))
    elif method == "shift-invert":
        try:
            w, V = spla.eigsh(S.tocsc(), k=n_eigs, sigma=shift, which="LM", tol=1e-14)
        except spla.ArpackNoConvergence as exc:
            raise NoConvergence(str(exc)) from exc
        o = np.argsort(w)
        w, V = w[o], V[:, o]
    else:
        raise ValueError(f"unknown method {method!r}")
    vecs = V / np.sqrt(op.mass)[:, None]
    vecs /= np.sqrt(np.sum(vecs**2 * op.mass[:, None], axis=0))
    phi = vecs[:, 0] * np.sign(np.sum(vecs[:, 0] * op.mass))
    res = grid.norm(op.apply(phi) - w[0] * phi)
    if not res < tol:
        raise NoConvergence(f"eigen-residual {res:.3e} above {tol:.1e}")
    vecs[:, 0] = phi
    return TransverseEigenResult(float(w[0]), float(w[1]), phi, float(res), grid, op,
                                 np.asarray(w), vecs)


def groundStateConvergence(result: TransverseEigenResult) -> dict:
    """Unweighted distances between phi_omega and phi_inf on the grid."""
    g = result.grid
    d = result.phi - phi_inf(g.nodes)
    op = result.operator
    ff = g.faces[op.face_ids]
    dd = op.G @ result.phi - dphi_inf(ff)
    return {
        "l2_err": float(np.sum(d**2 * g.dV)),
        "grad_err": float(np.sum(dd**2 * op.face_weights)),
        "weighted_err": float(np.sum(g.nodes**2 * d**2 * g.dV)),
        "l4_err": float(np.sum(d**4 * g.dV)),
    }


def node_derivative(grid: RadialGrid, u: np.ndarray, order: int = 6) -> np.ndarray:
    """High-order derivative of nodal values at the nodes."""
    out = np.empty_like(u)
    x = grid.nodes
    n = len(x)
    for i in range(n):
        lo = max(0, min(i - order // 2, n - order - 1))
        sl = slice(lo, lo + order + 1)
        out[i] = fornberg_weights(x[i], x[sl], 1) @ u[sl]
    return out


def decayCheck(result: TransverseEigenResult, c: float, floor: float = 1e-12) -> dict:
    """max of (phi + |phi'|) exp(c s^2) over nodes where phi exceeds ``floor``
    times its maximum (below that the samples are roundoff)."""
    if not 0.0 < c < 0.45:
        raise ValueError("decay rate c must lie in (0, 0.45)")
    phi = result.phi
    dphi = node_derivative(result.grid, phi)
    s = result.grid.nodes
    keep = phi > floor * phi.max()
    val = (phi + np.abs(dphi)) * np.exp(c * s * s)
    return {"constant": float(val[keep].max()), "s_range": (float(s[keep].min()), float(s[keep].max()))}
