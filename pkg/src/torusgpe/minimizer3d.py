"""Mass-constrained minimisation of the modified energy, with diagnostics.

The flow is a normalised gradient flow.  One step solves

    (I + dt (L_lin + a)) v* = v + dt (a v - kappa |v|^2 v - mu_n v)

and rescales v* to mass m.  Here L_lin = omega (H_2D - Lambda) - sigma^-2
d_theta^2 is diagonal in the per-mode eigenbasis, mu_n is the Rayleigh
multiplier of v, and a >= 0 is a stabilising shift.  With mu_n in the
right-hand side a fixed point solves the Euler-Lagrange equation exactly.
With a = 0 and mu_n dropped this is the plain backward-Euler/explicit
cubic step.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import circle1d
from .circle1d import TWO_PI, CircleField, DnoidalGroundState
from .core3d import (Field3D, Grid3D, Model3D, dtheta, energyMod, factorized, inner_sigma,
                     l2_inv_sigma_sq, l4_sigma_4, massMod, project, sigma_dot_omega_sq,
                     sigma_omega_sq, theta_seminorm_sq)
from .errors import ConstraintActive, NoConvergence, NotConverged, StepSizeError


@dataclass
class MinimizeConfig:
    omega: float
    m: float
    kappa: int = -1
    delta: float = 0.05
    tol_energy: float = 1e-10
    tol_grad: float = 1e-8
    max_iters: int = 5000
    dt_flow: float = 1.0
    shift: float | None = None
    warm_start: str | Field3D = "Factorized"

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 0.5)")
        if self.tol_energy <= 0 or self.tol_grad <= 0:
            raise ValueError("tolerances must be positive")
        if self.kappa not in (1, -1):
            raise ValueError("kappa must be +1 or -1")
        if not self.m > 0 or not self.dt_flow > 0:
            raise ValueError("mass and dt_flow must be positive")


@dataclass
class MinimizerResult:
    Q: Field3D
    mu: float
    energy: float
    el_residual: float
    diagnostics: dict
    iterations: int
    config: MinimizeConfig
    model: Model3D = field(repr=False)
    history: list = field(default_factory=list, repr=False)

    def record(self) -> dict:
        d = {k: v for k, v in self.diagnostics.items() if k != "Q_par"}
        return {"omega": self.config.omega, "m": self.config.m, "kappa": self.config.kappa,
                "mu": self.mu, "energy": self.energy, "residual": self.el_residual,
                "iterations": self.iterations, "diagnostics": d}


def warm_start(model: Model3D, m: float, kappa: int) -> Field3D:
    """Circle ground state times the truncated transverse profile."""
    gs = circle1d.groundState1d(m, kappa)
    v = factorized(gs.sample(model.grid.N_theta), model.basis)
    return Field3D(v.values * math.sqrt(m / massMod(v)), model.grid)


def random_start(model: Model3D, m: float, rng: np.random.Generator, n_modes: int = 3,
                 transverse_amp: float = 0.05) -> Field3D:
    """Random low-mode angular profile on the transverse ground state, plus a
    small smooth transverse perturbation; rescaled to mass m."""
    g = model.grid
    th = g.theta
    w = np.full(g.N_theta, 1.0 + 0j)
    for l in range(1, n_modes + 1):
        a, b = rng.normal(size=2) / l
        w = w + (a + 1j * b) * np.exp(1j * l * th) + (rng.normal() + 1j * rng.normal()) / l * np.exp(-1j * l * th)
    base = factorized(w, model.basis).values
    s = g.radial.nodes[:, None, None]
    z = g.z_nodes[None, :, None]
    c = rng.normal(size=3)
    pert = (c[0] * s + c[1] * z + c[2] * (s * s - 0.5)) * np.exp(-0.5 * (s * s + z * z)) \
        * model.grid.radial.sigma[:, None, None] ** 0 * (1.0 + 0.3 * np.cos(th + rng.uniform(0, TWO_PI)))
    v = base + transverse_amp * np.abs(w).max() * pert
    v = v * (model.basis.Phi_tilde[:, :, None] != 0)
    return Field3D(v * math.sqrt(m / massMod(Field3D(v, g))), g)


def rayleigh_mu(Q: Field3D, model: Model3D, kappa: int, m: float | None = None) -> float:
    """mu from mu m = -(omega |Q|^2_sz + |d_theta Q|^2 + kappa |Q|_4^4)."""
    e = energyMod(Q, kappa, model)
    m = massMod(Q) if m is None else m
    return -(model.omega * e["sz_seminorm_sq"] + e["theta_seminorm_sq"] + kappa * e["quartic"]) / m


def el_residual(Q: Field3D, mu: float, model: Model3D, kappa: int) -> float:
    r = model.apply_Llin(Q.values) + kappa * np.abs(Q.values) ** 2 * Q.values + mu * Q.values
    return math.sqrt(massMod(Field3D(r, Q.grid)))


def _rotate_theta(values: np.ndarray, theta0: float) -> np.ndarray:
    """Return v(theta + theta0) by Fourier shift."""
    n = values.shape[-1]
    ph = np.exp(1j * circle1d.wavenumbers(n) * theta0)
    ph[n // 2] = math.cos(n // 2 * theta0)
    return np.fft.ifft(np.fft.fft(values, axis=-1) * ph, axis=-1)


def canonicalize(v: np.ndarray, model: Model3D) -> np.ndarray:
    """Fix the global phase (integral real positive) and the rotation
    (peak of the angular profile at theta = 0)."""
    g = model.grid
    tot = np.sum(v * g.w_sz[:, :, None])
    v = v * np.exp(-1j * np.angle(tot))
    vpar = np.sum(v * (model.basis.Phi_tilde * g.w_sz)[:, :, None], axis=(0, 1))
    c = np.fft.fft(vpar)
    if abs(c[1]) > 1e-9 * abs(c[0]):
        v = _rotate_theta(v, -np.angle(c[1]))
        vpar = np.sum(v * (model.basis.Phi_tilde * g.w_sz)[:, :, None], axis=(0, 1))
        # guard against landing on the minimum instead of the maximum
        if vpar.real[0] < vpar.real[g.N_theta // 2]:
            v = _rotate_theta(v, math.pi)
    return v


def minimize(cfg: MinimizeConfig, spec, grid: Grid3D, model: Model3D | None = None,
             start: Field3D | None = None, check_every: int = 1) -> MinimizerResult:
    """Normalised gradient flow to a constrained energy minimiser."""
    model = Model3D(grid, spec) if model is None else model
    ms = model.modes
    g = grid
    kappa, m, dt = cfg.kappa, cfg.m, cfg.dt_flow
    if start is None:
        start = cfg.warm_start if isinstance(cfg.warm_start, Field3D) else warm_start(model, m, kappa)
    v = start.values * math.sqrt(m / massMod(start))
    bound = cfg.delta * math.sqrt(model.omega)
    wsz = g.w_sz[:, :, None]
    pref = g.d_theta / g.N_theta

    c = ms.forward(ms.to_modes(v))
    E_old = math.inf
    history = []
    min_margin = math.inf
    for it in range(1, cfg.max_iters + 1):
        dens = np.abs(v) ** 2
        quart = g.d_theta * float(np.sum(dens**2 * wsz))
        lin = ms.quadratic_form(c)
        E = 0.5 * lin + 0.25 * kappa * quart
        mu = -(lin + kappa * quart) / m
        if E > E_old + 1e-12 * abs(E_old) + 1e-14:
            raise StepSizeError(f"energy increased at iteration {it}: {E_old!r} -> {E!r}; reduce dt_flow")
        Nh = ms.forward(ms.to_modes(kappa * dens * v))
        grad = ms.eig * c + Nh + mu * c
        res = math.sqrt(pref * float(np.sum(np.abs(grad) ** 2)))
        sz = model.sz_seminorm_sq(v) if it % check_every == 0 else math.nan
        margin = bound - math.sqrt(max(sz, 0.0)) if sz == sz else math.nan
        if margin == margin:
            min_margin = min(min_margin, margin)
        history.append((it, E, mu, res))
        dE = abs(E_old - E) / max(abs(E), 1e-300)
        if dE < cfg.tol_energy and res < cfg.tol_grad * (1.0 + abs(mu)) * math.sqrt(m):
            break
        E_old = E
        a = cfg.shift
        if a is None:
            a = max(mu, 0.0) + (1.5 * float(dens.max()) if kappa > 0 else 0.0) + 1e-3
        c = ((1.0 + dt * (a - mu)) * c - dt * Nh) / (1.0 + dt * (ms.eig + a))
        scale = math.sqrt(m / (pref * float(np.sum(np.abs(c) ** 2))))
        c *= scale
        v = ms.from_modes(ms.inverse(c))
    else:
        raise NoConvergence(f"no convergence in {cfg.max_iters} iterations (residual {res:.3e})")

    v = canonicalize(v, model)
    if np.max(np.abs(v.imag)) < 1e-6 * np.max(np.abs(v)):
        v = v.real.astype(complex)
    Q = Field3D(v * math.sqrt(m / massMod(Field3D(v, g))), g)
    return _finish(Q, cfg, model, it, history)


def _finish(Q: Field3D, cfg: MinimizeConfig, model: Model3D, it: int, history) -> MinimizerResult:
    kappa = cfg.kappa
    e = energyMod(Q, kappa, model)
    mu = rayleigh_mu(Q, model, kappa)
    res = el_residual(Q, mu, model, kappa)
    qpar, qperp = project(Q, model.basis)
    margin = cfg.delta * math.sqrt(model.omega) - math.sqrt(max(e["sz_seminorm_sq"], 0.0))
    diag = {
        "sz_seminorm": math.sqrt(max(e["sz_seminorm_sq"], 0.0)),
        "sz_seminorm_sq": e["sz_seminorm_sq"],
        "theta_seminorm": math.sqrt(e["theta_seminorm_sq"]),
        "Q_par": qpar,
        "perp_mass": massMod(qperp),
        "perp_theta_seminorm": math.sqrt(theta_seminorm_sq(qperp.values, Q.grid)),
        "constraint_margin": margin,
        "imag_max": float(np.max(np.abs(Q.values.imag))),
    }
    res_obj = MinimizerResult(Q, mu, e["energy"], res, diag, it, cfg, model, history)
    if margin <= 0:
        raise ConstraintActive(f"constraint active at termination (margin {margin:.3e})")
    return res_obj


# ---------------------------------------------------------------- diagnostics

def dimensionReductionReport(res: MinimizerResult, gs: DnoidalGroundState) -> dict:
    """Distances between the 3D minimiser and the circle ground state."""
    if abs(gs.m - res.config.m) > 1e-12 * gs.m or gs.kappa != res.config.kappa:
        raise ValueError("ground state and minimiser disagree on (m, kappa)")
    model = res.model
    g = model.grid
    qinf = gs.sample(g.N_theta)
    # Q_inf * chi * Phi_0 with the continuum transverse Gaussian
    from .transverse import phi_inf
    from .core3d import chi_omega
    Phi0 = np.outer(chi_omega(g.radial.nodes, model.omega) * phi_inf(g.radial.nodes), phi_inf(g.z_nodes))
    ref = Field3D(Phi0[:, :, None] * qinf.values[None, None, :], g)
    diff = Field3D(res.Q.values - ref.values, g)
    qpar = res.diagnostics["Q_par"]
    J_inf = circle1d.energy1d(gs.sample(max(g.N_theta, 1024)), gs.kappa)
    return {
        "sigma_distance": math.sqrt(sigma_omega_sq(diff, model)),
        "adprop_quantity": model.omega * res.diagnostics["sz_seminorm_sq"]
        + res.diagnostics["perp_theta_seminorm"] ** 2,
        "energy_gap": abs(res.energy - J_inf),
        "J_inf": J_inf,
        "h1_distance_par": circle1d.h1_norm(qpar.values - qinf.values),
        "mu_gap": abs(res.mu - gs.mu_inf),
    }


def forbiddenRegionCheck(res: MinimizerResult, E_bound: float = math.inf) -> float:
    """omega * |Q|^2 in the full homogeneous seminorm."""
    if res.energy > E_bound:
        raise ValueError("minimiser energy exceeds the stated bound")
    return res.model.omega * sigma_dot_omega_sq(res.Q, res.model)


def gn_ratio(v: np.ndarray, model: Model3D) -> float:
    g = model.grid
    f = Field3D(v, g)
    l2 = math.sqrt(massMod(f))
    sz = max(model.sz_seminorm_sq(v), 0.0)
    th = theta_seminorm_sq(v, g)
    sdo = math.sqrt(sz + th / model.omega)
    denom = l2 * (math.sqrt(model.omega) * sz * sdo + l2**2 * math.sqrt(th) + l2**3)
    return l4_sigma_4(v, g) / denom


def gn_ensemble(model: Model3D, ensemble_size: int, seed: int) -> np.ndarray:
    """Random smooth fields: Gaussian envelopes in (s, z) with random centre,
    width and low-order Hermite content, times random low-order angular
    Fourier content."""
    g = model.grid
    rng = np.random.default_rng(seed)
    s = g.radial.nodes[:, None]
    z = g.z_nodes[None, :]
    th = g.theta
    chi = np.asarray(model.basis.Phi_tilde != 0, dtype=float)
    out = np.empty(ensemble_size)
    for n in range(ensemble_size):
        width = rng.uniform(0.6, 1.6)
        s0, z0 = rng.uniform(-1.0, 1.0, size=2)
        x, y = (s - s0) / width, (z - z0) / width
        env = np.exp(-0.5 * (x * x + y * y))
        poly = 1.0 + rng.normal() * x + rng.normal() * y + 0.5 * rng.normal() * (x * y)
        trans = env * poly * chi
        nm = rng.integers(0, 6)
        ang = np.full(g.N_theta, rng.normal() + 0j)
        for l in range(1, nm + 1):
            ang = ang + (rng.normal() + 1j * rng.normal()) * np.exp(1j * l * th) / l \
                + (rng.normal() + 1j * rng.normal()) * np.exp(-1j * l * th) / l
        ang = ang * np.exp(rng.uniform(-1.5, 1.5) * np.cos(th - rng.uniform(0, TWO_PI)))
        out[n] = gn_ratio(trans[:, :, None] * ang[None, None, :], model)
    return out


def gnCheck(ensemble_size: int, model: Model3D, seed: int) -> dict:
    """Largest ratio of the quartic norm to the refined GN right-hand side."""
    ratios = gn_ensemble(model, ensemble_size, seed)
    return {"C_GN": float(ratios.max()), "ratios": ratios}


def coercivityCheck(res: MinimizerResult, tol: float = 1e-7, maxiter: int = 200,
                    seed: int = 0, block: int = 2) -> dict:
    """Smallest eigenvalue of the linearised operator on real perturbations
    orthogonal (in L^2(sigma)) to Q and d_theta Q.

    The deflated operator P A P + c (I - P), with P the orthogonal projector
    off the two symmetry directions and c far above the wanted eigenvalue,
    is handed to LOBPCG preconditioned by (L_lin + mu + 1)^{-1}, which is
    diagonal in the per-mode eigenbasis.
    """
    if res.config.kappa != -1:
        raise ValueError("coercivity check is for the focusing case")
    if abs(res.config.m - circle1d.TWO_PI_SQ) < 0.5:
        warnings.warn("mass close to 2 pi^2: coercivity is not expected to be uniform",
                      RuntimeWarning)
    model = res.model
    g = model.grid
    ms = model.modes
    mu = res.mu
    Q = res.Q.values.real
    W = (g.w_sz * g.d_theta)[:, :, None] * np.ones(g.N_theta)
    sw = np.sqrt(W)
    shape = g.shape
    pot = mu - 3.0 * Q**2
    shift = max(mu, 0.0) + 1.0
    far = 1e3

    def L(u):
        return ms.apply_function(u, lambda d: d).real + pot * u

    dQ = dtheta(Q).real
    Y, _ = np.linalg.qr(np.stack([(sw * Q).ravel(), (sw * dQ).ravel()], axis=1))

    def proj(x):
        return x - Y @ (Y.T @ x)

    def columns(fun):
        def op(x):
            x = np.asarray(x)
            cols = x.reshape(x.shape[0], -1)
            out = np.empty_like(cols)
            for j in range(cols.shape[1]):
                out[:, j] = fun(cols[:, j])
            return out.reshape(x.shape)
        return op

    def A(x):
        px = proj(x)
        return proj((sw * L(px.reshape(shape) / sw)).ravel()) + far * (x - px)

    def T(x):
        u = proj(x).reshape(shape) / sw
        return proj((sw * ms.apply_function(u, lambda d: 1.0 / (d + shift)).real).ravel())

    n = Q.size
    Aop = spla.LinearOperator((n, n), matvec=columns(A), matmat=columns(A), dtype=float)
    Top = spla.LinearOperator((n, n), matvec=columns(T), matmat=columns(T), dtype=float)
    rng = np.random.default_rng(seed)
    X0 = rng.normal(size=(n, block)) * (sw * (model.basis.Phi_tilde[:, :, None] + 1e-3)).reshape(-1, 1)
    X0 = np.stack([proj(X0[:, j]) for j in range(block)], axis=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vals, vecs = spla.lobpcg(Aop, X0, M=Top, tol=tol, maxiter=maxiter, largest=False)
    o = np.argsort(vals)
    lam_min = float(vals[o[0]])
    x = vecs[:, o[0]]
    resid = float(np.linalg.norm(A(x) - lam_min * x) / np.linalg.norm(x))
    if not math.isfinite(lam_min) or resid > 1e-3 * max(1.0, abs(lam_min)):
        raise NotConverged(f"deflated eigen-solve residual {resid:.3e}")
    nrm = lambda u: math.sqrt(float(np.sum(u * u * W)))
    LQ = L(Q)
    return {
        "lambda_min": lam_min,
        "eigenvalues": np.sort(vals).tolist(),
        "eigen_residual": resid,
        "kernel_residual": nrm(L(dQ)) / nrm(dQ),
        "LQ_Q": float(np.sum(LQ * Q * W)),
    }
