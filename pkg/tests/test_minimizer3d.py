import math

import numpy as np
import pytest

from torusgpe.circle1d import Branch, groundState1d, h1_norm
from torusgpe.core3d import (Field3D, Grid3D, Model3D, energyMod, factorized, inner_sigma, l2_sigma,
                             massMod)
from torusgpe.errors import NoConvergence
from torusgpe.minimizer3d import (MinimizeConfig, canonicalize, dimensionReductionReport,
                                  forbiddenRegionCheck, gn_ratio, gnCheck, minimize, random_start,
                                  rayleigh_mu)
from torusgpe.potentials import PotentialSpec


@pytest.fixture(scope="module")
def sweep():
    out = {}
    for om in (64.0, 256.0, 1024.0):
        spec = PotentialSpec("Quadratic", om)
        g = Grid3D.make(om)
        out[om] = minimize(MinimizeConfig(om, 30.0), spec, g, Model3D(g, spec))
    return out


def test_config_validation():
    with pytest.raises(ValueError):
        MinimizeConfig(64.0, 30.0, delta=0.7)
    with pytest.raises(ValueError):
        MinimizeConfig(64.0, 30.0, kappa=0)
    with pytest.raises(ValueError):
        MinimizeConfig(64.0, -1.0)


def test_result_identities(ground64):
    r = ground64
    Q = r.Q
    assert massMod(Q) == pytest.approx(30.0, rel=1e-9)
    assert r.el_residual < 1e-10 * (1 + abs(r.mu)) * l2_sigma(Q)
    e = energyMod(Q, -1, r.model)
    lhs = r.mu * 30.0
    rhs = -(r.model.omega * e["sz_seminorm_sq"] + e["theta_seminorm_sq"] - e["quartic"])
    assert lhs == pytest.approx(rhs, abs=1e-8 * abs(rhs))
    assert rayleigh_mu(Q, r.model, -1) == pytest.approx(r.mu, rel=1e-12)
    assert r.diagnostics["constraint_margin"] > 0
    assert r.diagnostics["imag_max"] == 0.0


def test_energy_descent(ground64):
    E = np.array([h[1] for h in ground64.history])
    assert np.all(np.diff(E) <= 1e-12 * np.abs(E[1:]))


def test_gradient_consistency(model64, rng):
    g = model64.grid
    s = g.radial.nodes[:, None, None]
    z = g.z_nodes[None, :, None]
    env = np.exp(-0.4 * (s * s + z * z))
    v = env * (1 + 0.5 * np.cos(g.theta) + 0.3j * np.sin(2 * g.theta))
    h = env * (rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)) * (1 + 0 * s)
    h = np.fft.ifft(np.fft.fft(h, axis=-1) * (np.abs(np.fft.fftfreq(g.N_theta, 1 / g.N_theta)) < 4), axis=-1)
    for kappa in (1, -1):
        E = lambda x: energyMod(Field3D(x, g), kappa, model64)["energy"]
        eps = 1e-4
        fd = (E(v + eps * h) - E(v - eps * h)) / (2 * eps)
        grad = model64.apply_Llin(v) + kappa * np.abs(v) ** 2 * v
        an = inner_sigma(grad, h, g).real
        assert fd == pytest.approx(an, rel=1e-6)


def test_below_threshold_converges_to_constant():
    om = 64.0
    spec = PotentialSpec("Quadratic", om)
    r = minimize(MinimizeConfig(om, 10.0), spec, Grid3D.make(om))
    qpar = r.diagnostics["Q_par"].values
    const = math.sqrt(10.0 / (2 * math.pi))
    assert groundState1d(10.0, -1).branch is Branch.CONSTANT
    assert h1_norm(qpar - const) < 0.05 * const


def test_iteration_cap(model64):
    with pytest.raises(NoConvergence):
        minimize(MinimizeConfig(64.0, 30.0, max_iters=2), PotentialSpec("Quadratic", 64.0),
                 model64.grid, model64)


def test_random_starts_agree(model64, ground64):
    rng = np.random.default_rng(7)
    g = model64.grid
    cfg = MinimizeConfig(64.0, 30.0, tol_grad=1e-10)
    for _ in range(3):
        r = minimize(cfg, PotentialSpec("Quadratic", 64.0), g, model64, start=random_start(model64, 30.0, rng))
        assert l2_sigma(Field3D(r.Q.values - ground64.Q.values, g)) < 1e-6


def test_canonicalize_undoes_symmetries(ground64):
    g = ground64.model.grid
    v = np.roll(ground64.Q.values, 7, axis=-1) * np.exp(1.1j)
    back = canonicalize(v, ground64.model)
    assert np.max(np.abs(back - ground64.Q.values)) < 1e-10 * np.max(np.abs(ground64.Q.values))


def test_dimension_reduction_sweep(sweep):
    gs = groundState1d(30.0, -1)
    reps = [dimensionReductionReport(sweep[o], gs) for o in sorted(sweep)]
    d = [r["sigma_distance"] for r in reps]
    assert d[0] > d[1] > d[2]
    gap = [r["energy_gap"] * math.sqrt(o) for r, o in zip(reps, sorted(sweep))]
    assert gap[0] >= gap[1] >= gap[2]


@pytest.mark.xfail(strict=True, reason="the energy gap falls like 1/omega, so the sqrt(omega)-scaled gap "
                                       "varies by ~4.6 over 64..1024")
def test_energy_gap_scaled_ratio(sweep):
    gs = groundState1d(30.0, -1)
    gap = [dimensionReductionReport(sweep[o], gs)["energy_gap"] * math.sqrt(o) for o in sorted(sweep)]
    assert max(gap) / min(gap) <= 3


def test_consistency_of_report_on_factorized(model64):
    gs = groundState1d(30.0, -1)
    from torusgpe.minimizer3d import _finish
    Q = factorized(gs.sample(model64.grid.N_theta), model64.basis)
    res = _finish(Q, MinimizeConfig(64.0, massMod(Q)), model64, 0, [])
    rep = dimensionReductionReport(res, groundState1d(massMod(Q), -1)) if abs(massMod(Q) - 30) > 1e-12 \
        else dimensionReductionReport(res, gs)
    assert rep["adprop_quantity"] == pytest.approx(
        64.0 * res.diagnostics["sz_seminorm_sq"] + res.diagnostics["perp_theta_seminorm"] ** 2)
    assert res.diagnostics["perp_theta_seminorm"] < 1e-10


def test_forbidden_region_scaling(sweep):
    K = [forbiddenRegionCheck(sweep[o]) for o in sorted(sweep)]
    assert all(k > 0 for k in K)
    assert max(K) / min(K) <= 3


def test_gaussian_localization_and_angular_bounds(sweep):
    vals, d1, d2 = [], [], []
    for om in sorted(sweep):
        r = sweep[om]
        g = r.model.grid
        s = g.radial.nodes[:, None, None]
        z = g.z_nodes[None, :, None]
        # drop roundoff-level samples far in the tail, which the weight would amplify
        q = np.where(np.abs(r.Q.values) > 1e-12 * np.abs(r.Q.values).max(), r.Q.values, 0.0)
        vals.append(l2_sigma(Field3D(np.exp(0.25 * (s * s + z * z)) * q, g)))
        from torusgpe.core3d import dtheta, l2_inv_sigma_sq
        d1.append(math.sqrt(l2_inv_sigma_sq(dtheta(r.Q.values), g)))
        d2.append(math.sqrt(l2_inv_sigma_sq(dtheta(r.Q.values, 2), g)))
    for seq in (vals, d1, d2):
        assert max(seq) / min(seq) <= 1.5


def test_gn_ratio_factorized_finite(model64):
    v = factorized(groundState1d(30.0, -1).sample(32), model64.basis).values
    r = gn_ratio(v, model64)
    assert 0 < r < math.inf


def test_gn_check_deterministic(model64):
    a = gnCheck(20, model64, 3)
    b = gnCheck(20, model64, 3)
    assert a["C_GN"] == b["C_GN"] and np.all(a["ratios"] <= a["C_GN"])
