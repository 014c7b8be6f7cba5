import math

import numpy as np
import pytest

from torusgpe.circle1d import CircleField, groundState1d
from torusgpe.core3d import Field3D, Grid3D, Model3D, factorized, l2_sigma
from torusgpe.dynamics3d import EvolveConfig, checkH3, evolve3d, reductionHarness
from torusgpe.errors import NormExplosion
from torusgpe.potentials import PotentialSpec


def perturbed(model):
    th = model.grid.theta
    w = groundState1d(30.0, -1).sample(model.grid.N_theta).values
    return factorized(CircleField(w * (1 + 0.2 * np.cos(th)) + 0.3 * np.exp(2j * th)), model.basis)


def test_config_validation():
    with pytest.raises(ValueError):
        EvolveConfig(0.0, 1.0, 64.0)
    with pytest.raises(ValueError):
        EvolveConfig(1e-3, 1e-4, 64.0)
    with pytest.raises(ValueError):
        EvolveConfig(1e-3, 1.0, 64.0, scheme="rk4")
    with pytest.warns(RuntimeWarning):
        EvolveConfig(1e-2, 1.0, 64.0)
    c = EvolveConfig(-1e-3, 0.01, 64.0)
    assert c.n_steps == 10 and c.step == pytest.approx(-1e-3)


def test_zero_stays_zero(model64):
    g = model64.grid
    tr = evolve3d(Field3D(np.zeros(g.shape), g), EvolveConfig(1e-3, 0.01, 64.0), model64)
    assert np.all(tr.final.values == 0)


@pytest.mark.parametrize("kappa", [1, -1])
def test_conservation_and_energy_order(model64, kappa):
    v0 = perturbed(model64)
    T, errs = 0.02, []
    for n in (128, 256, 512):
        tr = evolve3d(v0, EvolveConfig(T / n, T, 64.0, kappa, record_every=n // 4), model64, check_h3=False)
        assert np.max(np.abs(tr.mass_series - tr.mass_series[0])) / tr.mass_series[0] < 1e-8
        errs.append(abs(tr.energy_series[-1] - tr.energy_series[0]))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


def test_exact_linear_step_also_second_order(model64):
    v0 = perturbed(model64)
    T, errs = 0.02, []
    for n in (128, 256, 512):
        tr = evolve3d(v0, EvolveConfig(T / n, T, 64.0, -1, record_every=n, scheme="exact"), model64,
                      check_h3=False)
        errs.append(abs(tr.energy_series[-1] - tr.energy_series[0]))
    assert np.all(np.log2(np.array(errs[:-1]) / np.array(errs[1:])) >= 1.9)


def test_ground_state_modulus_stationary(model64, ground64):
    T = 10 / 64.0
    n = int(round(T * 64.0 / 0.05))
    tr = evolve3d(ground64.Q, EvolveConfig(T / n, T, 64.0, -1, record_every=n), model64)
    q = np.abs(ground64.Q.values)
    assert np.max(np.abs(np.abs(tr.final.values) - q)) < 1e-5 * q.max()
    # the phase rotates at rate mu
    k = np.unravel_index(np.argmax(q), q.shape)
    ph = np.angle(tr.final.values[k] / ground64.Q.values[k])
    assert ph == pytest.approx(math.remainder(ground64.mu * T, 2 * math.pi), abs=1e-4)


def test_time_reversibility(model64):
    v0 = perturbed(model64)
    T, n = 0.1, 128
    fw = evolve3d(v0, EvolveConfig(T / n, T, 64.0, -1, record_every=n), model64, check_h3=False)
    bw = evolve3d(fw.final, EvolveConfig(-T / n, T, 64.0, -1, record_every=n), model64, check_h3=False)
    assert l2_sigma(Field3D(bw.final.values - v0.values, model64.grid)) < 1e-6


def test_check_h3(model64):
    g = model64.grid
    zero = Field3D(np.zeros(g.shape), g)
    assert checkH3(zero, 0.05, model64) == {"value": 0.0, "pass": True}
    f = np.ones(g.N_theta)
    Phi = model64.basis.Phi_omega
    r = checkH3(Field3D(Phi[:, :, None] * f, g), 0.05, model64)
    assert abs(r["value"]) < 1e-8 and r["pass"]
    # first excited transverse state: the s-excitation times the z ground state
    tr = model64.transverse
    ex = np.outer(tr.eigenvectors[:, 1], model64.psi_z0)
    m = 0.5
    v = Field3D(ex[:, :, None] * np.full(g.N_theta, math.sqrt(m / (2 * math.pi))), g)
    r = checkH3(v, 0.05, model64)
    assert r["value"] == pytest.approx((tr.lam_prime - tr.lam) * m, rel=1e-6)
    assert r["pass"] == ((tr.lam_prime - tr.lam) * m <= 0.05 * 64)
    big = Field3D(v.values * 4, g)
    assert not checkH3(big, 0.05, model64)["pass"]
    with pytest.raises(ValueError):
        evolve3d(big, EvolveConfig(1e-3, 0.01, 64.0, -1), model64)


def test_plane_wave_tracking():
    errs = []
    for om in (64.0, 256.0):
        m = Model3D(Grid3D.make(om), PotentialSpec("Quadratic", om))
        A, l = 1.5, 1
        th = m.grid.theta
        n = int(0.2 * om / 0.05)
        tr = evolve3d(factorized(CircleField(A * np.exp(1j * l * th)), m.basis),
                      EvolveConfig(0.2 / n, 0.2, om, -1, record_every=n // 4), m)
        Om = l * l - A * A / (2 * math.pi)
        errs.append(max(np.max(np.abs(p.values - A * np.exp(1j * (l * th - Om * t))))
                        for p, t in zip(tr.v_par_snapshots, tr.times)))
        assert errs[-1] < A / math.sqrt(om)
    assert errs[1] < errs[0]


def test_mass_guard(model64):
    with pytest.raises(NormExplosion):
        evolve3d(perturbed(model64), EvolveConfig(1e-3, 0.01, 64.0, -1, mass_tol=1e-18), model64,
                 check_h3=False)


def test_grid_convergence_of_remainder():
    om, T = 64.0, 0.25
    sups = []
    for nt, dtf in ((32, 0.05), (64, 0.025)):
        m = Model3D(Grid3D.make(om, N_theta=nt), PotentialSpec("Quadratic", om))
        w0 = groundState1d(30.0, -1).sample(nt)
        n = int(round(T * om / dtf))
        tr = evolve3d(factorized(w0, m.basis), EvolveConfig(T / n, T, om, -1, record_every=n // 10), m)
        sups.append(tr.remainder_sup)
    assert abs(sups[0] - sups[1]) < 0.1 * sups[1]


def test_harness_zero_data():
    zero = CircleField(np.zeros(32, complex))
    rep = reductionHarness(zero, [64.0], lambda o: PotentialSpec("Quadratic", o), lambda o: Grid3D.make(o),
                           T=0.01)
    assert rep["remainder"] == [0.0] and rep["trajectory_distance"] == [0.0]


def test_trace_csv(tmp_path, model64):
    tr = evolve3d(perturbed(model64), EvolveConfig(1e-3, 0.005, 64.0, -1), model64, check_h3=False)
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,mass,energy,remainder" and len(lines) == len(tr.times) + 1
