import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from torusgpe.elliptic import (EllipticModulus, completeE, completeK, completeKE, invertMass, jacobi,
                               massOfModulus)
from torusgpe.errors import InvalidModulus, MassTooSmall

moduli = st.floats(min_value=1e-6, max_value=1 - 1e-9)


def K_quad(k):
    return quad(lambda s: 1 / math.sqrt(1 - k * k * math.sin(s) ** 2), 0, math.pi / 2,
                epsabs=1e-15, epsrel=1e-15, limit=200)[0]


def E_quad(k):
    return quad(lambda s: math.sqrt(1 - k * k * math.sin(s) ** 2), 0, math.pi / 2,
                epsabs=1e-15, epsrel=1e-15, limit=200)[0]


@pytest.mark.parametrize("k", [0.5])
def test_K_E_against_quadrature(k):
    assert completeK(k) == pytest.approx(K_quad(k), abs=1e-12)
    assert completeE(k) == pytest.approx(E_quad(k), abs=1e-12)


@given(moduli)
@settings(max_examples=60, deadline=None)
def test_K_E_against_mpmath(k):
    K, E = completeKE(k)
    with mpmath.workdps(40):
        m = mpmath.mpf(k) ** 2
        assert K == pytest.approx(float(mpmath.ellipk(m)), rel=1e-13)
        assert E == pytest.approx(float(mpmath.ellipe(m)), rel=1e-13)


def test_limits():
    assert completeK(1e-10) == pytest.approx(math.pi / 2, abs=1e-12)
    assert completeE(1e-10) == pytest.approx(math.pi / 2, abs=1e-12)
    assert completeE(1 - 1e-15) == pytest.approx(1.0, abs=1e-12)
    assert completeK(1 - 1e-12) > completeK(1 - 1e-6) > 7.5


@pytest.mark.parametrize("k", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_modulus_rejects_endpoints(k):
    with pytest.raises(InvalidModulus):
        EllipticModulus(k)


def test_jacobi_special_points():
    k = 0.7
    assert np.allclose(jacobi(0.0, k), (0.0, 1.0, 1.0), atol=1e-15)
    sn, cn, dn = jacobi(completeK(k), k)
    assert sn == pytest.approx(1.0, abs=1e-13)
    assert cn == pytest.approx(0.0, abs=1e-13)
    assert dn == pytest.approx(math.sqrt(1 - k * k), abs=1e-13)


def test_jacobi_against_mpmath(rng):
    for z, k in zip(rng.uniform(-10, 10, 40), rng.uniform(0.01, 0.999, 40)):
        sn, cn, dn = jacobi(z, k)
        m = k * k
        assert sn == pytest.approx(float(mpmath.ellipfun("sn", z, m=m)), abs=1e-12)
        assert cn == pytest.approx(float(mpmath.ellipfun("cn", z, m=m)), abs=1e-12)
        assert dn == pytest.approx(float(mpmath.ellipfun("dn", z, m=m)), abs=1e-12)


def test_pythagorean_identities(rng):
    for z, k in zip(rng.uniform(-50, 50, 1000), rng.uniform(1e-4, 1 - 1e-6, 1000)):
        sn, cn, dn = jacobi(z, k)
        assert abs(sn**2 + cn**2 - 1) < 1e-12
        assert abs(k**2 * sn**2 + dn**2 - 1) < 1e-12


@given(st.floats(-20, 20), st.floats(0.01, 0.999))
@settings(max_examples=100, deadline=None)
def test_dn_periodicity(z, k):
    K = completeK(k)
    assert abs(jacobi(z + 2 * K, k)[2] - jacobi(z, k)[2]) < 1e-10


@given(st.floats(-5, 5), st.floats(0.05, 0.99))
@settings(max_examples=50, deadline=None)
def test_derivative_relations(z, k):
    h = 1e-4
    f = lambda x: np.array(jacobi(x, k))
    d = (f(z - 2 * h) - 8 * f(z - h) + 8 * f(z + h) - f(z + 2 * h)) / (12 * h)
    sn, cn, dn = f(z)
    assert d[0] == pytest.approx(cn * dn, abs=1e-6)
    assert d[1] == pytest.approx(-sn * dn, abs=1e-6)
    assert d[2] == pytest.approx(-k * k * sn * cn, abs=1e-6)


def test_dn_ode_residual(rng):
    # -dn'' - 2 dn^3 + (2 - k^2) dn = 0 via an 8th-order central difference
    c = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])
    h = 1e-2
    for z, k in zip(rng.uniform(-5, 5, 20), rng.uniform(0.1, 0.99, 20)):
        pts = z + h * np.arange(-4, 5)
        dn = jacobi(pts, k)[2]
        d2 = c @ dn / h**2
        r = -d2 - 2 * dn[4] ** 3 + (2 - k * k) * dn[4]
        assert abs(r) < 1e-8


def test_E_as_integral_of_dn_squared():
    for k in (0.3, 0.8, 0.99):
        K = completeK(k)
        val = quad(lambda z: jacobi(z, k)[2] ** 2, 0, K, epsabs=1e-14, epsrel=1e-14, limit=200)[0]
        assert val * K == pytest.approx(completeE(k) * K, rel=1e-10)


def test_mass_monotone():
    # below k ~ 1e-2 the increments of m(k) drop under double resolution
    k = np.linspace(1e-2, 1 - 1e-4, 10_000)
    m = np.array([massOfModulus(x) for x in k])
    assert np.all(np.diff(m) > 0)


def test_invert_mass_roundtrip():
    # beyond m ~ 50 one ulp in k moves m(k) by more than 1e-12 m
    for m in (20.0, 25.0, 30.0, 40.0):
        k = invertMass(m).k
        K, E = completeKE(k)
        assert abs(8 * E * K - m) < 1e-12 * m


def test_invert_mass_against_bisection_oracle():
    f = lambda k: 8 * float(mpmath.ellipe(k * k) * mpmath.ellipk(k * k)) - 30
    k_ref = float(mpmath.findroot(f, (0.5, 0.9999), solver="bisect", tol=1e-30))
    assert invertMass(30.0).k == pytest.approx(k_ref, abs=1e-12)


def test_invert_mass_near_threshold():
    k1 = invertMass(2 * math.pi**2 * (1 + 1e-4)).k
    k2 = invertMass(2 * math.pi**2 * (1 + 1e-8)).k
    assert 0 < k2 < k1 and k2 < 0.05


@pytest.mark.parametrize("m", [2 * math.pi**2, 10.0])
def test_mass_too_small(m):
    with pytest.raises(MassTooSmall):
        invertMass(m)
