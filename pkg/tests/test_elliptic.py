import cmath

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isolab.elliptic import (
    EllipticModulus,
    SeriesTolerance,
    eisenstein_e1,
    eisenstein_e2,
    eisenstein_e2_prime,
    eta1,
    half_period_values,
    nearest_lattice_point,
    phi_kernel,
    theta,
    theta_derivatives,
    weierstrass_p,
    weierstrass_p_prime,
)
from isolab.errors import PoleError, SeriesConvergenceError
from isolab.identities import DEFAULT_TAUS, cell_grid, elliptic_identity_suite
from isolab.pvi import half_period_shifts

from oracles import central_diff, theta_mp, wp_rows, wp_square

TAUS = list(DEFAULT_TAUS) + [0.5j, -0.4 + 0.9j]

coord = st.floats(-0.45, 0.45)
taus = st.sampled_from(TAUS)


def test_modulus_rejects_lower_half_plane():
    with pytest.raises(ValueError, match="Im"):
        EllipticModulus(0.3 - 0.1j)
    with pytest.raises(ValueError):
        EllipticModulus(1.0)


def test_q8_branch():
    m = EllipticModulus(1j)
    assert m.q8 == pytest.approx(cmath.exp(-np.pi / 4))
    assert m.q8**8 == pytest.approx(m.q)


@pytest.mark.parametrize("tau", TAUS)
def test_theta_matches_mpmath(tau):
    for z in cell_grid(tau, 4):
        ref = theta_mp(z, tau)
        assert abs(theta(z, tau) - ref) <= 1e-13 * max(1.0, abs(ref))


def test_theta_zero_and_scalar_type():
    assert theta(0.0, 1j) == 0
    assert isinstance(theta(0.1, 1j), complex)
    assert theta(np.array([0.1, 0.2]), 1j).shape == (2,)


@settings(max_examples=60, deadline=None)
@given(a=coord, b=coord, tau=taus)
def test_theta_quasi_periodicity(a, b, tau):
    z = a + b * tau
    th = theta(z, tau)
    scale = max(1.0, abs(th))
    assert abs(theta(z + 1, tau) + th) < 1e-12 * scale
    factor = cmath.exp(-1j * np.pi * tau - 2j * np.pi * z)
    assert abs(theta(z + tau, tau) + factor * th) < 1e-10 * scale
    assert abs(theta(-z, tau) + th) < 1e-12 * scale


@pytest.mark.parametrize("tau", DEFAULT_TAUS)
def test_identity_suite(tau):
    failing = [(c.name, c.value) for c in elliptic_identity_suite(tau) if not c.passed]
    assert not failing


@pytest.mark.parametrize("tau", TAUS)
def test_wp_against_row_summed_lattice(tau):
    for z in cell_grid(tau, 5):
        ref = wp_rows(z, tau)
        assert abs(weierstrass_p(z, tau) - ref) < 1e-8 * abs(ref)


def test_square_lattice_sum_converges_toward_wp():
    z, tau = 0.21 + 0.13j, 1j
    exact = weierstrass_p(z, tau)
    errs = [abs(wp_square(z, tau, n) - exact) for n in (15, 30, 60)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-5 * abs(exact)


def test_eta1_square_lattice_closed_form():
    # Legendre relation on the square lattice gives eta_1 = pi/2
    assert eta1(1j) == pytest.approx(np.pi / 2, abs=1e-14)


@pytest.mark.parametrize("tau", TAUS)
def test_e2_minus_wp_is_two_eta1(tau):
    zs = cell_grid(tau, 4)
    diffs = np.array([eisenstein_e2(z, tau) - wp_rows(z, tau) for z in zs])
    assert np.max(np.abs(diffs - 2 * eta1(tau))) < 1e-10


@pytest.mark.parametrize("tau", [1j, 0.3 + 1.2j])
def test_half_periods(tau):
    e = half_period_values(tau)
    assert abs(sum(e)) < 1e-12 * max(map(abs, e))
    for ei, z in zip(e, half_period_shifts(tau)[1:]):
        assert abs(weierstrass_p_prime(z, tau)) < 1e-9 * max(1, abs(ei)) ** 1.5


@pytest.mark.parametrize("order", [1, 2, 3])
def test_theta_derivatives_by_finite_differences(order):
    tau = 0.3 + 1.2j
    lower = (lambda z: theta(z, tau)) if order == 1 else (lambda z: theta_derivatives(z, tau, order - 1))
    for z in cell_grid(tau, 3):
        exact = theta_derivatives(z, tau, order)
        fd = central_diff(lower, z)
        assert abs(fd - exact) < 1e-7 * max(1.0, abs(exact))


def test_theta_derivative_order_validated():
    with pytest.raises(ValueError):
        theta_derivatives(0.1, 1j, 4)


def test_e1_e2_relations():
    tau = 0.3 + 1.2j
    z = 0.17 + 0.21j
    assert eisenstein_e2(z, tau) == pytest.approx(-central_diff(lambda x: eisenstein_e1(x, tau), z), rel=1e-8)
    assert eisenstein_e2_prime(z, tau) == pytest.approx(central_diff(lambda x: weierstrass_p(x, tau), z), rel=1e-8)
    # E1 picks up -2 pi i under z -> z + tau
    assert eisenstein_e1(z + tau, tau) - eisenstein_e1(z, tau) == pytest.approx(-2j * np.pi, abs=1e-10)


def test_wp_laurent_leading_term():
    tau = 1j
    for h in (1e-3, 1e-4):
        assert h * h * weierstrass_p(h, tau) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("fn", [eisenstein_e1, eisenstein_e2, weierstrass_p, weierstrass_p_prime])
def test_pole_error_on_lattice(fn):
    tau = 0.3 + 1.2j
    with pytest.raises(PoleError) as info:
        fn(1 + tau + 1e-12, tau)
    assert info.value.lattice_point == pytest.approx(1 + tau)
    assert isinstance(info.value, ZeroDivisionError)


def test_nearest_lattice_point_skew():
    tau = -0.4 + 0.9j
    om, d = nearest_lattice_point(2 * tau - 1 + 0.01, tau)
    assert om == pytest.approx(2 * tau - 1)
    assert d == pytest.approx(0.01)


def test_series_convergence_error():
    with pytest.raises(SeriesConvergenceError):
        theta(0.1, 0.002j, SeriesTolerance(1e-14, 8))
    with pytest.raises(ValueError):
        SeriesTolerance(0.0)


def test_phi_quasi_periodicity():
    tau = 0.3 + 1.2j
    u = 0.27 + 0.11j
    for z in cell_grid(tau, 3):
        base = phi_kernel(u, z, tau)
        assert phi_kernel(u, z + 1, tau) == pytest.approx(base, rel=1e-12)
        assert phi_kernel(u, z + tau, tau) == pytest.approx(base * cmath.exp(-2j * np.pi * u), rel=1e-10)


def test_phi_poles_rejected():
    with pytest.raises(PoleError):
        phi_kernel(0.0, 0.2, 1j)
    with pytest.raises(PoleError):
        phi_kernel(0.2, 1.0, 1j)


@pytest.mark.parametrize("tau", [1j, 0.3 + 1.2j])
def test_wp_modular_covariance(tau):
    # p(u / tau | -1/tau) = tau^2 p(u | tau)
    for u in (0.21 + 0.13j, 0.33 - 0.05j):
        assert weierstrass_p(u / tau, -1 / tau) == pytest.approx(tau**2 * weierstrass_p(u, tau), rel=1e-10)


def test_thread_safety_of_shared_modulus():
    from concurrent.futures import ThreadPoolExecutor

    m = EllipticModulus(0.3 + 1.2j)
    zs = cell_grid(m.tau, 6)
    serial = [weierstrass_p(z, m) for z in zs]
    with ThreadPoolExecutor(4) as pool:
        threaded = list(pool.map(lambda z: weierstrass_p(z, m), zs))
    assert serial == threaded
