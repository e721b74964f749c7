import cmath

import numpy as np
import pytest

from isolab.errors import IntegrationError
from isolab.integrate import (
    PathSpec,
    circle_loop,
    hamiltonian_flow,
    integrate_path,
    monodromy,
    straight_path,
)


def test_pathspec_validation():
    with pytest.raises(ValueError):
        PathSpec((0.0,))
    with pytest.raises(ValueError):
        PathSpec((0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        PathSpec((0.0, 1.0), 1)


def test_pathspec_samples_and_reverse():
    p = PathSpec((0, 1, 1 + 1j), 5)
    pts = p.sample_points()
    assert len(pts) == 9
    assert pts[4] == 1 and pts[-1] == 1 + 1j
    assert p.length == pytest.approx(2.0)
    assert p.reversed().waypoints == (1 + 1j, 1, 0)
    assert circle_loop(0, 1).closed and not p.closed


def test_exponential():
    tr = integrate_path(lambda s, y: y, straight_path(0, 1), 1.0, tol=1e-12)
    assert abs(tr.end_state - np.e) < 1e-10
    assert tr.accepted_steps > 0


def test_zero_rhs_is_constant():
    y0 = np.array([1 + 2j, -3.0])
    tr = integrate_path(lambda s, y: np.zeros_like(y), PathSpec((0, 1j, 2 + 1j)), y0)
    assert np.all(tr.states == y0)


def test_rotation_to_minus_one():
    tr = integrate_path(lambda s, y: 1j * y, straight_path(0, np.pi), 1.0, tol=1e-11)
    assert abs(tr.end_state + 1) < 1e-9


def test_complex_path_solves_holomorphic_ode():
    # y' = y along an L-shaped complex path ends at exp(endpoint)
    tr = integrate_path(lambda s, y: y, PathSpec((0, 0.5, 0.5 + 1j)), 1.0, tol=1e-12)
    assert abs(tr.end_state - cmath.exp(0.5 + 1j)) < 1e-10
    assert np.allclose(tr.states, np.exp(tr.params), atol=1e-10)


def test_step_underflow_reports_parameter():
    # y' = y^2, y(0) = 1 blows up at s = 1
    with pytest.raises(IntegrationError) as info:
        integrate_path(lambda s, y: y * y, straight_path(0, 2), 1.0, tol=1e-10)
    assert abs(info.value.param - 1.0) < 1e-2


def test_self_convergence():
    rhs = lambda s, y: np.array([y[1], -np.sin(y[0])])  # noqa: E731
    path = PathSpec((0, 2, 4 + 0.5j))
    a = integrate_path(rhs, path, np.array([0.5, 0.1]), tol=1e-10).end_state
    b = integrate_path(rhs, path, np.array([0.5, 0.1]), tol=1e-12).end_state
    assert np.max(np.abs(a - b)) < 10 * 1e-10


def test_monodromy_identity_for_zero_connection():
    rep = monodromy(lambda w: np.zeros((2, 2)), 1.0, circle_loop(0, 1))
    assert np.allclose(rep.monodromy, np.eye(2), atol=1e-13)


@pytest.mark.parametrize("a", [0.13, 0.3 + 0.1j])
def test_diagonal_monodromy_closed_form(a):
    p = np.diag([a, -a])
    rep = monodromy(lambda w: p / (w - 0.2), 1.0, circle_loop(0.2, 0.5))
    expected = sorted([cmath.exp(-2j * np.pi * a), cmath.exp(2j * np.pi * a)], key=lambda z: (round(z.real, 12), round(z.imag, 12)))
    assert np.allclose(rep.eigenvalues, expected, atol=1e-8)


def test_diagonal_monodromy_kappa_enters_as_p_over_kappa():
    a, kappa = 0.13, 2.0
    p = np.diag([a, -a])
    rep = monodromy(lambda w: p / w, kappa, circle_loop(0, 1))
    assert np.allclose(np.diag(rep.monodromy), [cmath.exp(-2j * np.pi * a / kappa), cmath.exp(2j * np.pi * a / kappa)], atol=1e-8)


def _two_pole(seed=3):
    rng = np.random.default_rng(seed)
    p = 0.3 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    p -= np.trace(p) / 2 * np.eye(2)
    q = 0.3 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    q -= np.trace(q) / 2 * np.eye(2)
    return lambda w: p / (w - 0.4) + q / (w + 0.4)


def test_two_pole_determinant_and_reference():
    conn = _two_pole()
    loop = circle_loop(0, 1.2)
    rep = monodromy(conn, 1.0, loop, tol=1e-10)
    ref = monodromy(conn, 1.0, loop, tol=1e-12)
    assert abs(np.linalg.det(rep.monodromy) - 1) < 1e-8
    assert np.allclose(rep.eigenvalues, ref.eigenvalues, atol=1e-8)


def test_monodromy_basepoint_independence():
    conn = _two_pole()
    a = monodromy(conn, 1.0, circle_loop(0, 1.2, start_angle=0.0))
    b = monodromy(conn, 1.0, circle_loop(0, 1.2, start_angle=2.0))
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-8)


def test_monodromy_orientation_inverts():
    conn = _two_pole()
    loop = circle_loop(0, 1.2)
    fwd = monodromy(conn, 1.0, loop)
    back = monodromy(conn, 1.0, loop.reversed())
    assert np.allclose(fwd.monodromy @ back.monodromy, np.eye(2), atol=1e-8)


def test_monodromy_requires_closed_loop():
    with pytest.raises(ValueError):
        monodromy(lambda w: np.zeros((2, 2)), 1.0, straight_path(0, 1))
    with pytest.raises(ValueError):
        monodromy(lambda w: np.zeros((2, 2)), 0.0, circle_loop(0, 1))


def test_report_serializes():
    rep = monodromy(lambda w: np.zeros((2, 2)), 1.0, circle_loop(0, 1, vertices=8))
    d = rep.to_dict()
    assert d["eigenvalues"][0] == [1.0, 0.0]


def test_free_motion():
    tr = hamiltonian_flow(lambda t, u, v: (v, 0 * u), (0.5, 2.0), straight_path(0, 3), 1.0)
    assert tr.end_state[0] == pytest.approx(0.5 + 6.0, abs=1e-12)
    assert tr.end_state[1] == pytest.approx(2.0)


def _oscillator(kappa, periods, tol=1e-11):
    path = straight_path(0, 2 * np.pi * periods, 400)
    return hamiltonian_flow(lambda t, u, v: (v, u), (1.0, 0.0), path, kappa, tol)


def test_harmonic_energy_drift():
    tr = _oscillator(1.0, 10)
    energy = 0.5 * (tr.states[:, 0] ** 2 + tr.states[:, 1] ** 2)
    assert np.max(np.abs(energy - energy[0])) < 1e-9


def test_kappa_halves_frequency():
    t = np.linspace(0, 4 * np.pi, 9)
    tr = hamiltonian_flow(lambda s, u, v: (v, u), (1.0, 0.0), PathSpec((0, 4 * np.pi), 9), 2.0, 1e-11)
    assert np.allclose(tr.states[:, 0], np.cos(t / 2), atol=1e-9)
