"""Critical level: the autonomous rank-one CITV equation, elliptic Calogero, and the kappa -> 0 fit.

Sign conventions follow the PVI module: the elliptic PVI flow is
u'' = U'(u|tau)/kappa^2, so its frozen-modulus limit is u'' = U'(u|tau0), whose
conserved energy is v^2/2 - U. The N-body system uses the standard pair
potential, H = sum v_i^2/2 + nu^2 sum_{i<j} p(u_i - u_j | tau0), under the
Hamiltonian flow convention du/dt = dH/dv, dv/dt = -dH/du.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import os

import numpy as np

from .elliptic import EllipticModulus, as_modulus, weierstrass_p, weierstrass_p_prime
from .errors import CollisionError
from .integrate import PathSpec, hamiltonian_flow, straight_path
from .pvi import PhaseState, family_params, potential_u, potential_u_prime, solve_pvi_elliptic

__all__ = [
    "CalogeroState",
    "citv_flow",
    "citv_energy",
    "calogero_flow",
    "calogero_hamiltonian",
    "citv_coupling_for_calogero",
    "scaling_limit_fit",
    "ScalingFit",
    "max_workers",
    "ROUNDING_FLOOR",
]

ROUNDING_FLOOR = 1e-12


def max_workers():
    """Parallelism cap from ISOLAB_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("ISOLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class CalogeroState:
    u: tuple
    v: tuple
    tau0: EllipticModulus
    nu: complex

    def __post_init__(self):
        u = tuple(complex(z) for z in self.u)
        v = tuple(complex(z) for z in self.v)
        if len(u) != len(v) or len(u) < 2:
            raise ValueError("need at least two particles with one momentum each")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "tau0", as_modulus(self.tau0))
        object.__setattr__(self, "nu", complex(self.nu))


def citv_flow(u0, v0, tau0, params, t_path, tol=1e-11):
    """u'' = dU/du(u|tau0) with frozen modulus; states are [u, v = du/dt]."""
    m = as_modulus(tau0)

    def grad(t, u, v):
        return v, -potential_u_prime(u[0], m, params)

    traj = hamiltonian_flow(grad, (u0, v0), t_path, 1.0, tol)
    traj.meta.update({"kind": "citv", "params": params, "tau0": m.tau})
    return traj


def citv_energy(u, v, tau0, params):
    """Conserved energy v^2/2 - U(u|tau0) of the CITV flow."""
    return v * v / 2 - potential_u(u, tau0, params)


def calogero_hamiltonian(u, v, tau0, nu):
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    i, j = np.triu_indices(len(u), 1)
    return complex(np.sum(v * v) / 2 + complex(nu) ** 2 * np.sum(weierstrass_p(u[i] - u[j], tau0)))


def calogero_flow(state0, t_path, tol=1e-11, guard=1e-6):
    """Elliptic Calogero N-body flow; states are [u_1..u_N, v_1..v_N]."""
    m = state0.tau0
    nu2 = state0.nu**2
    n = len(state0.u)
    i, j = np.triu_indices(n, 1)

    def grad(t, u, v):
        d = u[i] - u[j]
        if np.any(np.abs(d) < guard):
            k = int(np.argmin(np.abs(d)))
            raise CollisionError(
                f"particles {i[k]} and {j[k]} collide", pair=(int(i[k]), int(j[k])), param=t
            )
        force = np.zeros(n, dtype=complex)
        if nu2 != 0:
            pp = weierstrass_p_prime(d, m)
            np.add.at(force, i, nu2 * pp)
            np.add.at(force, j, -nu2 * pp)
        return v, force

    traj = hamiltonian_flow(grad, (state0.u, state0.v), t_path, 1.0, tol)
    traj.meta.update({"kind": "calogero", "nu": state0.nu, "tau0": m.tau})
    return traj


def citv_coupling_for_calogero(nu):
    """CITV family coupling whose flow is half the N=2 Calogero relative coordinate.

    With r = u_1 - u_2 = 2u, r'' = -2 nu^2 p'(r) matches u'' = U'(u) of the
    family with nu_f^2 = 2 pi^2 nu^2.
    """
    return complex(np.sqrt(2.0) * np.pi * complex(nu))


@dataclass
class ScalingFit:
    kappas: list
    distances: list
    fitted_order: float

    def to_dict(self):
        return {"kappas": list(self.kappas), "distances": list(self.distances), "fitted_order": self.fitted_order}


def _distance_for_kappa(kappa, u0, v0, params, tau0, horizon, samples, tol, citv_states):
    path = straight_path(tau0, tau0 + kappa * horizon, samples)
    traj = solve_pvi_elliptic(PhaseState(v0, u0, tau0), path, params, kappa, tol)
    return float(np.max(np.abs(traj.states - citv_states)))


def scaling_limit_fit(u0, v0, nu, tau0, kappas=(0.2, 0.1, 0.05, 0.025), horizon=1.0,
                      tol=1e-11, samples=65):
    """Compare the level-kappa PVI flow on tau = tau0 + kappa t to the frozen CITV flow.

    Returns sup-norm distances of (u, v) over t in [0, horizon] for each kappa
    and the least-squares slope of log(distance) against log(kappa). The slope
    is NaN when every distance is below ``ROUNDING_FLOOR``.
    """
    kappas = [float(k) for k in kappas]
    if any(k <= 0 for k in kappas):
        raise ValueError("kappas must be positive")
    if any(b >= a for a, b in zip(kappas, kappas[1:])):
        raise ValueError("kappas must be strictly decreasing")
    if min(kappas) < 1e-3:
        raise ValueError("smallest kappa must be >= 1e-3")
    tau0 = complex(tau0)
    params = family_params(nu)
    citv = citv_flow(u0, v0, tau0, params, straight_path(0.0, horizon, samples), tol)

    def one(k):
        return _distance_for_kappa(k, u0, v0, params, tau0, horizon, samples, tol, citv.states)

    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        distances = list(pool.map(one, kappas))
    d = np.array(distances)
    if np.all(d < ROUNDING_FLOOR):
        # both flows coincide (e.g. nu = 0); a slope through rounding noise means nothing
        order = float("nan")
    else:
        order = float(np.polyfit(np.log(kappas), np.log(d), 1)[0])
    return ScalingFit(kappas, distances, order)
