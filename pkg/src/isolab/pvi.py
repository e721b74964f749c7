"""Painleve VI in rational and elliptic coordinates.

Rational form: X(t) with the classical four-parameter right-hand side.
Elliptic form: u(tau) with d^2u/dtau^2 = dU/du,

    U(u|tau) = (2 pi i)^-2 * sum_j alpha_j p(u + T_j/2 | tau),

(T_0..T_3) = (0, 1, tau, 1 + tau), (alpha_0..alpha_3) = (alpha, -beta, gamma, 1/2 - delta).
The two are related by t = (e3 - e1)/(e2 - e1), X = (p(u) - e1)/(e2 - e1).

At level kappa the constants are rescaled alpha_j -> alpha_j / kappa^2 and the
momentum is v = kappa du/dtau.
"""

from dataclasses import dataclass

import numpy as np

from .elliptic import as_modulus, half_period_values, weierstrass_p, weierstrass_p_prime
from .errors import DegenerateInputError, PoleError
from .integrate import Trajectory, hamiltonian_flow

__all__ = [
    "PviParams",
    "PhaseState",
    "CrossFormResult",
    "family_params",
    "half_period_shifts",
    "potential_u",
    "potential_u_prime",
    "pvi_rational_rhs",
    "elliptic_to_rational",
    "elliptic_rhs",
    "solve_pvi_elliptic",
    "cross_form_residual",
    "cross_form_details",
    "fd_weights",
]

TWO_PI_I_SQ = (2j * np.pi) ** 2
SINGULAR_GUARD = 1e-6


@dataclass(frozen=True)
class PviParams:
    alpha: complex = 0.0
    beta: complex = 0.0
    gamma: complex = 0.0
    delta: complex = 0.0

    @property
    def alphas(self):
        """(alpha_0, ..., alpha_3) = (alpha, -beta, gamma, 1/2 - delta)."""
        return (
            complex(self.alpha),
            complex(-self.beta),
            complex(self.gamma),
            complex(0.5 - self.delta),
        )

    def as_list(self):
        return [complex(self.alpha), complex(self.beta), complex(self.gamma), complex(self.delta)]

    @classmethod
    def from_alphas(cls, a0, a1, a2, a3):
        return cls(a0, -a1, a2, 0.5 - a3)


@dataclass(frozen=True)
class PhaseState:
    v: complex
    u: complex
    tau: complex

    def __post_init__(self):
        if not complex(self.tau).imag > 0:
            raise ValueError(f"PhaseState needs Im(tau) > 0, got {self.tau}")


def family_params(nu):
    """The one-parameter family (nu^2/4, -nu^2/4, nu^2/4, 1/2 - nu^2/4)."""
    s = complex(nu) ** 2 / 4
    return PviParams(s, -s, s, 0.5 - s)


def half_period_shifts(m):
    m = as_modulus(m)
    return np.array([0.0, 0.5, m.tau / 2, (1 + m.tau) / 2], dtype=complex)


def _shifted(u, m):
    return np.asarray(u, dtype=complex)[..., None] + half_period_shifts(m)


def potential_u(u, m, params):
    m = as_modulus(m)
    alphas = np.array(params.alphas)
    scalar = np.ndim(u) == 0
    if not np.any(alphas):
        return 0j if scalar else np.zeros(np.shape(u), dtype=complex)
    vals = weierstrass_p(_shifted(u, m), m)
    out = (vals * alphas).sum(axis=-1) / TWO_PI_I_SQ
    return complex(out) if scalar else out


def potential_u_prime(u, m, params):
    """dU/du."""
    m = as_modulus(m)
    alphas = np.array(params.alphas)
    scalar = np.ndim(u) == 0
    if not np.any(alphas):
        return 0j if scalar else np.zeros(np.shape(u), dtype=complex)
    vals = weierstrass_p_prime(_shifted(u, m), m)
    out = (vals * alphas).sum(axis=-1) / TWO_PI_I_SQ
    return complex(out) if scalar else out


def pvi_rational_rhs(t, x, xdot, params):
    """X'' of Painleve VI at (t, X, X')."""
    t, x, xdot = complex(t), complex(x), complex(xdot)
    for name, val in (("t", t), ("t - 1", t - 1), ("X", x), ("X - 1", x - 1), ("X - t", x - t)):
        if val == 0:
            raise PoleError(f"pvi_rational_rhs: singular factor {name} = 0", point=(t, x))
    a, b, g, d = params.as_list()
    first = 0.5 * (1 / x + 1 / (x - 1) + 1 / (x - t)) * xdot**2
    second = (1 / t + 1 / (t - 1) + 1 / (x - t)) * xdot
    pref = x * (x - 1) * (x - t) / (t**2 * (t - 1) ** 2)
    bracket = a + b * t / x**2 + g * (t - 1) / (x - 1) ** 2 + d * t * (t - 1) / (x - t) ** 2
    return first - second + pref * bracket


def elliptic_to_rational(state):
    """Map (u, tau) to (t, X)."""
    if isinstance(state, PhaseState):
        u, tau = state.u, state.tau
    else:
        u, tau = state
    e1, e2, e3 = half_period_values(tau)
    den = e2 - e1
    if abs(den) < 1e-12 * max(1.0, abs(e1)):
        raise DegenerateInputError(f"degenerate modulus: e1 == e2 at tau={tau}")
    t = (e3 - e1) / den
    x = (weierstrass_p(u, tau) - e1) / den
    return t, x


def elliptic_rhs(u, tau, params, kappa=1.0):
    """d^2u/dtau^2 at level kappa: U'(u|tau) / kappa^2."""
    return potential_u_prime(u, tau, params) / complex(kappa) ** 2


def solve_pvi_elliptic(state0, tau_path, params, kappa=1.0, tol=1e-11):
    """Integrate the elliptic PVI flow along a path in the tau plane.

    States are ``[u, v]`` with ``v = kappa du/dtau``; the path's first waypoint
    must equal ``state0.tau``.
    """
    kappa = complex(kappa)
    if kappa == 0:
        raise ValueError("kappa must be nonzero (use calogero.citv_flow for the critical level)")
    if abs(complex(tau_path.start) - complex(state0.tau)) > 1e-14:
        raise ValueError("tau path must start at state0.tau")
    pts = tau_path.sample_points()
    if np.any(pts.imag <= 0) or any(complex(w).imag <= 0 for w in tau_path.waypoints):
        raise ValueError("tau path leaves the upper half plane")

    def grad(tau, u, v):
        # flow convention: kappa u' = dH/dv, kappa v' = -dH/du; PVI needs kappa v' = +U'
        return v, -potential_u_prime(u[0], tau, params)

    traj = hamiltonian_flow(grad, (state0.u, state0.v), tau_path, kappa, tol)
    traj.meta.update({"kind": "pvi-elliptic", "params": params})
    return traj


def fd_weights(x0, nodes, order):
    """Finite-difference weights at x0 on arbitrary (complex) nodes, Fornberg's recursion."""
    nodes = np.asarray(nodes, dtype=complex)
    n = len(nodes)
    c = np.zeros((n, order + 1), dtype=complex)
    c1 = 1.0
    c4 = nodes[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


@dataclass
class CrossFormResult:
    residual: float
    coverage: float
    t: np.ndarray
    x: np.ndarray
    pointwise: np.ndarray


def cross_form_details(traj, params, stencil=5):
    """Map an elliptic trajectory to (t, X) and measure the rational PVI residual."""
    taus = np.asarray(traj.params, dtype=complex)
    if len(taus) < 64:
        raise ValueError(f"cross-form residual needs >= 64 samples, got {len(taus)}")
    us = np.asarray(traj.states)[:, 0]
    kappa = complex(traj.meta.get("kappa", 1.0))
    eff = PviParams.from_alphas(*(a / kappa**2 for a in params.alphas))
    e = np.array([half_period_values(tau) for tau in taus])
    den = e[:, 1] - e[:, 0]
    ts = (e[:, 2] - e[:, 0]) / den
    xs = np.array([(weierstrass_p(u, tau) - e1) / d for u, tau, e1, d in zip(us, taus, e[:, 0], den)])
    steps = np.diff(ts)
    chord = ts[-1] - ts[0]
    if np.any(np.abs(steps) < 1e-14) or abs(chord) < 1e-14:
        raise DegenerateInputError("t does not vary along the trajectory; use a path moving tau")
    if np.any((steps * np.conj(chord)).real <= 0):
        raise DegenerateInputError("t path is not monotone along the trajectory; reparametrize tau")
    half = stencil // 2
    pointwise = np.full(len(ts), np.nan)
    used = 0
    interior = range(half, len(ts) - half)
    for k in interior:
        t, x = ts[k], xs[k]
        if min(abs(x), abs(x - 1), abs(x - t)) < SINGULAR_GUARD:
            continue
        idx = slice(k - half, k + half + 1)
        d1 = fd_weights(t, ts[idx], 1) @ xs[idx]
        d2 = fd_weights(t, ts[idx], 2) @ xs[idx]
        rhs = pvi_rational_rhs(t, x, d1, eff)
        pointwise[k] = abs(d2 - rhs) / (1 + abs(d2))
        used += 1
    coverage = used / len(interior)
    residual = float(np.nanmax(pointwise)) if used else float("nan")
    return CrossFormResult(residual, coverage, ts, xs, pointwise)


def cross_form_residual(traj, params):
    """max |X'' - PVI(t, X, X')| / (1 + |X''|) over interior samples."""
    return cross_form_details(traj, params).residual
