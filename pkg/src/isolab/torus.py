"""Genus-one isomonodromy for sl_N: Cartan data, elliptic Lax matrix, Hamiltonians, symmetries.

Roots of sl_N are realised as e_i - e_j; the root component of a residue is its
(i, j) matrix entry and the Cartan part is the diagonal with the trace removed.
Cartan vectors (u, v) are stored as length-N traceless diagonals, so sl_2
uses u = (u, -u).

Full dynamics is provided for sl_2 with one marked point (the torus form of
the Painleve VI family); the Hamiltonians are evaluated for any sl_N and n.
"""

from dataclasses import dataclass

import numpy as np

from .elliptic import (
    as_modulus,
    eisenstein_e1,
    eisenstein_e2,
    eisenstein_e2_prime,
    phi_kernel,
    theta,
    theta_derivatives,
)
from .errors import PoleError
from .integrate import hamiltonian_flow, integrate_path
from .pvi import elliptic_rhs, family_params

__all__ = [
    "TorusTimes",
    "CartanState",
    "OrbitResidue",
    "sl2_state",
    "rank_one_orbit",
    "cartan_part",
    "root_part",
    "lbar_connection",
    "lax_l_elliptic",
    "sl2_lax_transcription",
    "hamiltonians_prop51",
    "torus_flow_rhs",
    "integrate_torus_flow",
    "lattice_action",
    "lattice_phase",
    "modular_action",
    "moment_cartan_check",
    "fit_pvi_proportionality",
    "holomorphic_derivative",
    "calibrated_hamiltonian_flow",
]


@dataclass(frozen=True)
class TorusTimes:
    """Reference modulus tau0, deformed modulus tau and marked points x_a.

    ``mu_tilde`` is the deformation size (tau - tau0)/rho with rho = tau0 - conj(tau0).
    """

    tau0: complex
    tau: complex
    x: tuple = (0.0,)

    def __post_init__(self):
        tau0, tau = complex(self.tau0), complex(self.tau)
        if tau0.imag <= 0 or tau.imag <= 0:
            raise ValueError("TorusTimes needs Im(tau0) > 0 and Im(tau) > 0")
        xs = tuple(complex(x) for x in self.x)
        m = as_modulus(tau)
        for i in range(len(xs)):
            for j in range(i + 1, len(xs)):
                d = xs[i] - xs[j]
                b = round(d.imag / tau.imag)
                a = round((d - b * tau).real)
                if abs(d - a - b * m.tau) < 1e-9:
                    raise ValueError(f"marked points {i} and {j} coincide modulo the lattice")
        object.__setattr__(self, "tau0", tau0)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "x", xs)

    @property
    def rho(self):
        return self.tau0 - self.tau0.conjugate()

    @property
    def mu_tilde(self):
        return (self.tau - self.tau0) / self.rho

    def with_tau(self, tau):
        return TorusTimes(self.tau0, tau, self.x)


@dataclass(frozen=True)
class CartanState:
    u: tuple
    v: tuple

    def __post_init__(self):
        u = tuple(complex(z) for z in np.atleast_1d(self.u))
        v = tuple(complex(z) for z in np.atleast_1d(self.v))
        if len(u) != len(v):
            raise ValueError("u and v must have the same length")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def rank(self):
        return len(self.u) - 1

    def u_vec(self):
        return np.array(self.u)

    def v_vec(self):
        return np.array(self.v)


def sl2_state(u, v):
    return CartanState((u, -u), (v, -v))


def cartan_part(p):
    p = np.asarray(p, dtype=complex)
    d = np.diag(p).copy()
    return d - d.sum() / len(d)


def root_part(p, i, j):
    """Component of p along the root e_i - e_j."""
    if i == j:
        raise ValueError("roots need i != j")
    return complex(np.asarray(p)[i, j])


@dataclass(frozen=True)
class OrbitResidue:
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("residue must be a square matrix")
        if abs(np.trace(mat)) > 1e-9 * max(1.0, float(np.abs(mat).max())):
            raise ValueError("residue must be traceless")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def cartan_part(self):
        return cartan_part(self.matrix)

    def root_part(self, i, j):
        return root_part(self.matrix, i, j)


def _matrix(p):
    return p.matrix if isinstance(p, OrbitResidue) else np.asarray(p, dtype=complex)


def rank_one_orbit(nu, n=2):
    """nu [(1,...,1)^T (1,...,1) - Id]."""
    return complex(nu) * (np.ones((n, n)) - np.eye(n))


def lbar_connection(state, times):
    """Lbar = 2 pi i (1 - mu_tilde)/rho diag(u)."""
    return 2j * np.pi * (1 - times.mu_tilde) / times.rho * np.diag(state.u_vec())


def lax_l_elliptic(w, wbar, state, residues, times, kappa=1.0):
    """Lax matrix L = P + X on the deformed torus (w, wbar independent arguments)."""
    w, wbar = complex(w), complex(wbar)
    u, v = state.u_vec(), state.v_vec()
    mats = [_matrix(p) for p in residues]
    n = len(u)
    if len(mats) != len(times.x):
        raise ValueError("one residue per marked point is required")
    mt = times.mu_tilde
    m = as_modulus(times.tau)
    diag = v / (1 - mt) - complex(kappa) * u / times.rho
    for p, xa in zip(mats, times.x):
        cp = cartan_part(p)
        if np.any(cp != 0):
            try:
                diag = diag + cp * eisenstein_e1(w - xa, m)
            except PoleError as exc:
                raise PoleError(f"lax_l_elliptic: w hits marked point {xa}", point=w) from exc
    out = np.diag(2j * np.pi * diag).astype(complex)
    denom = times.tau - times.tau0.conjugate()
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            alpha_u = u[i] - u[j]
            acc = 0j
            for a, (p, xa) in enumerate(zip(mats, times.x)):
                if p[i, j] == 0:
                    continue
                expo = np.exp(2j * np.pi * ((w - xa) - (wbar - xa.conjugate())) / denom * alpha_u)
                try:
                    acc += p[i, j] * expo * phi_kernel(alpha_u, w - xa, m)
                except PoleError as exc:
                    raise PoleError(
                        f"lax_l_elliptic: root ({i},{j}) at pole {a}: {exc}", point=w
                    ) from exc
            out[i, j] = 2j * np.pi / (1 - mt) * acc
    return out


def sl2_lax_transcription(w, wbar, u, v, nu, times, kappa=1.0):
    """Direct transcription of the sl_2, one-point Lax matrix (marked point at 0)."""
    mt = times.mu_tilde
    rho = times.rho
    tau = times.tau

    def th(z):
        return theta(z, tau)

    dth0 = theta_derivatives(0.0, tau, 1)

    def x_entry(uu):
        phi = th(2 * uu + w) * dth0 / (th(2 * uu) * th(w))
        return nu / (1 - mt) * np.exp(4j * np.pi * (w - wbar) * uu * (1 - mt) / rho) * phi

    a = v / (1 - mt) - kappa * u / rho
    return 2j * np.pi * np.array([[a, x_entry(u)], [x_entry(-u), -a]], dtype=complex)


def _theta_ratio(alpha_u, d, m, th1_0):
    return theta(-alpha_u + d, m) * th1_0 / (theta(alpha_u, m) * theta(d, m))


def hamiltonians_prop51(state, residues, times, kappa=1.0, c=0.5):
    """H_{2,a}, H_{1,a} and H_tau for the genus-one system.

    Bracket readings used for the printed formulas: the doubled '=' in H_{1,a}
    is dropped, and the last factor of H_tau is read as
    E1(alpha(u)) - E1(x_b - x_a + alpha(u)) - E1(x_b - x_a).
    """
    u, v = state.u_vec(), state.v_vec()
    mats = [_matrix(p) for p in residues]
    xs = times.x
    n_pts = len(mats)
    N = len(u)
    m = as_modulus(times.tau)
    th1_0 = theta_derivatives(0.0, m, 1)
    carts = [cartan_part(p) for p in mats]
    roots = [(i, j) for i in range(N) for j in range(N) if i != j]
    shift = v / (1 - times.mu_tilde) - complex(kappa) * u / times.rho

    h2 = [c * complex(np.trace(p @ p)) for p in mats]
    h1 = []
    for a in range(n_pts):
        val = 2 * complex(np.dot(shift, carts[a]))
        for b in range(n_pts):
            if b == a:
                continue
            d = xs[a] - xs[b]
            val += complex(np.dot(carts[a], carts[b])) * eisenstein_e1(d, m)
            for i, j in roots:
                coef = mats[a][i, j] * mats[b][j, i]
                if coef != 0:
                    val += coef * _theta_ratio(u[i] - u[j], d, m, th1_0)
        h1.append(complex(val))

    htau = complex(np.dot(v, v)) / 2
    for a in range(n_pts):
        for i, j in roots:
            coef = mats[a][i, j] * mats[a][j, i]
            if coef != 0:
                htau += coef * eisenstein_e2(u[i] - u[j], m)
    for a in range(n_pts):
        for b in range(n_pts):
            if a == b:
                continue
            d = xs[a] - xs[b]
            cc = complex(np.dot(carts[a], carts[b]))
            if cc != 0:
                e1 = eisenstein_e1(d, m)
                htau += cc * (eisenstein_e2(d, m) - e1 * e1)
            for i, j in roots:
                coef = mats[a][i, j] * mats[b][j, i]
                if coef == 0:
                    continue
                al = u[i] - u[j]
                ratio = _theta_ratio(al, d, m, th1_0)
                bracket = eisenstein_e1(al, m) - eisenstein_e1(-d + al, m) - eisenstein_e1(-d, m)
                htau += coef * ratio * bracket
    return {"H2": h2, "H1": h1, "Htau": complex(htau)}


def torus_flow_rhs(u, tau, nu, kappa=1.0):
    """d^2u/dtau^2 = (2 nu^2/kappa^2) d/du E2(2u|tau)."""
    return 4 * complex(nu) ** 2 / complex(kappa) ** 2 * eisenstein_e2_prime(2 * u, tau)


def integrate_torus_flow(state0, nu, tau_path, kappa=1.0, tol=1e-11):
    """Integrate the sl_2 one-point torus flow as a first-order system in (u, du/dtau).

    ``state0`` is either ``(u, du/dtau)`` or an sl_2 ``CartanState``; in the latter
    case du/dtau = 2 v / kappa (the flow of H_tau = v^2 + U).
    """
    if isinstance(state0, CartanState):
        u0, du0 = state0.u[0], 2 * state0.v[0] / complex(kappa)
    else:
        u0, du0 = state0
    pts = tau_path.sample_points()
    if np.any(pts.imag <= 0):
        raise ValueError("tau path leaves the upper half plane")
    nu = complex(nu)

    def rhs(tau, y):
        if nu == 0:
            return np.array([y[1], 0j])
        return np.array([y[1], torus_flow_rhs(y[0], tau, nu, kappa)])

    traj = integrate_path(rhs, tau_path, np.array([u0, du0], dtype=complex), tol)
    traj.meta.update({"kind": "torus", "nu": nu, "kappa": complex(kappa)})
    return traj


def lattice_phase(n_alpha, x_a, tau0):
    """Phase exp(4 pi i/rho [(m - n conj(tau0) x) - (m - n tau0 conj(x))]) on a root component."""
    tau0 = complex(tau0)
    x_a = complex(x_a)
    rho = tau0 - tau0.conjugate()
    return complex(np.exp(4j * np.pi / rho * n_alpha * (tau0 * x_a.conjugate() - tau0.conjugate() * x_a)))


def lattice_action(state, residues, m, n, times, kappa=1.0):
    """u -> u + m - n tau, v -> v - kappa n, root components scaled by the lattice phase."""
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    u = state.u_vec() + m - n * times.tau
    v = state.v_vec() - complex(kappa) * n
    out = []
    for p, xa in zip(residues, times.x):
        p = _matrix(p).copy()
        N = p.shape[0]
        for i in range(N):
            for j in range(N):
                if i != j and p[i, j] != 0:
                    p[i, j] *= lattice_phase(n[i] - n[j], xa, times.tau0)
        out.append(p)
    return CartanState(tuple(u), tuple(v)), out


def modular_action(state, times, mobius, kappa=1.0):
    """PSL_2(Z) action: v -> v(c tau + d) - kappa c u, u -> u/(c tau + d), tau -> (a tau + b)/(c tau + d), x -> x/(c tau + d)."""
    a, b, c, d = mobius
    if a * d - b * c != 1:
        raise ValueError("mobius matrix must have determinant 1")
    j = c * times.tau + d
    if j == 0:
        raise ValueError("c tau + d vanishes")
    u = state.u_vec() / j
    v = state.v_vec() * j - complex(kappa) * c * state.u_vec()
    tau = (a * times.tau + b) / j
    xs = tuple(x / j for x in times.x)
    return CartanState(tuple(u), tuple(v)), TorusTimes(times.tau0, tau, xs)


def moment_cartan_check(residues):
    """|| sum_a (p_a)_H ||."""
    total = sum(cartan_part(_matrix(p)) for p in residues)
    return float(np.linalg.norm(total))


def fit_pvi_proportionality(nu, us, taus, kappa=1.0):
    """Fit the torus RHS as c times the PVI family RHS over a (u, tau) grid.

    Returns (c, relative spread, nu_prime) where the torus flow equals the
    PVI family flow with coupling nu_prime (nu_prime^2 = c nu^2).
    """
    params = family_params(nu)
    ratios = []
    for tau in taus:
        for u in us:
            ratios.append(torus_flow_rhs(u, tau, nu, kappa) / elliptic_rhs(u, tau, params, kappa))
    ratios = np.array(ratios)
    c = complex(np.mean(ratios))
    spread = float(np.max(np.abs(ratios - c)) / abs(c))
    return c, spread, complex(np.sqrt(c) * nu)


def holomorphic_derivative(f, z, radius=0.02, points=16):
    """f'(z) by the trapezoid rule on a small circle (Cauchy integral formula)."""
    k = np.arange(points)
    roots = np.exp(2j * np.pi * k / points)
    vals = np.array([f(z + radius * r) for r in roots])
    return complex(np.sum(vals / roots) / (points * radius))


def calibrated_hamiltonian_flow(u0, v0, residues, times, tau_path, kappa=1.0, scale=1.0, tol=1e-11):
    """Flow of H = v^2 + (H_tau - v^2)/scale for sl_2 with the Hamiltonian flow convention.

    H_tau is evaluated from ``hamiltonians_prop51`` at each tau on the path;
    ``scale`` is the calibration constant relating its potential to the
    one-point torus potential.
    """

    def potential(u, tau):
        st = sl2_state(u, 0.0)
        return hamiltonians_prop51(st, residues, times.with_tau(tau), kappa)["Htau"]

    def grad(tau, u, v):
        dpot = holomorphic_derivative(lambda z: potential(z, tau), u[0])
        return 2 * v, np.array([dpot / scale])

    traj = hamiltonian_flow(grad, (u0, v0), tau_path, kappa, tol)
    traj.meta["kind"] = "literal-hamiltonian-flow"
    return traj
