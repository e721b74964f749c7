"""Odd theta function, Eisenstein functions, Weierstrass p and the kernel phi.

Everything is built from one q-series,

    theta(z|tau) = q^(1/8) sum_n (-1)^n exp(pi i (n(n+1) tau + (2n+1) z)),

with q^(1/8) = exp(pi i tau / 4). Derivatives in z are taken term by term.
All functions accept scalars or numpy arrays for the first argument(s) and
return a Python ``complex`` for scalar input.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from .errors import PoleError, SeriesConvergenceError

__all__ = [
    "EllipticModulus",
    "SeriesTolerance",
    "as_modulus",
    "theta",
    "theta_derivatives",
    "theta_stack",
    "eisenstein_e1",
    "eisenstein_e2",
    "eisenstein_e2_prime",
    "eta1",
    "weierstrass_p",
    "weierstrass_p_prime",
    "half_period_values",
    "phi_kernel",
    "nearest_lattice_point",
    "POLE_TOL",
]

POLE_TOL = 1e-9


@dataclass(frozen=True)
class SeriesTolerance:
    abs_tol: float = 1e-14
    max_terms: int = 512

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.max_terms < 8:
            raise ValueError(f"max_terms must be >= 8, got {self.max_terms}")


DEFAULT_TOL = SeriesTolerance()


@dataclass(frozen=True)
class EllipticModulus:
    """Modulus tau of the torus C/(Z + tau Z), Im(tau) > 0."""

    tau: complex
    _coeff_cache: dict = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        tau = complex(self.tau)
        if not tau.imag > 0:
            raise ValueError(f"modulus must satisfy Im(tau) > 0, got tau={tau}")
        object.__setattr__(self, "tau", tau)

    def __hash__(self):
        return hash(self.tau)

    @cached_property
    def q(self):
        return complex(np.exp(2j * np.pi * self.tau))

    @cached_property
    def q8(self):
        """The fixed branch q^(1/8) = exp(pi i tau / 4)."""
        return complex(np.exp(0.25j * np.pi * self.tau))

    def coefficients(self, n):
        """Series data for indices -n-1..n: (c_k, exponent slopes k)."""
        hit = self._coeff_cache.get(n)
        if hit is None:
            idx = np.arange(-n - 1, n + 1, dtype=float)
            sign = np.where(idx % 2 == 0, 1.0, -1.0)
            c = sign * np.exp(1j * np.pi * (idx * (idx + 1) * self.tau + self.tau / 4))
            k = 1j * np.pi * (2 * idx + 1)
            hit = (c, k)
            self._coeff_cache[n] = hit
        return hit


def as_modulus(m):
    if isinstance(m, EllipticModulus):
        return m
    return EllipticModulus(complex(m))


def _scalar_or_array(values, scalar):
    if scalar:
        return complex(values)
    return values


def _initial_half_width(m, y_max, order, tol):
    # smallest n with the outermost term magnitude comfortably below abs_tol
    target = math.log(1.0 / tol.abs_tol) + math.log(100.0)
    t = m.tau.imag
    n = 2
    while True:
        expo = math.pi * t * (n + 0.5) ** 2 - math.pi * (2 * n + 1) * y_max - math.pi * t / 4
        expo -= order * math.log(math.pi * (2 * n + 1))
        if expo > target or 2 * n + 2 >= tol.max_terms:
            return n
        n += 1


def theta_stack(z, m, orders=(0,), tol=DEFAULT_TOL):
    """Return [theta^(d)(z) for d in orders], summed from a single exponential table."""
    m = as_modulus(m)
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=complex)
    y_max = float(np.max(np.abs(z.imag))) if z.size else 0.0
    top = max(orders)
    n = _initial_half_width(m, y_max, top, tol)
    while True:
        n_terms = 2 * n + 2
        if n_terms > tol.max_terms:
            raise SeriesConvergenceError(abs(m.q), n_terms)
        c, k = m.coefficients(n)
        base = c * np.exp(k * z[..., None])
        sums = [np.sum(base * k**d, axis=-1) if d else np.sum(base, axis=-1) for d in orders]
        edge = np.abs(base[..., [0, 1, -2, -1]] * k[[0, 1, -2, -1]] ** top).max(axis=-1)
        scale = np.maximum(1.0, np.abs(sums[orders.index(top)]))
        if np.all(edge <= tol.abs_tol * scale):
            return [_scalar_or_array(s, scalar) for s in sums]
        n = n + max(4, n // 2)


def theta(z, m, tol=DEFAULT_TOL):
    """Odd theta function theta(z|tau)."""
    return theta_stack(z, m, (0,), tol)[0]


def theta_derivatives(z, m, order, tol=DEFAULT_TOL):
    """d^order theta / dz^order, differentiated term by term (order 1..3)."""
    if order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    return theta_stack(z, m, (order,), tol)[0]


def nearest_lattice_point(z, m):
    """Nearest point of Z + tau Z to z, and the distance to it."""
    m = as_modulus(m)
    z = np.asarray(z, dtype=complex)
    b = np.round(z.imag / m.tau.imag)
    a = np.round(z.real - b * m.tau.real)
    omega = a + b * m.tau
    # the rounded coordinates can miss the true nearest point for skew lattices
    best = omega
    dist = np.abs(z - omega)
    for da in (-1, 0, 1):
        for db in (-1, 0, 1):
            cand = omega + da + db * m.tau
            d = np.abs(z - cand)
            better = d < dist
            best = np.where(better, cand, best)
            dist = np.where(better, d, dist)
    return best, dist


def _check_poles(z, m, what):
    omega, dist = nearest_lattice_point(z, m)
    if np.any(dist < POLE_TOL):
        i = int(np.argmin(dist)) if np.ndim(dist) else 0
        zz = np.ravel(np.asarray(z))[i] if np.ndim(z) else complex(z)
        om = np.ravel(omega)[i] if np.ndim(omega) else complex(omega)
        raise PoleError(
            f"{what}: argument {complex(zz)} lies on the lattice point {complex(om)}",
            point=complex(zz),
            lattice_point=complex(om),
        )


def eisenstein_e1(z, m):
    """E1(z) = theta'(z)/theta(z)."""
    m = as_modulus(m)
    _check_poles(z, m, "eisenstein_e1")
    th, th1 = theta_stack(z, m, (0, 1))
    return th1 / th


def eisenstein_e2(z, m):
    """E2(z) = -E1'(z) = E1(z)^2 - theta''(z)/theta(z)."""
    m = as_modulus(m)
    _check_poles(z, m, "eisenstein_e2")
    th, th1, th2 = theta_stack(z, m, (0, 1, 2))
    e1 = th1 / th
    return e1 * e1 - th2 / th


def eisenstein_e2_prime(z, m):
    """dE2/dz, equal to the derivative of Weierstrass p."""
    m = as_modulus(m)
    _check_poles(z, m, "eisenstein_e2_prime")
    th, th1, th2, th3 = theta_stack(z, m, (0, 1, 2, 3))
    e1 = th1 / th
    r2 = th2 / th
    r3 = th3 / th
    # E1' = r2 - E1^2 ;  E2' = -E1'' = -(r3 - r2 E1) + 2 E1 E1'
    de1 = r2 - e1 * e1
    return -(r3 - r2 * e1) + 2 * e1 * de1


def _theta_prime_zero(m):
    key = "theta_prime_zero"
    hit = m._coeff_cache.get(key)
    if hit is None:
        hit = theta_stack(0.0, m, (1, 3))
        m._coeff_cache[key] = hit
    return hit


def eta1(m):
    """eta_1(tau) = zeta(1/2), computed as -theta'''(0) / (6 theta'(0))."""
    m = as_modulus(m)
    t1, t3 = _theta_prime_zero(m)
    return -t3 / (6 * t1)


def weierstrass_p(z, m):
    m = as_modulus(m)
    return eisenstein_e2(z, m) - 2 * eta1(m)


def weierstrass_p_prime(z, m):
    return eisenstein_e2_prime(z, m)


def half_period_values(m):
    """(e1, e2, e3) = (p(1/2), p(tau/2), p((1+tau)/2))."""
    m = as_modulus(m)
    vals = weierstrass_p(np.array([0.5, m.tau / 2, (1 + m.tau) / 2]), m)
    return complex(vals[0]), complex(vals[1]), complex(vals[2])


def phi_kernel(u, z, m):
    """phi(u, z) = theta(u+z) theta'(0) / (theta(u) theta(z))."""
    m = as_modulus(m)
    _check_poles(u, m, "phi_kernel (theta(u) = 0)")
    _check_poles(z, m, "phi_kernel (theta(z) = 0)")
    scalar = np.ndim(u) == 0 and np.ndim(z) == 0
    u_arr, z_arr = np.broadcast_arrays(np.asarray(u, dtype=complex), np.asarray(z, dtype=complex))
    th = theta(np.stack([u_arr + z_arr, u_arr, z_arr]), m)
    t1 = _theta_prime_zero(m)[0]
    out = th[0] * t1 / (th[1] * th[2])
    return _scalar_or_array(out, scalar)
