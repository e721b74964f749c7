"""Numeric identity suite for the theta-based special functions.

Every check returns a ``CheckResult``; the CLI ``fn --check`` command and the
test suite both run these.
"""

from dataclasses import dataclass

import numpy as np

from .elliptic import (
    as_modulus,
    eisenstein_e2,
    eta1,
    half_period_values,
    phi_kernel,
    theta,
    theta_derivatives,
    weierstrass_p,
    weierstrass_p_prime,
)

__all__ = ["CheckResult", "cell_grid", "elliptic_identity_suite", "DEFAULT_TAUS"]

DEFAULT_TAUS = (1j, 1.5j, 0.3 + 1.2j)


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    mode: str = "lt"

    def to_dict(self):
        v = self.value if np.isfinite(self.value) else None
        return {"name": self.name, "value": v, "threshold": self.threshold,
                "passed": self.passed, "mode": self.mode}


def make_check(name, value, threshold, mode="lt"):
    value = float(value)
    if mode == "lt":
        ok = bool(np.isfinite(value) and value < threshold)
    elif mode == "ge":
        ok = bool(np.isfinite(value) and value >= threshold)
    elif mode == "le":
        ok = bool(np.isfinite(value) and value <= threshold)
    else:
        raise ValueError(f"unknown check mode {mode!r}")
    return CheckResult(name, value, float(threshold), ok, mode)


def cell_grid(tau, n=5):
    """n x n grid a + b tau over the fundamental cell centred on the origin.

    Fractions are (j + 1/2)/n - 1/2 nudged by 0.07 so that z = 0 is avoided.
    Centring keeps |exp(-2 pi i z)| moderate; on [0, 1)^2 the factor in the
    tau-shift identity reaches ~1e6 and rounding alone exceeds 1e-10.
    """
    f = (np.arange(n) + 0.5) / n - 0.5 + 0.07
    a, b = np.meshgrid(f, f)
    return (a + b * complex(tau)).ravel()


def _rel(diff, ref):
    return float(np.max(np.abs(diff) / np.maximum(1.0, np.abs(ref))))


def _phi_residue_limit(u, m):
    # z phi(u, z) at z = h, h/2, h/4, ...; Richardson on the O(z) error
    hs = 1e-3 * 0.5 ** np.arange(4)
    vals = np.array([h * phi_kernel(u, h, m) for h in hs])
    for k in range(1, len(vals)):
        vals = (2**k * vals[1:] - vals[:-1]) / (2**k - 1)
    return complex(vals[0])


def elliptic_identity_suite(tau, n=5):
    """Quasi-periodicity, parity, periodicity, ODE and residue checks at one modulus."""
    m = as_modulus(tau)
    t = m.tau
    z = cell_grid(t, n)
    out = []
    th = theta(z, m)
    out.append(make_check("theta_shift_1", _rel(theta(z + 1, m) + th, th), 1e-12))
    factor = np.exp(-1j * np.pi * t - 2j * np.pi * z)
    out.append(make_check("theta_shift_tau", _rel(theta(z + t, m) + factor * th, th), 1e-10))
    out.append(make_check("theta_odd", _rel(theta(-z, m) + th, th), 1e-12))

    e2 = eisenstein_e2(z, m)
    out.append(make_check("e2_shift_1", _rel(eisenstein_e2(z + 1, m) - e2, e2), 1e-10))
    out.append(make_check("e2_shift_tau", _rel(eisenstein_e2(z + t, m) - e2, e2), 1e-10))

    e = np.array(half_period_values(m))
    scale = float(np.max(np.abs(e)))
    out.append(make_check("half_period_sum", abs(e.sum()) / scale, 1e-10))
    wp = weierstrass_p(z, m)
    wpp = weierstrass_p_prime(z, m)
    cubic = 4 * (wp - e[0]) * (wp - e[1]) * (wp - e[2])
    out.append(make_check("wp_differential_equation", _rel(wpp**2 - cubic, np.abs(cubic)), 1e-10))
    const = e2 - wp - 2 * eta1(m)
    out.append(make_check("e2_minus_wp_constant", float(np.max(np.abs(const - const[0]))), 1e-10))

    h = 1e-5
    zs = z[:5]
    worst = 0.0
    for order in (1, 2, 3):
        lower = theta_derivatives(zs, m, order - 1) if order > 1 else theta(zs, m)
        fd = (
            (theta_derivatives(zs + h, m, order - 1) if order > 1 else theta(zs + h, m))
            - (theta_derivatives(zs - h, m, order - 1) if order > 1 else theta(zs - h, m))
        ) / (2 * h)
        exact = theta_derivatives(zs, m, order)
        worst = max(worst, _rel(fd - exact, np.maximum(np.abs(exact), np.abs(lower))))
    out.append(make_check("theta_derivative_fd", worst, 1e-7))

    lim = _phi_residue_limit(0.3 + 0.1j, m)
    out.append(make_check("phi_residue", abs(lim - 1), 1e-8))
    return out
