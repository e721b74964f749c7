"""Independent reference implementations used only by the tests."""

import mpmath as mp
import numpy as np


def theta_mp(z, tau, dps=30):
    """Odd theta via mpmath: theta(z|tau) = i * jtheta(1, pi z, exp(i pi tau))."""
    with mp.workdps(dps):
        q = mp.exp(1j * mp.pi * mp.mpc(tau))
        return complex(1j * mp.jtheta(1, mp.pi * mp.mpc(z), q))


def wp_rows(z, tau, rows=60):
    """Weierstrass p for the lattice Z + tau Z, summed row by row.

    Each row {m + b tau : m in Z} is summed in closed form with
    sum_m 1/(w - m)^2 = pi^2 / sin^2(pi w); the row at b = 0 carries the
    Eisenstein constant -pi^2/3. Rows |b| <= ``rows`` converge geometrically.
    """
    z = complex(z)
    tau = complex(tau)
    total = np.pi**2 / np.sin(np.pi * z) ** 2 - np.pi**2 / 3
    for b in range(1, rows + 1):
        for s in (b, -b):
            total += np.pi**2 / np.sin(np.pi * (z - s * tau)) ** 2 - np.pi**2 / np.sin(np.pi * s * tau) ** 2
    return complex(total)


def wp_square(z, tau, cutoff=60):
    """Square-cutoff lattice sum |m|, |n| <= cutoff (symmetric, so the conditionally
    convergent part pairs off). Accurate only to ~1e-5 at cutoff 60."""
    m = np.arange(-cutoff, cutoff + 1)
    om = (m[:, None] + complex(tau) * m[None, :]).ravel()
    om = om[om != 0]
    return complex(1 / complex(z) ** 2 + np.sum(1 / (z - om) ** 2 - 1 / om**2))


def central_diff(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h)
