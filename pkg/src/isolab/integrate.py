"""ODE integration along piecewise-linear paths in the complex parameter plane.

The stepper is the Dormand-Prince 5(4) pair with a PI step-size controller.
Each path segment is integrated in its real arc length, and steps are
clipped so that every requested sample point is hit exactly (no
interpolation error in the returned trajectory).
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import IntegrationError

__all__ = [
    "PathSpec",
    "Trajectory",
    "MonodromyReport",
    "integrate_path",
    "monodromy",
    "hamiltonian_flow",
    "circle_loop",
    "straight_path",
]

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_BETA = 0.04  # PI controller memory (Hairer's 0.4/order)
_ALPHA = 0.2 - 0.75 * _BETA


@dataclass(frozen=True)
class PathSpec:
    """Polygonal path through ``waypoints`` with evenly spaced samples per segment."""

    waypoints: tuple
    samples_per_segment: int = 33

    def __post_init__(self):
        pts = tuple(complex(w) for w in self.waypoints)
        if len(pts) < 2:
            raise ValueError("a path needs at least 2 waypoints")
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise ValueError(f"consecutive waypoints coincide at {a}")
        if self.samples_per_segment < 2:
            raise ValueError("samples_per_segment must be >= 2")
        object.__setattr__(self, "waypoints", pts)

    @property
    def start(self):
        return self.waypoints[0]

    @property
    def end(self):
        return self.waypoints[-1]

    @property
    def closed(self):
        return self.waypoints[0] == self.waypoints[-1]

    @property
    def length(self):
        return sum(abs(b - a) for a, b in zip(self.waypoints, self.waypoints[1:]))

    def reversed(self):
        return PathSpec(tuple(reversed(self.waypoints)), self.samples_per_segment)

    def sample_points(self):
        """All sample parameters in path order (shared vertices appear once)."""
        pts = [self.waypoints[0]]
        n = self.samples_per_segment
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            frac = np.linspace(0.0, 1.0, n)[1:]
            pts.extend(a + (b - a) * frac)
        return np.array(pts, dtype=complex)


@dataclass
class Trajectory:
    params: np.ndarray
    states: np.ndarray
    accepted_steps: int = 0
    rejected_steps: int = 0
    tol_used: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def end_state(self):
        return self.states[-1]

    def __len__(self):
        return len(self.params)


@dataclass
class MonodromyReport:
    basepoint: complex
    loop: PathSpec
    monodromy: np.ndarray
    eigenvalues: np.ndarray
    cond_estimate: float
    steps: int = 0

    def to_dict(self):
        return {
            "basepoint": [self.basepoint.real, self.basepoint.imag],
            "loop": [[w.real, w.imag] for w in self.loop.waypoints],
            "monodromy": [[[z.real, z.imag] for z in row] for row in self.monodromy],
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "cond_estimate": self.cond_estimate,
        }


def straight_path(a, b, samples=33):
    return PathSpec((complex(a), complex(b)), samples)


def circle_loop(center, radius, vertices=64, start_angle=0.0, samples_per_segment=2,
                clockwise=False):
    """Closed regular polygon approximating a circle, starting and ending at the same vertex."""
    sign = -1.0 if clockwise else 1.0
    ang = start_angle + sign * 2 * np.pi * np.arange(vertices) / vertices
    pts = [complex(center) + radius * complex(np.exp(1j * a)) for a in ang]
    pts.append(pts[0])
    return PathSpec(tuple(pts), samples_per_segment)


def _error_norm(err, y, y_new, tol):
    scale = tol + tol * np.maximum(np.abs(y), np.abs(y_new))
    return math.sqrt(float(np.mean(np.abs(err / scale) ** 2)))


def _segment(rhs, a, b, y, samples, tol, counters, h_hint):
    """Integrate from a to b; return states at the given fractions in (0, 1]."""
    length = abs(b - a)
    direction = (b - a) / length
    targets = samples * length

    def f(sigma, yy):
        return np.asarray(rhs(a + direction * sigma, yy), dtype=complex) * direction

    sigma = 0.0
    out = []
    k1 = f(sigma, y)
    if not np.all(np.isfinite(k1)):
        raise IntegrationError(f"right-hand side is not finite at s={a}", param=a)
    h = h_hint if h_hint else min(length, _initial_step(f, sigma, y, k1, tol, length))
    err_prev = 1.0
    for target in targets:
        while sigma < target:
            h_try = min(h, target - sigma)
            if h_try <= 1e-14 * max(1.0, abs(sigma)) or h < 1e-13 * length:
                s_fail = a + direction * sigma
                raise IntegrationError(
                    f"step size underflow at s={s_fail} (pole proximity?)", param=s_fail
                )
            ks = [k1]
            for i in range(1, 7):
                yi = y + h_try * sum(_A[i][j] * ks[j] for j in range(i) if _A[i][j] != 0.0)
                ks.append(f(sigma + _C[i] * h_try, yi))
            y_new = y + h_try * sum(_B5[j] * ks[j] for j in range(6) if _B5[j] != 0.0)
            err_vec = h_try * sum(_E[j] * ks[j] for j in range(7) if _E[j] != 0.0)
            if np.all(np.isfinite(y_new)) and np.all(np.isfinite(ks[-1])):
                err = _error_norm(err_vec, y, y_new, tol)
            else:
                err = math.inf
            if err <= 1.0:
                counters[0] += 1
                clipped = h_try < h
                sigma = target if clipped else sigma + h_try
                y = y_new
                k1 = ks[-1]
                err = max(err, 1e-10)
                factor = _SAFETY * err ** (-_ALPHA) * err_prev ** _BETA
                factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
                err_prev = err
                if not clipped:
                    h = h_try * factor
            else:
                counters[1] += 1
                factor = 0.2 if not math.isfinite(err) else max(_MIN_FACTOR, _SAFETY * err ** -0.2)
                h = h_try * factor
        out.append(y.copy())
    return out, h


def _initial_step(f, t0, y0, f0, tol, span):
    scale = tol + np.abs(y0) * tol
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if not np.isfinite(d2):
        return h0 * 0.01
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def integrate_path(rhs, path, y0, tol=1e-10):
    """Integrate dy/ds = rhs(s, y) along ``path`` starting from y0.

    ``s`` runs over the complex waypoints of the path; on each segment the
    independent variable is arc length, so ``rhs`` is multiplied by the unit
    direction of the segment internally.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    scalar = np.ndim(y0) == 0
    y = np.atleast_1d(np.asarray(y0, dtype=complex)).copy()
    if scalar:
        fn = lambda s, yy: np.atleast_1d(rhs(s, yy[0]))  # noqa: E731
    else:
        fn = rhs
    params = path.sample_points()
    states = [y.copy()]
    counters = [0, 0]
    frac = np.linspace(0.0, 1.0, path.samples_per_segment)[1:]
    h = None
    for a, b in zip(path.waypoints, path.waypoints[1:]):
        seg, h = _segment(fn, a, b, y, frac, tol, counters, h)
        states.extend(seg)
        y = seg[-1]
    states = np.array(states)
    if scalar:
        states = states[:, 0]
    return Trajectory(params, states, counters[0], counters[1], tol)


def _sort_eigenvalues(ev, rel=1e-9):
    """Lexicographic (Re, Im) order; real parts within ``rel`` count as ties."""
    ev = sorted(np.asarray(ev, dtype=complex).tolist(), key=lambda z: z.real)
    groups = []
    for z in ev:
        if groups and abs(z.real - groups[-1][0].real) <= rel * max(1.0, abs(z)):
            groups[-1].append(z)
        else:
            groups.append([z])
    return np.array([z for g in groups for z in sorted(g, key=lambda z: z.imag)], dtype=complex)


def monodromy(connection, kappa, loop, tol=1e-11):
    """Monodromy of kappa dPsi/dw = -L(w) Psi around a closed loop, Psi(base) = Id."""
    if not loop.closed:
        raise ValueError("monodromy loop must be closed (first waypoint == last waypoint)")
    kappa = complex(kappa)
    if kappa == 0:
        raise ValueError("kappa must be nonzero")
    base = loop.start
    n = np.asarray(connection(base)).shape[0]

    def rhs(w, y):
        psi = y.reshape(n, n)
        return (-(np.asarray(connection(w), dtype=complex) @ psi) / kappa).ravel()

    traj = integrate_path(rhs, PathSpec(loop.waypoints, 2), np.eye(n, dtype=complex).ravel(), tol)
    mono = traj.end_state.reshape(n, n)
    try:
        ev = np.linalg.eigvals(mono)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise IntegrationError(f"eigenvalue solver failed on the monodromy: {exc}") from exc
    return MonodromyReport(
        basepoint=base,
        loop=loop,
        monodromy=mono,
        eigenvalues=_sort_eigenvalues(ev),
        cond_estimate=float(np.linalg.cond(mono)),
        steps=traj.accepted_steps,
    )


def hamiltonian_flow(grad_h, state0, path, kappa=1.0, tol=1e-10):
    """Hamiltonian flow kappa du/ds = dH/dv, kappa dv/ds = -dH/du along ``path``.

    ``grad_h(s, u, v)`` returns ``(dH/dv, dH/du)``; ``state0`` is ``(u0, v0)``
    (scalars or equal-length vectors). Trajectory states are ``[u..., v...]``.
    """
    u0, v0 = state0
    u0 = np.atleast_1d(np.asarray(u0, dtype=complex))
    v0 = np.atleast_1d(np.asarray(v0, dtype=complex))
    r = len(u0)
    kappa = complex(kappa)

    def rhs(s, y):
        dh_dv, dh_du = grad_h(s, y[:r], y[r:])
        return np.concatenate(
            [np.atleast_1d(dh_dv) / kappa, -np.atleast_1d(dh_du) / kappa]
        )

    traj = integrate_path(rhs, path, np.concatenate([u0, v0]), tol)
    traj.meta["rank"] = r
    traj.meta["kappa"] = kappa
    return traj
