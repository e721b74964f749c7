"""Genus-zero isomonodromy: Fuchsian Lax matrix, Schlesinger flow and its checks.

Conventions (fixed here, see the sign note on ``schlesinger_rhs``):

* linear problem ``(kappa d/dw + L) Psi = 0`` with ``L = sum_a p_a/(w - x_a)``;
* deformation ``(d/dx_b + M_b) Psi = 0`` with ``M_b = -p_b / (kappa (w - x_b))``;
* inner product ``<A, B> = tr(A B)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CollisionError, PoleError
from .integrate import PathSpec, Trajectory, circle_loop, integrate_path, monodromy

__all__ = [
    "PoleSystem",
    "killing",
    "commutator",
    "lax_l",
    "m_matrix",
    "hamiltonian_h1",
    "hamiltonian_h2",
    "hamiltonian_h1_gradient",
    "lie_poisson_bracket",
    "schlesinger_rhs",
    "integrate_schlesinger",
    "trajectory_systems",
    "casimir_spectrum",
    "zero_curvature_residual",
    "IsomonodromyReport",
    "isomonodromy_check",
    "tau_log_increment",
    "whitham_residual",
    "whitham_terms",
    "random_pole_system",
    "loop_around",
    "COLLISION_GUARD",
    "LOOP_GUARD",
]

COLLISION_GUARD = 1e-6
LOOP_GUARD = 1e-3
MOMENT_TOL = 1e-9


def killing(a, b):
    """Trace form <A, B> = tr(AB)."""
    return complex(np.einsum("ij,ji->", a, b))


def commutator(a, b):
    return a @ b - b @ a


@dataclass(frozen=True)
class PoleSystem:
    positions: tuple
    residues: np.ndarray = field(repr=False)
    kappa: complex = 1.0

    def __post_init__(self):
        pos = tuple(complex(x) for x in self.positions)
        res = np.array(self.residues, dtype=complex)
        if res.ndim != 3 or res.shape[1] != res.shape[2]:
            raise ValueError("residues must have shape (n, N, N)")
        if len(pos) != res.shape[0] or len(pos) < 2:
            raise ValueError("need n >= 2 positions, one residue per position")
        if complex(self.kappa) == 0:
            raise ValueError("kappa must be nonzero")
        scale = max(1.0, float(np.abs(res).max()))
        traces = np.abs(np.trace(res, axis1=1, axis2=2))
        if np.any(traces > MOMENT_TOL * scale):
            raise ValueError(f"residues must be traceless (|tr p_a| = {traces.max():.2e})")
        moment = np.abs(res.sum(axis=0)).max()
        if moment > MOMENT_TOL * scale:
            raise ValueError(f"moment constraint violated: |sum p_a| = {moment:.2e}")
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                if abs(pos[i] - pos[j]) <= 1e-9:
                    raise ValueError(f"positions {i} and {j} coincide")
        res.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "residues", res)
        object.__setattr__(self, "kappa", complex(self.kappa))

    @property
    def n(self):
        return len(self.positions)

    @property
    def rank(self):
        return self.residues.shape[1]

    def with_state(self, positions, residues, check=False):
        if check:
            return PoleSystem(positions, residues, self.kappa)
        obj = object.__new__(PoleSystem)
        res = np.array(residues, dtype=complex)
        res.setflags(write=False)
        object.__setattr__(obj, "positions", tuple(complex(x) for x in positions))
        object.__setattr__(obj, "residues", res)
        object.__setattr__(obj, "kappa", self.kappa)
        return obj

    def to_dict(self):
        return {
            "positions": [[x.real, x.imag] for x in self.positions],
            "residues": [[[[z.real, z.imag] for z in row] for row in p] for p in self.residues],
            "kappa": [self.kappa.real, self.kappa.imag],
        }


def random_pole_system(n, rank=2, seed=0, scale=0.3, kappa=1.0, radius=1.0):
    """Seeded random traceless residues with sum zero at well-separated positions."""
    rng = np.random.default_rng(seed)
    raw = scale * (rng.standard_normal((n, rank, rank)) + 1j * rng.standard_normal((n, rank, rank)))
    raw -= np.trace(raw, axis1=1, axis2=2)[:, None, None] * np.eye(rank) / rank
    raw -= raw.mean(axis=0)
    ang = 2 * np.pi * np.arange(n) / n + 0.3 * rng.random(n)
    pos = radius * np.exp(1j * ang)
    return PoleSystem(tuple(pos), raw, kappa)


def loop_around(points, margin=0.25, vertices=64):
    """Counterclockwise circle through the centroid of ``points``, enclosing all of them."""
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    center = complex(pts.mean())
    radius = float(np.abs(pts - center).max()) + margin
    return circle_loop(center, radius, vertices)


def lax_l(w, sys):
    w = complex(w)
    d = np.array(sys.positions) - w
    if np.any(np.abs(d) == 0):
        a = int(np.argmin(np.abs(d)))
        raise PoleError(f"lax_l evaluated at marked point x_{a} = {sys.positions[a]}", point=w)
    return np.einsum("a,aij->ij", 1.0 / (w - np.array(sys.positions)), sys.residues)


def m_matrix(w, sys, b, normalized=True):
    """M_b = -p_b / (kappa (w - x_b)); ``normalized=False`` drops the 1/kappa."""
    m = -sys.residues[b] / (complex(w) - sys.positions[b])
    return m / sys.kappa if normalized else m


def hamiltonian_h1(a, sys):
    """H_{1,a} = sum_{b != a} <p_a, p_b> / (x_a - x_b)."""
    x, p = sys.positions, sys.residues
    return sum(killing(p[a], p[b]) / (x[a] - x[b]) for b in range(sys.n) if b != a)


def hamiltonian_h2(a, sys, c=0.5):
    return c * killing(sys.residues[a], sys.residues[a])


def hamiltonian_h1_gradient(a, sys):
    """Gradients of H_{1,a} with respect to every residue (trace-form duals)."""
    x, p = sys.positions, sys.residues
    grad = np.zeros_like(p)
    for b in range(sys.n):
        if b == a:
            continue
        grad[a] += p[b] / (x[a] - x[b])
        grad[b] += p[a] / (x[a] - x[b])
    return grad


def _gl_structure_constants(n):
    # {p_ij, p_kl} = delta_jk p_il - delta_li p_kj, stored as f[ij, kl, rs]
    f = np.zeros((n, n, n, n, n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    if j == k:
                        f[i, j, k, l, i, l] += 1.0
                    if l == i:
                        f[i, j, k, l, k, j] -= 1.0
    return f


def lie_poisson_bracket(grad_f, grad_g, residues):
    """Lie-Poisson bracket of two functions of the residues, one gl_N copy per pole.

    ``grad_f[a]`` is the trace-form gradient, so dF/d(p_a)_ij = grad_f[a]_ji.
    """
    n = residues.shape[1]
    f = _gl_structure_constants(n)
    total = 0j
    for gf, gg, p in zip(grad_f, grad_g, residues):
        total += np.einsum("ji,lk,ijklrs,rs->", gf, gg, f, p)
    return complex(total)


def schlesinger_rhs(sys, printed_order=False):
    """Table D[a, b] = d p_a / d x_b.

    Sign: kappa dp_a/dx_b = [p_b, p_a]/(x_a - x_b) for a != b, and
    kappa dp_a/dx_a = -sum_{b != a} [p_b, p_a]/(x_a - x_b). This is the
    ordering compatible with (kappa d/dw + L) and M_b above. The opposite
    commutator order (``printed_order=True``) is kept as a negative control:
    it breaks the zero-curvature identity and does not preserve monodromy.
    """
    x, p = sys.positions, sys.residues
    n = sys.n
    table = np.zeros((n, n) + p.shape[1:], dtype=complex)
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            term = commutator(p[b], p[a]) / (x[a] - x[b])
            if printed_order:
                term = -term
            table[a, b] = term
            table[a, a] -= term
    return table / sys.kappa


def _check_gaps(positions, param=None):
    pos = np.asarray(positions)
    for i in range(len(pos)):
        for j in range(i + 1, len(pos)):
            if abs(pos[i] - pos[j]) < COLLISION_GUARD:
                raise CollisionError(
                    f"marked points x_{i} and x_{j} collide (gap {abs(pos[i] - pos[j]):.2e})",
                    pair=(i, j),
                    param=param,
                )


def integrate_schlesinger(sys0, moving, path, tol=1e-11, freeze_residues=False,
                          printed_order=False):
    """Move x_moving along ``path`` and integrate all residues by the Schlesinger flow.

    ``freeze_residues=True`` keeps the residues fixed (negative control).
    """
    if abs(complex(path.start) - sys0.positions[moving]) > 1e-12:
        raise ValueError("path must start at the current position of the moving point")
    pos = list(sys0.positions)
    shape = sys0.residues.shape
    for s in path.sample_points():
        pos[moving] = s
        _check_gaps(pos, param=s)
    for a, x in enumerate(sys0.positions):
        if a != moving and _loop_distance(path, x) < COLLISION_GUARD:
            i, j = sorted((a, moving))
            raise CollisionError(f"path of x_{moving} runs into x_{a}", pair=(i, j), param=x)

    def rhs(s, y):
        pos[moving] = s
        if freeze_residues:
            return np.zeros_like(y)
        _check_gaps(pos, param=s)
        cur = sys0.with_state(pos, y.reshape(shape))
        return schlesinger_rhs(cur, printed_order)[:, moving].ravel()

    traj = integrate_path(rhs, path, sys0.residues.ravel(), tol)
    traj.meta.update({"kind": "schlesinger", "system": sys0, "moving": moving})
    return traj


def trajectory_systems(traj):
    """PoleSystem at every sample of a Schlesinger trajectory."""
    sys0 = traj.meta["system"]
    m = traj.meta["moving"]
    shape = sys0.residues.shape
    out = []
    for s, y in zip(traj.params, traj.states):
        pos = list(sys0.positions)
        pos[m] = s
        out.append(sys0.with_state(pos, y.reshape(shape)))
    return out


def casimir_spectrum(sys):
    """[[tr p_a^2, ..., tr p_a^N] for each pole a]."""
    out = []
    for p in sys.residues:
        powers = []
        acc = p
        for _ in range(2, sys.rank + 1):
            acc = acc @ p
            powers.append(complex(np.trace(acc)))
        out.append(powers)
    return out


def zero_curvature_residual(sys, moving, w_samples, normalized=True, printed_order=False):
    """max_w || d_b L - kappa d_w M_b - [L, M_b] || with d_b L from the Schlesinger table."""
    b = moving
    x = np.array(sys.positions)
    dp = schlesinger_rhs(sys, printed_order)[:, b]
    worst = 0.0
    for w in np.atleast_1d(w_samples):
        w = complex(w)
        inv = 1.0 / (w - x)
        L = np.einsum("a,aij->ij", inv, sys.residues)
        dL = np.einsum("a,aij->ij", inv, dp) + sys.residues[b] * inv[b] ** 2
        M = m_matrix(w, sys, b, normalized)
        # d_w M_b = p_b/(c (w - x_b)^2) with c = kappa or 1
        dM = -M * inv[b]
        res = dL - sys.kappa * dM - commutator(L, M)
        worst = max(worst, float(np.abs(res).max()))
    return worst


@dataclass
class IsomonodromyReport:
    drift: float
    eigenvalues_before: list
    eigenvalues_after: list
    per_loop_drift: list
    final_system: PoleSystem = None

    def to_dict(self):
        enc = lambda evs: [[[z.real, z.imag] for z in ev] for ev in evs]  # noqa: E731
        return {
            "drift": self.drift,
            "per_loop_drift": self.per_loop_drift,
            "eigenvalues_before": enc(self.eigenvalues_before),
            "eigenvalues_after": enc(self.eigenvalues_after),
        }


def _winding(loop, point):
    pts = np.array(loop.waypoints) - point
    ang = np.angle(pts[1:] / pts[:-1])
    return int(round(ang.sum() / (2 * np.pi)))


def _loop_distance(loop, point):
    pts = np.array(loop.waypoints)
    best = np.inf
    for a, b in zip(pts, pts[1:]):
        d = b - a
        t = np.clip(((point - a) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
        best = min(best, abs(point - (a + t * d)))
    return best


def _point_segment(p, a, b):
    d = b - a
    t = np.clip(((p - a) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
    return abs(p - (a + t * d))


def _cross(u, v):
    return (np.conj(u) * v).imag


def _segment_distance(a, b, c, d):
    """Distance between the segments [a, b] and [c, d] in the plane."""
    d1, d2 = _cross(b - a, c - a), _cross(b - a, d - a)
    d3, d4 = _cross(d - c, a - c), _cross(d - c, b - c)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return 0.0
    return min(_point_segment(a, c, d), _point_segment(b, c, d), _point_segment(c, a, b), _point_segment(d, a, b))


def _path_loop_distance(path, loop):
    pw, lw = path.waypoints, loop.waypoints
    return min(
        _segment_distance(a, b, c, d) for a, b in zip(pw, pw[1:]) for c, d in zip(lw, lw[1:])
    )


def _guard_loops(loops, positions, label):
    for li, loop in enumerate(loops):
        for a, x in enumerate(positions):
            if _loop_distance(loop, x) < LOOP_GUARD:
                raise CollisionError(
                    f"loop {li} passes within {LOOP_GUARD} of pole x_{a} ({label})", pair=(li, a)
                )


def _match_eigenvalues(a, b):
    # pair each eigenvalue with its nearest counterpart (orderings can swap)
    b = list(b)
    worst = 0.0
    for z in a:
        j = int(np.argmin([abs(z - w) for w in b]))
        worst = max(worst, abs(z - b[j]))
        b.pop(j)
    return worst


def isomonodromy_check(sys0, moving, path, loops, tol=1e-11, freeze_residues=False,
                       printed_order=False):
    """Monodromy eigenvalues around each loop before and after a Schlesinger deformation."""
    traj = integrate_schlesinger(
        sys0, moving, path, tol, freeze_residues=freeze_residues, printed_order=printed_order
    )
    sys1 = trajectory_systems(traj)[-1]
    _guard_loops(loops, sys0.positions, "start")
    _guard_loops(loops, sys1.positions, "end")
    for li, loop in enumerate(loops):
        if _winding(loop, sys0.positions[moving]) != _winding(loop, sys1.positions[moving]):
            raise CollisionError(f"moving pole crosses loop {li} during the deformation", pair=(li, moving))
        if _path_loop_distance(path, loop) < LOOP_GUARD:
            raise CollisionError(f"moving pole crosses or grazes loop {li}", pair=(li, moving))
    before, after, drifts = [], [], []
    for loop in loops:
        r0 = monodromy(lambda w: lax_l(w, sys0), sys0.kappa, loop, tol)
        r1 = monodromy(lambda w: lax_l(w, sys1), sys1.kappa, loop, tol)
        before.append(r0.eigenvalues)
        after.append(r1.eigenvalues)
        drifts.append(_match_eigenvalues(r0.eigenvalues, r1.eigenvalues))
    return IsomonodromyReport(max(drifts), before, after, drifts, sys1)


def tau_log_increment(traj, richardson=True):
    """Integral of sum_{c != b} <p_b, p_c> dlog(x_c - x_b) along a Schlesinger trajectory.

    Only the moving point varies, so the one-form reduces to 2 H_{1,m} dx_m.
    Trapezoid rule per segment; with an even number of intervals one
    Richardson step lifts it to fourth order.
    """
    systems = trajectory_systems(traj)
    m = traj.meta["moving"]
    xs = np.asarray(traj.params, dtype=complex)
    f = np.array([2 * hamiltonian_h1(m, s) for s in systems])
    # split into straight segments at direction changes so each gets its own rule
    breaks = [0]
    d = np.diff(xs)
    for k in range(1, len(d)):
        if abs(d[k] / abs(d[k]) - d[k - 1] / abs(d[k - 1])) > 1e-9:
            breaks.append(k)
    breaks.append(len(xs) - 1)
    total = 0j
    for i0, i1 in zip(breaks, breaks[1:]):
        xx, ff = xs[i0 : i1 + 1], f[i0 : i1 + 1]
        fine = np.sum((ff[1:] + ff[:-1]) * np.diff(xx)) / 2
        if richardson and (len(xx) - 1) % 2 == 0 and len(xx) >= 5:
            coarse = np.sum((ff[2::2] + ff[:-2:2]) * (xx[2::2] - xx[:-2:2])) / 2
            total += (4 * fine - coarse) / 3
        else:
            total += fine
    return complex(total)


def _h1_explicit(sys, a, positions):
    p = sys.residues
    return sum(killing(p[a], p[b]) / (positions[a] - positions[b]) for b in range(sys.n) if b != a)


def whitham_terms(sys, a, b, fd_step=1e-5):
    """(dH_a/dx_b, dH_b/dx_a, {H_a, H_b}) with the x-derivatives by central differences."""
    if a == b:
        raise ValueError("whitham residual needs a != b")

    def shifted(idx, h):
        pos = list(sys.positions)
        pos[idx] += h
        return pos

    h = fd_step
    d_b_ha = (_h1_explicit(sys, a, shifted(b, h)) - _h1_explicit(sys, a, shifted(b, -h))) / (2 * h)
    d_a_hb = (_h1_explicit(sys, b, shifted(a, h)) - _h1_explicit(sys, b, shifted(a, -h))) / (2 * h)
    bracket = lie_poisson_bracket(
        hamiltonian_h1_gradient(a, sys), hamiltonian_h1_gradient(b, sys), sys.residues
    )
    return d_b_ha, d_a_hb, bracket


def whitham_residual(sys, a, b, fd_step=1e-5):
    """d_{x_b} H_{1,a} - d_{x_a} H_{1,b} + {H_{1,a}, H_{1,b}} (expected 0)."""
    d_b_ha, d_a_hb, bracket = whitham_terms(sys, a, b, fd_step)
    return d_b_ha - d_a_hb + bracket
