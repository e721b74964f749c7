"""Seeded configurations shared by the module tests and the acceptance suite."""

import numpy as np

from isolab.cli import _moving_clear, default_loops
from isolab.integrate import PathSpec
from isolab.schlesinger import random_pole_system

SEED = 7


def radial_path(sys0, moving, length=1.0, samples=65):
    x = sys0.positions[moving]
    return PathSpec((x, x + length * x / abs(x)), samples)


def admissible_loops(sys0, moving, path):
    return [loop for _, loop in _moving_clear(default_loops(sys0, moving), path.sample_points(), 0.25)]


def pair_loops(sys0, moving, path):
    """Only loops enclosing two static poles (single-pole loops are blind to the flow)."""
    out = []
    for g, loop in _moving_clear(default_loops(sys0, moving), path.sample_points(), 0.25):
        if len(g) == 2:
            out.append(loop)
    return out


def system(n, seed=SEED, **kw):
    return random_pole_system(n, seed=seed, **kw)


def commuting_system(kappa=1.0):
    from isolab.schlesinger import PoleSystem

    d = np.diag([1.0, -1.0])
    return PoleSystem((1.0, 1j, -1.0), np.array([0.2 * d, 0.1 * d, -0.3 * d]), kappa)
