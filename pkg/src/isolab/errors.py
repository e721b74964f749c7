"""Exception types shared across the package."""


class IsolabError(Exception):
    """Base class for every error raised by isolab."""


class SeriesConvergenceError(IsolabError):
    """A theta series did not reach the requested tolerance within max_terms."""

    def __init__(self, q_abs, n_terms, message=None):
        self.q_abs = q_abs
        self.n_terms = n_terms
        super().__init__(
            message
            or f"theta series did not converge: |q|={q_abs:.3e}, terms={n_terms}"
        )


class PoleError(IsolabError, ZeroDivisionError):
    """Evaluation requested at (or numerically on top of) a pole."""

    def __init__(self, message, point=None, lattice_point=None):
        self.point = point
        self.lattice_point = lattice_point
        super().__init__(message)


class IntegrationError(IsolabError):
    """The adaptive integrator could not proceed (usually pole proximity)."""

    def __init__(self, message, param=None):
        self.param = param
        super().__init__(message)


class CollisionError(IsolabError):
    """Two marked points (or a pole and a loop) came closer than the guard."""

    def __init__(self, message, pair=None, param=None):
        self.pair = pair
        self.param = param
        super().__init__(message)


class DegenerateInputError(IsolabError, ValueError):
    """Input is outside the domain where the requested map is defined."""
