"""Exception types raised across the package."""


class DTCError(Exception):
    """Base class for all package errors."""


class SupercriticalCoupling(DTCError, ValueError):
    """Static coupling at or above the critical coupling (imaginary resonance)."""


class NoProbe(DTCError, ValueError):
    """A probe-dependent quantity was requested for parameters without a probe."""


class NumericalError(DTCError):
    """A numerical procedure failed (divergence or missing convergence)."""


class NonFinite(NumericalError, FloatingPointError):
    """A state left the finite range during integration."""


class TooCoarse(NumericalError, RuntimeError):
    """Trotter refinement did not stabilise the monodromy eigenvalues."""


class IllConditioned(DTCError, ValueError):
    """Lineshape samples do not bracket the resonance centre."""


class OutsideDomain(DTCError, ValueError):
    """An inverse hyperbolic argument left its domain."""

    def __init__(self, angle, value):
        self.angle = angle
        self.value = value
        super().__init__(f"{angle}: argument {value!r} outside domain")


class ConfigError(DTCError, ValueError):
    """Invalid run configuration."""
