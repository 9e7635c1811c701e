"""Exception hierarchy.

Two branches matter to callers: configuration/input problems
(:class:`ConfigError`) and physics or fit failures (everything else under
:class:`NliError`). The CLI maps the former to exit code 2 and the latter
to exit code 3.
"""


class NliError(Exception):
    """Base class for all package errors."""


class ConfigError(NliError):
    """Bad configuration file, schema, or out-of-range config value."""


class PhysicsError(NliError):
    """Domain violation in a physics operation (negative power, bad angle...)."""


class UndefinedVisibilityError(PhysicsError):
    """Visibility denominator is zero (all gains zero, or non-positive offset)."""


class NoOptimumError(PhysicsError):
    """Balance optimization has no interior optimum (a blocked arm)."""


class InfiniteRatioError(PhysicsError):
    """Detection-to-probe ratio diverges (no photons sent toward the sample)."""


class FitError(NliError):
    """Fringe fit cannot be performed on the given trace."""
