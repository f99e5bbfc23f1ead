"""Exception hierarchy shared by all domelight modules."""


class DomelightError(Exception):
    """Base class for all domelight errors."""


class FormatError(DomelightError):
    """A file or packet does not match its declared format."""


class TruncatedError(FormatError):
    """Input ended before a complete record could be read."""


class InvariantError(DomelightError):
    """A domain-type invariant was violated (NaN radiance, bad shape, ...)."""


class ShapeError(DomelightError):
    """Array dimensions are inconsistent between inputs."""


class ConfigError(DomelightError):
    """A configuration file or calibration is invalid."""


class RangeError(DomelightError):
    """A numeric argument is outside its allowed range."""


class SolverError(DomelightError):
    """An iterative solver failed to converge."""


class NotFoundError(DomelightError):
    """A referenced asset or panel id does not exist."""


class IoError(DomelightError):
    """Reading or writing a file failed at the OS level."""
