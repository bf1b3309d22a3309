"""Exception hierarchy shared by all modules."""


class TreeVoronoiError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(TreeVoronoiError, ValueError):
    """An argument is outside its admissible range or has the wrong shape."""


class HypothesisError(TreeVoronoiError, ValueError):
    """The inputs do not satisfy the structural hypothesis of an operation."""


class CertificationError(TreeVoronoiError):
    """A finite window cannot be certified to agree with the infinite model.

    ``certified_radius`` carries the largest radius that could be certified,
    or ``-1`` if none.
    """

    def __init__(self, message, certified_radius=-1):
        super().__init__(message)
        self.certified_radius = certified_radius


class EmptyTessellationError(TreeVoronoiError):
    """A tessellation was requested from an empty set of nuclei."""


class SamplingError(TreeVoronoiError):
    """A sampler gave up after reaching its hard cap."""


class ConfigError(ParameterError):
    """A configuration file or string could not be parsed or validated."""

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.bare = message
        self.key = key
        self.line = line
