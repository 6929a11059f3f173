# Exception types shared by the engines, the map I/O layer and the harness


class SimulationError(Exception):
    """Base class for every error the simulator raises on purpose."""


class DomainError(SimulationError, ValueError):
    """An allometric or demographic function was called outside its domain."""


class ConfigurationError(SimulationError, ValueError):
    """Run configuration is invalid, inconsistent or conflicts with the inputs."""


class ParameterError(SimulationError, ValueError):
    """Parameter file is missing a key, has an unknown key or breaks an invariant.

    `key` holds the dotted path of the offending entry when it is known.
    """

    def __init__(self, message: str, key: str = None):
        super().__init__(message)
        self.key = key


class RasterFormatError(SimulationError, ValueError):
    """ASCII raster could not be parsed."""


class ComparisonError(SimulationError, ValueError):
    """Two run directories cannot be compared (geometry or year mismatch)."""
