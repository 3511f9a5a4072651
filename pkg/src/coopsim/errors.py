"""Exception types shared across the simulator."""


class CoopsimError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(CoopsimError):
    """A scene, parameter set, or run configuration is invalid."""


class SchemaError(ConfigurationError):
    """A scenario document failed schema validation.

    Carries one message per problem; each message names the offending
    field path (and source line when known).
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class GeometryError(CoopsimError):
    """Base class for projection-domain failures."""


class DegenerateBoxError(GeometryError):
    """Bounding box width is zero or negative."""


class OutOfModelError(GeometryError):
    """Subtended angle reaches 90 degrees; the distance model is undefined."""


class NoBoxError(GeometryError):
    """Object cannot be projected into the image frame."""


class OutOfRangeError(CoopsimError):
    """Target lies beyond the maximum detection range."""


class UnknownLocationError(CoopsimError):
    """A report referenced a location id that is not in the scene."""


class TimeRegressionError(CoopsimError):
    """The simulated clock was asked to move backwards."""


class WireFormatError(CoopsimError):
    """A bus payload could not be encoded or decoded."""
