"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Argument outside an operation's domain (bad length, index, non-finite)."""


class ConfigError(ValueError):
    """Malformed configuration file or inconsistent configuration values."""


class BehindCameraError(ValueError):
    """Point lies at or behind the camera's image plane."""


class DegenerateViewError(ValueError):
    """Camera centre is inside or on the surface of a projected cylinder."""


class DegenerateAxisError(ValueError):
    """Cylinder silhouette line coefficients vanish."""


class InvalidLineError(ValueError):
    """Line has a zero normal vector."""


class DegenerateFilterError(RuntimeError):
    """All particle weights vanished."""
