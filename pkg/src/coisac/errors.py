"""Exception and warning types shared across the package."""


class CoisacError(Exception):
    """Base class for all package errors."""


class DegenerateGeometry(CoisacError):
    """Target or user sits on a BS vertical axis (or coincides with the BS),
    so azimuth / its Jacobian are undefined."""


class DimensionError(CoisacError):
    """Array shape inconsistent with the scenario dimensions."""


class FormatError(CoisacError):
    """Binary container has a bad magic, version, or is truncated."""


class RelationMismatch(CoisacError):
    """Graph relation queried on a node type it does not apply to."""


class EmptyNeighborSet(CoisacError):
    """Attention requested over an empty neighbor list."""


class NonFiniteLoss(CoisacError):
    """Training loss became NaN/Inf and the divergence guard gave up."""


class MissingCheckpoint(CoisacError):
    """A sweep needs a trained checkpoint that does not exist."""


class ConfigError(CoisacError):
    """Invalid or inconsistent configuration input."""


class SingularOperatorWarning(UserWarning):
    """Sensing operators lost expected rank (degenerate geometry); the
    pseudo-inverse still produces a projector, but results may be fragile."""


class IllConditionedWarning(UserWarning):
    """Position FIM condition number exceeds 1e12; SPEB relies on the
    jitter regularization."""
