"""Exception types shared across the toolkit."""


class NavkitError(Exception):
    """Base class for all toolkit errors."""


class AmbiguousView(NavkitError):
    """No dominantly visible box side from the given viewpoint."""


class OutOfRange(NavkitError):
    """A value left its declared range (tilt limit, codec step range, ...)."""


class GenerationFailed(NavkitError):
    """Scene generation exhausted its rejection-sampling budget."""


class InvalidCommand(NavkitError):
    """Velocity command does not match the robot kinematics or exceeds limits."""


class NoPathFound(NavkitError):
    """Planner found no collision-free path within its budget."""


class InvalidEndpoint(NavkitError):
    """Planner start or goal pose is in collision."""


class OffPath(NavkitError):
    """Query pose projects too far from the reference path."""


class EmptyTrajectory(NavkitError):
    """Tracking controller received an empty trajectory."""


class SamplingExhausted(NavkitError):
    """Task sampling exhausted its rejection budget."""


class SchemaMismatch(NavkitError):
    """Serialized record does not match the expected schema or version."""


class IoFailure(NavkitError):
    """Filesystem error raised by a batch command."""
