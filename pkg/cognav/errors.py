"""Exception types shared across the navigation stack."""


class CogNavError(Exception):
    """Base class for every error raised on purpose by cognav."""


class UngeneratableSceneError(CogNavError):
    """Scene generation ran out of layout attempts for a seed."""


class CollisionError(CogNavError):
    """A pose or point lies inside an occupied cell."""


class DisconnectedError(CogNavError):
    """Two points have no free path between them."""


class MapError(CogNavError):
    """Invalid cognitive-map operation (bad id, bad weight, out-of-order time label)."""


class QuantizationError(CogNavError):
    """A waypoint is off the 3 degree / 0.25 m action grid."""


class BackendError(CogNavError):
    """A language backend could not produce a reply."""


class BackendUnavailable(BackendError):
    """Transport failure after the retry budget was spent."""


class CassetteMiss(BackendError):
    """Replay found no recorded reply for a request."""


class PlannerUnavailable(CogNavError):
    """The planner backend is unreachable; the episode must be aborted."""


class ConfigError(CogNavError):
    """Invalid run configuration."""
