"""Exception types shared across the package."""


class CamlocError(Exception):
    """Base class for all camloc errors."""


class BehindCamera(CamlocError):
    """Point has non-positive depth in the camera frame."""


class UnknownCamera(CamlocError):
    pass


class UnknownKeypoint(CamlocError):
    pass


class AllZeroWeights(CamlocError):
    pass


class StaleMessage(CamlocError):
    pass


class InsufficientObservations(CamlocError):
    pass


class InsufficientKeypoints(CamlocError):
    pass


class SolverDiverged(CamlocError):
    pass


class NoEligibleCamera(CamlocError):
    pass


class UnknownNode(CamlocError):
    pass


class GaugeFree(CamlocError):
    pass


class InsufficientOverlap(CamlocError):
    pass


class EmptyWindow(CamlocError):
    pass


class EmptyInput(CamlocError):
    pass


class ConfigError(CamlocError):
    pass
