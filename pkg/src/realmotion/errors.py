"""Exception types shared across the package."""


class RealMotionError(Exception):
    pass


class FrameMismatch(RealMotionError):
    pass


class IndexOutOfRange(RealMotionError, IndexError):
    pass


class FocalInvalid(RealMotionError):
    pass


class DegeneratePolyline(RealMotionError):
    pass


class ConfigInvalid(RealMotionError):
    pass


class FormatVersionMismatch(RealMotionError):
    pass


class CorruptFile(RealMotionError):
    pass


class SplitPointsInvalid(RealMotionError):
    pass


class ShapeMismatch(RealMotionError):
    pass


class EmptyBank(RealMotionError):
    pass


class StaleEntry(RealMotionError):
    pass


class NonFiniteLoss(RealMotionError):
    pass


class CheckpointWriteError(RealMotionError):
    pass
