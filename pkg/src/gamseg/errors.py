"""Exception hierarchy shared across gamseg modules."""


class GamsegError(Exception):
    """Base class for all library errors."""


# audio
class UnreadableFile(GamsegError):
    pass


class UnsupportedEncoding(GamsegError):
    pass


# features
class ClipTooShort(GamsegError):
    pass


class ColumnMismatch(GamsegError):
    pass


class BadMagic(GamsegError):
    pass


class DimensionOverflow(GamsegError):
    pass


class IoError(GamsegError):
    pass


# annotations
class MalformedLine(GamsegError):
    def __init__(self, line_no, text=""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: cannot parse {text!r}")


class NonMonotonicTime(GamsegError):
    pass


class MissingBeginEnd(GamsegError):
    pass


# neural net
class ShapeMismatch(GamsegError):
    pass


class LengthMismatch(GamsegError):
    pass


class GraphNotBuilt(GamsegError):
    pass


class ArchitectureMismatch(GamsegError):
    pass


# training
class RateOutOfRange(GamsegError):
    pass


class EmptyManifest(GamsegError):
    pass


class FeatureExtractionFailed(GamsegError):
    def __init__(self, path, reason=""):
        self.path = path
        super().__init__(f"{path}: {reason}" if reason else str(path))


class GridTooLarge(GamsegError):
    def __init__(self, size, cap=None):
        self.size = size
        self.cap = cap
        msg = f"grid has {size} combinations"
        if cap is not None:
            msg += f" (allowed 1..{cap})"
        super().__init__(msg)


# evaluation / baseline / synth
class UnsortedInput(GamsegError):
    pass


class KernelTooLarge(GamsegError):
    pass


class SSMTooLarge(GamsegError):
    pass


class SpecInvalid(GamsegError):
    pass
