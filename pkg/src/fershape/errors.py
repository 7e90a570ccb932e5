"""Exception hierarchy shared by all fershape modules."""


class FershapeError(Exception):
    """Base class for every error raised by this package."""


class FileFormatError(FershapeError, ValueError):
    pass


class NonFiniteError(FershapeError, ValueError):
    pass


class DegenerateGeometryError(FershapeError, ValueError):
    pass


class NotAnEllipseError(FershapeError, ValueError):
    pass


class EmptyMaskError(FershapeError, ValueError):
    pass


class ZeroDCError(FershapeError, ValueError):
    pass


class UnknownRegionError(FershapeError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ManifestError(FershapeError, ValueError):
    pass


class DimensionMismatchError(FershapeError, ValueError):
    pass


class LayoutMismatchError(FershapeError, ValueError):
    pass


class LabelError(FershapeError, ValueError):
    pass


class LengthMismatchError(FershapeError, ValueError):
    pass


class InvalidCError(FershapeError, ValueError):
    pass


class SingleClassError(FershapeError, ValueError):
    pass


class TooFewSamplesError(FershapeError, ValueError):
    pass


class TooFewSubjectsError(FershapeError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    """SMO stopped at its iteration budget before meeting the KKT tolerance."""
