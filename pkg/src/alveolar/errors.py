"""Exception types raised by the analysis engine."""


class AlveolarError(Exception):
    """Base class for all engine errors."""


class DegenerateTriple(AlveolarError):
    pass


class PointOffPolyline(AlveolarError):
    pass


class ZeroRootLength(AlveolarError):
    pass


class OrientationUndetermined(AlveolarError):
    pass


class EmptyPolyline(AlveolarError):
    pass


class EmptyMask(AlveolarError):
    pass


class MultipleComponents(AlveolarError):
    def __init__(self, count):
        super().__init__(f"mask has {count} connected components, expected 1")
        self.count = count


class DegenerateRatings(AlveolarError):
    pass


class NoOverlap(AlveolarError):
    pass


class InfeasibleSpec(AlveolarError):
    pass


class SchemaError(AlveolarError):
    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class GeometryOutOfBounds(SchemaError):
    pass


class RecordValidationError(AlveolarError):
    """Raised in strict mode; carries every collected diagnostic."""

    def __init__(self, diagnostics):
        lines = [str(d) for d in diagnostics]
        super().__init__("invalid record file:\n  " + "\n  ".join(lines))
        self.diagnostics = list(diagnostics)
