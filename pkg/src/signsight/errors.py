"""Exception hierarchy shared by every stage of the evaluation."""

from __future__ import annotations


class SignSightError(Exception):
    """Base class for all library errors."""


class ValidationError(SignSightError, ValueError):
    """Bad input: malformed file, unit error or violated invariant.

    ``path`` and ``line`` locate the offending record when known.
    """

    def __init__(self, message: str, path=None, line: int | None = None):
        self.message = message
        self.path = None if path is None else str(path)
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        loc = ""
        if self.path is not None:
            loc = self.path if self.line is None else f"{self.path}:{self.line}"
            loc += ": "
        return f"{loc}{self.message}"


class GeometryError(SignSightError):
    pass


class DegeneratePolygon(GeometryError):
    pass


class NoIntersection(GeometryError):
    pass


class BehindPupil(GeometryError):
    pass


class DegeneratePanel(GeometryError):
    pass


class DegenerateHeading(GeometryError):
    pass


class DegenerateStep(GeometryError):
    pass


class DegenerateCrossSection(GeometryError):
    pass


class SignBoundaryError(GeometryError):
    pass


class FallbackRequired(SignSightError):
    """No usable solid road markings; outlines must come from the trajectory."""
