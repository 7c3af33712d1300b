"""Exception types shared across the simulator modules."""


class FaceProjError(Exception):
    """Base class for all faceproj errors."""


class DegenerateAim(FaceProjError):
    """look-at construction is ill-defined (eye==target or up parallel to aim)."""


class BehindCamera(FaceProjError):
    """Point has non-positive depth in the camera frame."""


class NonPositiveDepth(FaceProjError):
    """Back-projection requested at depth <= 0."""


class NonPositiveWidth(FaceProjError):
    """Distance-from-width called with a non-positive width."""


class InsufficientPairs(FaceProjError):
    """Fewer correspondences than the estimator needs."""


class DegenerateConfiguration(FaceProjError):
    """Correspondence set is collinear/duplicated; homography undetermined."""


class PointAtInfinity(FaceProjError):
    """Projective application produced a vanishing third coordinate."""


class NotConverged(FaceProjError):
    """Iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class Unreachable(FaceProjError):
    """IK target lies outside the arm's reachable sphere."""


class InvalidDetection(FaceProjError):
    """Operation requires a valid landmark detection."""


class DegeneratePoints(FaceProjError):
    """Point set cannot be triangulated (duplicates or all collinear)."""


class OutsideHull(FaceProjError):
    """Query point lies outside the landmark convex hull."""


class FaceBehindProjector(FaceProjError):
    """Face plane center has non-positive depth in the projector frame."""


class ParseError(FaceProjError):
    """Scenario config text could not be parsed."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(FaceProjError):
    """Scenario config value violates a constraint."""

    def __init__(self, field: str, constraint: str):
        super().__init__(f"{field}: {constraint}")
        self.field = field
        self.constraint = constraint
