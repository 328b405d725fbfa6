"""Exception types raised across the package."""


class VolMocapError(Exception):
    """Base class for all package errors."""


class DegenerateDepth(VolMocapError, ValueError):
    """A point lies at or behind a camera center."""


class RankDeficient(VolMocapError, ValueError):
    """Triangulation system has no unique solution (near-parallel rays)."""


class DegenerateAnchors(VolMocapError, ValueError):
    """Pelvis and neck anchors coincide, so no reference axis exists."""


class ShapeMismatch(VolMocapError, ValueError):
    """A volume or heatmap has the wrong channel count or resolution."""


class DivergedLoss(VolMocapError, RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, message, last_finite_epoch=None):
        super().__init__(message)
        self.last_finite_epoch = last_finite_epoch


class EmptyPool(VolMocapError, ValueError):
    """Pose filtering removed every frame."""


class NoMatches(VolMocapError, ValueError):
    """A metric needs at least one matched estimate/ground-truth pair."""


class FrameMismatch(VolMocapError, ValueError):
    """Estimate and ground-truth sequences cover different frame indices."""


class SchemaError(VolMocapError, ValueError):
    """An on-disk document violates its schema."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
