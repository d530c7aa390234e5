"""Exception types raised by the thickness pipeline."""


class WallThickError(Exception):
    """Base class; ``kind`` is the name used in machine-readable CLI errors."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class ParseError(WallThickError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DomainError(WallThickError):
    """Input outside an operation's domain (empty wall, mismatched grids...)."""


class NoInnerBoundary(WallThickError):
    pass


class BoundarySpec(WallThickError):
    pass


class InterpolationImpossible(WallThickError):
    pass


class RecipeInfeasible(WallThickError):
    pass


class TransformDegenerate(WallThickError):
    pass


class ShapeError(WallThickError):
    pass
