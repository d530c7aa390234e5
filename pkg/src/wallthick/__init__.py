"""Dense wall thickness of annular structures in binary masks.

The potential between the inner and outer wall contours is solved with
red-black SOR.  Each streamline of its gradient runs from border to border
and paints its arc length onto the pixels it crosses; pixels no streamline
reached are filled from their neighbours.
"""
from .errors import (BoundarySpec, DomainError, InterpolationImpossible, NoInnerBoundary, ParseError,
                     RecipeInfeasible, ShapeError, TransformDegenerate, WallThickError)
from .grid import (BinaryMask, BoundaryConditions, GridGeometry, RegionLabels, extract_boundaries,
                   label_regions, load_mask, normalize_grid, pinned_boundaries)
from .laplace import PotentialField, SolverConfig, TangentField, residual, solve_laplace, tangent_field
from .streamline import (Streamline, ThicknessMap, fill_missing, measure, measure_detailed,
                         measure_with_boundaries, splat, trace, trace_from_inner)

__version__ = "0.1.0"

__all__ = [
    "BinaryMask", "BoundaryConditions", "BoundarySpec", "DomainError", "GridGeometry",
    "InterpolationImpossible", "NoInnerBoundary", "ParseError", "PotentialField", "RecipeInfeasible",
    "RegionLabels", "ShapeError", "SolverConfig", "Streamline", "TangentField", "ThicknessMap",
    "TransformDegenerate", "WallThickError", "extract_boundaries", "fill_missing", "label_regions",
    "load_mask", "measure", "measure_detailed", "measure_with_boundaries", "normalize_grid",
    "pinned_boundaries", "residual", "solve_laplace", "splat", "tangent_field", "trace",
    "trace_from_inner",
]
