"""Fractional capacities, Hardy constants and Hausdorff contents on finite metric measure spaces."""

__version__ = "0.1.0"

from .errors import (DegenerateError, FraccapError, HypothesisViolation, PreconditionError,
                     TooManyCandidates, ValidationError)
from .space import (BallSpec, MetricMeasureSpace, MetricSpaceProfile, PointSet, ball_points,
                    dist_to_set, doubling_profile, unique_distances)
from .generators import generate_space
from .spaceio import load_space, save_space
from .functionals import (gagliardo_energy, gagliardo_pointwise, poincare_ratio,
                          restricted_maximal)
from .htl import htl_seminorm
from .capacity import (CapacityOptions, CapacityProblem, ball_capacity_band, fractional_capacity,
                       htl_capacity)
from .hausdorff import hausdorff_content

__all__ = ["BallSpec", "CapacityOptions", "CapacityProblem", "DegenerateError", "FraccapError",
           "HypothesisViolation", "MetricMeasureSpace", "MetricSpaceProfile", "PointSet",
           "PreconditionError", "TooManyCandidates", "ValidationError", "ball_capacity_band",
           "ball_points", "dist_to_set", "doubling_profile", "fractional_capacity",
           "gagliardo_energy", "gagliardo_pointwise", "generate_space", "hausdorff_content",
           "htl_capacity", "htl_seminorm", "load_space", "poincare_ratio", "restricted_maximal",
           "save_space", "unique_distances", "__version__"]
