"""Figure regeneration from rlplab CSV artifacts.

Plotting reads artifacts only; it never recomputes model quantities, so the
numerical contract lives entirely in the engine package.
"""

from .io import EmptyDataError, SchemaError
from .recipes import RECIPES, FigureRecipe

__version__ = "0.1.0"

__all__ = ["EmptyDataError", "FigureRecipe", "RECIPES", "SchemaError", "__version__"]
