"""Figure rendering for slowbeam simulation CSV outputs."""

from .render import FIGURES, FigureInputError, load_csv, render

__version__ = "0.1.0"

__all__ = ["FIGURES", "FigureInputError", "load_csv", "render",
           "__version__"]
