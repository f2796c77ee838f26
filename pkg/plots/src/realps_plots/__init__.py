"""Figure rendering for sampler run artifacts."""

from .render import FIGURE_KINDS, PlotSpec, SchemaError, render

__version__ = "0.1.0"
