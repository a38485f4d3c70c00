"""Figure rendering for metadob benchmark and ablation CSV files."""

from .render import KINDS, PlotSpec, box_stats, render
from .schema import SchemaMismatch

__version__ = "0.1.0"
