"""Figure rendering for pmqsopt run CSVs.

These scripts consume only the public CSV schema written by the solver CLI;
they never import solver internals, so the solver package is fully testable
without this one.
"""

from .figures import CSV_COLUMNS, DecayResult, FigureSpec, render_decay_figure, render_progress_figure

__version__ = "0.1.0"
