"""Render figures from experiment CSV/manifest outputs.

This package consumes only the public file formats (manifest.json plus the
fixed CSV schemas) and turns them into the two standard figures: cluster size
versus target precision, and test-loss convergence races with across-seed
shading.  It shares no code with the simulation engine: the file format is
the boundary.
"""

from .reader import (
    EmptyDataError,
    IntegrityError,
    ManifestError,
    SchemaDriftError,
    load_convergence,
    load_sufficient_cluster,
)
from .render import PlotSpec, render

__all__ = [
    "PlotSpec",
    "render",
    "ManifestError",
    "SchemaDriftError",
    "EmptyDataError",
    "IntegrityError",
    "load_convergence",
    "load_sufficient_cluster",
]

__version__ = "0.1.0"
