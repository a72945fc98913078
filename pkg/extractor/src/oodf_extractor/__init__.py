"""Export multi-layer global-average-pooled features to OODF files."""

from .extract import ExtractionSpec, extract
from .oodf import write_oodf

__version__ = "0.1.0"

__all__ = ["ExtractionSpec", "extract", "write_oodf", "__version__"]
