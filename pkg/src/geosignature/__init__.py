"""Social-sensing pipeline: event filtering, landuse joins, key locations and bias metrics."""

__version__ = "0.1.0"
