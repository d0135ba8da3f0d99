"""Landuse parcels, activity legend, and the nearest-parcel spatial join."""

from .index import SpatialIndex, build_index, nearest_parcel, nearest_parcels
from .parcels import (
    DEFAULT_CLASS_NAMES,
    N_CLASSES,
    ActivityLegend,
    GeometryError,
    Parcel,
    ParcelLoadReport,
    class_area_weights,
    load_legend,
    load_parcels,
    parcels_to_geojson,
    polygon_area_km2,
    write_legend,
)

__all__ = [
    "ActivityLegend",
    "DEFAULT_CLASS_NAMES",
    "GeometryError",
    "N_CLASSES",
    "Parcel",
    "ParcelLoadReport",
    "SpatialIndex",
    "build_index",
    "class_area_weights",
    "load_legend",
    "load_parcels",
    "nearest_parcel",
    "nearest_parcels",
    "parcels_to_geojson",
    "polygon_area_km2",
    "write_legend",
]
