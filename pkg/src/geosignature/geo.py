"""Great-circle and local planar distance helpers."""

from __future__ import annotations

import math

import numpy as np

EARTH_RADIUS_KM = 6371.0088
# km per degree for the local planar projection used by area/distance.
KM_PER_DEGREE = 111.195


def haversine_km(lon1, lat1, lon2, lat2):
    """Great-circle distance in km; accepts scalars or broadcastable arrays."""
    lon1, lat1, lon2, lat2 = map(np.radians, (lon1, lat1, lon2, lat2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def cos_lat(lat_deg: float) -> float:
    return math.cos(math.radians(lat_deg))
