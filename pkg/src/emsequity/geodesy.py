"""Great-circle distances on a spherical Earth.

Points are stored in decimal degrees and converted to radians only inside
the distance functions.  Distances are haversine angular distances scaled
by a configurable Earth radius (3959 statute miles by default).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputValidationError

EARTH_RADIUS_MILES = 3959.0


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        for name, limit in (("lat_deg", 90.0), ("lon_deg", 180.0)):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InputValidationError(f"{name} must be a finite number, got {value!r}", field=name)
            if not -limit <= value <= limit:
                raise InputValidationError(f"{name}={value} outside [-{limit:g}, {limit:g}]", field=name)


def great_circle_radians(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine angular distance between ``a`` and ``b`` in radians.

    The square root of the haversine term is clamped to [0, 1] so that
    near-antipodal pairs never push ``asin`` outside its domain.
    """
    lat_a = math.radians(a.lat_deg)
    lat_b = math.radians(b.lat_deg)
    s_lat = math.sin((lat_a - lat_b) / 2.0)
    s_lon = math.sin(math.radians(a.lon_deg - b.lon_deg) / 2.0)
    h = s_lat * s_lat + math.cos(lat_a) * math.cos(lat_b) * s_lon * s_lon
    return 2.0 * math.asin(min(1.0, max(0.0, math.sqrt(h))))


def great_circle_radians_array(lat_a, lon_a, lat_b, lon_b) -> np.ndarray:
    """Vectorised :func:`great_circle_radians` over broadcastable degree arrays.

    Same operation order as the scalar version; results agree to within a
    few ulps (numpy and libm trig may round differently).
    """
    lat_a = np.radians(np.asarray(lat_a, dtype=float))
    lat_b = np.radians(np.asarray(lat_b, dtype=float))
    s_lat = np.sin((lat_a - lat_b) / 2.0)
    s_lon = np.sin(np.radians(np.asarray(lon_a, dtype=float) - np.asarray(lon_b, dtype=float)) / 2.0)
    h = s_lat * s_lat + np.cos(lat_a) * np.cos(lat_b) * s_lon * s_lon
    return 2.0 * np.arcsin(np.clip(np.sqrt(h), 0.0, 1.0))


def radians_to_miles(d, radius: float = EARTH_RADIUS_MILES):
    """Scale an angular distance (radians) to statute miles."""
    if np.any(np.asarray(d) < 0):
        raise InputValidationError(f"angular distance must be nonnegative, got {d!r}", field="d")
    return d * radius


def distance_miles(a: GeoPoint, b: GeoPoint, radius: float = EARTH_RADIUS_MILES) -> float:
    return radians_to_miles(great_circle_radians(a, b), radius)
