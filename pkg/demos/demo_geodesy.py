"""
Great-circle distances and nearest facilities
==============================================

Distances between calls and facilities are great-circle distances on a
sphere of radius 3959 miles.  This script measures one pair, then assigns
a batch of random calls to their nearest station.
"""

import numpy as np

from emsequity.geodesy import GeoPoint, distance_miles, great_circle_radians
from emsequity.ingest import Facility, FacilityKind
from emsequity.metrics import assign_nearest, nearest_facility

civic_center = GeoPoint(37.7793, -122.4193)
ocean_beach = GeoPoint(37.7594, -122.5107)
print("angle  :", great_circle_radians(civic_center, ocean_beach), "rad")
print("miles  :", round(distance_miles(civic_center, ocean_beach), 3))

# a handful of stations; ids decide ties
stations = [
    Facility("ST01", FacilityKind.FIRE_STATION, GeoPoint(37.7765, -122.4172)),
    Facility("ST02", FacilityKind.FIRE_STATION, GeoPoint(37.7526, -122.4862)),
    Facility("ST03", FacilityKind.FIRE_STATION, GeoPoint(37.7340, -122.3900)),
    Facility("ST04", FacilityKind.FIRE_STATION, GeoPoint(37.7990, -122.4370)),
]
print(nearest_facility(ocean_beach, stations))

# the batch version scans every station for every call, in chunks
rng = np.random.default_rng(0)
lat = rng.uniform(37.71, 37.81, 10_000)
lon = rng.uniform(-122.51, -122.37, 10_000)
ids, miles = assign_nearest(lat, lon, stations)
for sid in sorted(set(ids)):
    mask = np.array(ids) == sid
    print(f"{sid}: {mask.sum():5d} calls, mean {miles[mask].mean():.2f} mi")
