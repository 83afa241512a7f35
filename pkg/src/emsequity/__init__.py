"""Emergency-service access by ZIP-code income bracket.

Response times and great-circle distances to the nearest fire station and
emergency room are binarized against thresholds and modelled with a
dummy-coded logistic regression on each ZIP's median income bracket.
"""
from .errors import (ConfigurationError, DomainError, EquityError, InputValidationError, RankDeficiencyError,
                     SeparationError)
from .geodesy import EARTH_RADIUS_MILES, GeoPoint, great_circle_radians, radians_to_miles
from .gof import HLResult, chi_square_sf, hosmer_lemeshow
from .ingest import (Category, Facility, FacilityKind, FilterReport, FilterRules, IncomeBracket, Incident,
                     ZipProfile, assign_bracket, filter_incidents, load_facilities, parse_incidents)
from .logit import Encoding, LogitModel, build_design, fit, fit_outcomes, predict_prob
from .metrics import (Metric, ResponseRecord, SummaryStats, Thresholds, binarize, derive_thresholds,
                      nearest_facility, response_time, summarize)

__version__ = "0.1.0"
