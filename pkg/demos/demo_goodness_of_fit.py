"""
Hosmer-Lemeshow on a saturated model
=====================================

When each covariate pattern has its own parameter, observed and expected
counts agree, so the statistic collapses to rounding noise and the p-value
is 1.
"""

import math

from emsequity.gof import chi_square_sf, hosmer_lemeshow
from emsequity.ingest import IncomeBracket as B
from emsequity.logit import fit_outcomes

outcomes = [(B.B2, int(i < 98)) for i in range(1000)] + [(B.B3, int(i < 714)) for i in range(1000)]
outcomes += [(B.B4, int(i < 928)) for i in range(1000)] + [(B.B5, int(i < 780)) for i in range(1000)]
model = fit_outcomes(outcomes, reference=B.B3)

res = hosmer_lemeshow(model, outcomes)
print(f"chi2 = {res.chi2:.3g}, df = {res.df}, p = {res.p_value}")
for g in res.groups:
    print(g.group_id, g.n, g.observed, round(g.expected, 9))

# decile grouping keeps tied probabilities together, so it sees the same four groups
print(len(hosmer_lemeshow(model, outcomes, "deciles").groups))

# with two degrees of freedom the tail is exp(-x/2)
for x in (0.0, 2.0, 5.991, 20.0):
    print(x, chi_square_sf(x, 2), math.exp(-x / 2))
