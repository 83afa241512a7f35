"""
Bracket-only logistic regression
=================================

With the intercept plus one dummy per non-reference bracket, the model has
one parameter per group.  The fit is then saturated: each bracket's fitted
probability is its observed proportion, and every coefficient is a
difference of log-odds.
"""

import math

from emsequity.ingest import IncomeBracket as B
from emsequity.logit import fit_outcomes, predict_prob

counts = {B.B2: (494, 1000), B.B3: (559, 1000), B.B4: (624, 1000), B.B5: (553, 1000)}
outcomes = [(b, 1) for b, (k, n) in counts.items() for _ in range(k)]
outcomes += [(b, 0) for b, (k, n) in counts.items() for _ in range(n - k)]

m = fit_outcomes(outcomes, reference=B.B5)
print("iterations", m.iterations, "converged", m.converged)
print({k: round(v, 4) for k, v in m.coefficients().items()})

for b, (k, n) in counts.items():
    print(b.short_label, round(predict_prob(m, b), 6), "observed", k / n)

# the intercept is the reference bracket's log-odds
print(m.beta[0], math.log(553 / 447))

# a different reference moves the coefficients, not the probabilities
m2 = fit_outcomes(outcomes, reference=B.B2)
print([round(predict_prob(m2, b) - predict_prob(m, b), 12) for b in counts])
