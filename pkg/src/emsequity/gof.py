"""Hosmer-Lemeshow goodness of fit and the chi-square tail it needs.

The chi-square survival function is the regularized upper incomplete
gamma function Q(df/2, x/2).  It is evaluated here directly: a power
series for P(a, x) when x < a + 1 and a Lentz continued fraction for
Q(a, x) otherwise (Numerical Recipes, ch. 6.2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .ingest import IncomeBracket
from .logit import LogitModel, predict_prob

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 100_000


def _gamma_series(a: float, x: float) -> float:
    """Lower regularized P(a, x) by its power series."""
    if x == 0.0:
        return 0.0
    term = total = 1.0 / a
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_cf(a: float, x: float) -> float:
    """Upper regularized Q(a, x) by continued fraction (modified Lentz)."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    raise ArithmeticError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def regularized_gamma_q(a: float, x: float) -> float:
    if a <= 0:
        raise DomainError(f"shape a must be positive, got {a}")
    if x < 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def regularized_gamma_p(a: float, x: float) -> float:
    if a <= 0:
        raise DomainError(f"shape a must be positive, got {a}")
    if x < 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def chi_square_sf(x: float, df: int) -> float:
    """P(X > x) for X ~ chi-square with ``df`` degrees of freedom."""
    if not x >= 0:
        raise DomainError(f"chi-square statistic must be nonnegative, got {x}")
    if df < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {df}")
    if math.isinf(x):
        return 0.0
    return regularized_gamma_q(df / 2.0, x / 2.0)


@dataclass(frozen=True)
class HLGroup:
    group_id: str
    n: int
    observed: int
    expected: float


@dataclass(frozen=True)
class HLResult:
    chi2: float
    df: int
    p_value: float
    groups: tuple[HLGroup, ...]

    def to_dict(self) -> dict:
        return {
            "chi2": self.chi2,
            "df": self.df,
            "p_value": self.p_value,
            "groups": [
                {"group": g.group_id, "n": g.n, "observed": g.observed, "expected": g.expected}
                for g in self.groups
            ],
        }


def parse_grouping(grouping) -> tuple[str, int]:
    """``"covariate_pattern"`` or ``"deciles"`` / ``"deciles:g"``."""
    if isinstance(grouping, tuple):
        return grouping
    name, _, g = str(grouping).partition(":")
    name = name.strip()
    if name == "covariate_pattern":
        return name, 0
    if name == "deciles":
        g = int(g) if g else 10
        if g < 3:
            raise DomainError(f"decile grouping needs g >= 3, got {g}")
        return name, g
    raise DomainError(f"unknown grouping {grouping!r}")


def hl_statistic(groups: Sequence[HLGroup]) -> float:
    """Sum of (O - E)^2 / E over groups and both outcome classes."""
    terms = []
    for g in groups:
        for obs, exp in ((g.observed, g.expected), (g.n - g.observed, g.n - g.expected)):
            if exp == 0.0:
                if obs != 0:
                    raise DomainError(f"group {g.group_id}: expected count 0 but observed {obs}")
                continue
            terms.append((obs - exp) ** 2 / exp)
    return math.fsum(terms)


def hosmer_lemeshow(model: LogitModel, outcomes: Sequence[tuple[IncomeBracket, int]],
                    grouping="covariate_pattern") -> HLResult:
    """Hosmer-Lemeshow test of ``model`` against observed ``outcomes``.

    Covariate-pattern grouping puts each bracket in its own group; decile
    grouping sorts by predicted probability and cuts into at most ``g``
    near-equal groups, never splitting observations with equal predicted
    probability.  ``df = groups - 2``, floored at 1.
    """
    kind, g = parse_grouping(grouping)
    if not outcomes:
        raise DomainError("no observations")
    prob = {b: predict_prob(model, b) for b in {b for b, _ in outcomes}}

    if kind == "covariate_pattern":
        tallies: dict[IncomeBracket, list] = {}
        for b, y in outcomes:
            t = tallies.setdefault(b, [0, 0])
            t[0] += 1
            t[1] += y
        groups = tuple(HLGroup(b.name, n, obs, n * prob[b]) for b, (n, obs) in sorted(tallies.items()))
    else:
        p = np.array([prob[b] for b, _ in outcomes])
        y = np.array([o for _, o in outcomes])
        order = np.argsort(p, kind="stable")
        ps = p[order]
        n = len(ps)
        # nominal cut after row k*n/g, pushed to the end of any tie run
        cuts = sorted({int(np.searchsorted(ps, ps[(k * n) // g - 1], side="right")) for k in range(1, g)
                       if (k * n) // g > 0} | {n})
        bounds = zip([0] + cuts[:-1], cuts)
        groups = tuple(
            HLGroup(f"decile{i + 1}", int(hi - lo), int(y[order[lo:hi]].sum()), math.fsum(ps[lo:hi].tolist()))
            for i, (lo, hi) in enumerate(bounds)
        )

    chi2 = hl_statistic(groups)
    df = max(len(groups) - 2, 1)
    return HLResult(chi2, df, chi_square_sf(chi2, df), groups)
