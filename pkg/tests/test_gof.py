import math

import numpy as np
import pytest
import scipy.special
from hypothesis import given, strategies as st

from emsequity.errors import DomainError
from emsequity.gof import HLGroup, chi_square_sf, hl_statistic, hosmer_lemeshow, parse_grouping
from emsequity.ingest import IncomeBracket as B
from emsequity.logit import fit_outcomes


def grouped(counts):
    out = []
    for b, (k, n) in counts.items():
        out += [(b, 1)] * k + [(b, 0)] * (n - k)
    return out


def test_sf_at_zero():
    for df in (1, 2, 3, 7, 40):
        assert chi_square_sf(0.0, df) == 1.0


def test_sf_df2_closed_form():
    assert chi_square_sf(2.0, 2) == pytest.approx(math.exp(-1), abs=1e-15)
    for x in np.arange(0, 50.5, 0.5):
        assert abs(chi_square_sf(float(x), 2) - math.exp(-x / 2)) <= 1e-12


def test_sf_far_tail():
    assert chi_square_sf(100.0, 1) < 1e-20
    assert chi_square_sf(math.inf, 3) == 0.0


def test_sf_errors():
    for x, df in ((-1.0, 2), (math.nan, 2), (1.0, 0)):
        with pytest.raises(DomainError):
            chi_square_sf(x, df)


@given(st.floats(0, 400, allow_nan=False), st.integers(1, 120))
def test_sf_matches_scipy(x, df):
    assert chi_square_sf(x, df) == pytest.approx(scipy.special.gammaincc(df / 2, x / 2), abs=1e-10)


@given(st.integers(1, 30), st.floats(0, 80, allow_nan=False), st.floats(0.01, 5))
def test_sf_decreasing(df, x, dx):
    assert chi_square_sf(x + dx, df) <= chi_square_sf(x, df)


def test_hand_built_three_groups():
    groups = [HLGroup("a", 10, 3, 2.5), HLGroup("b", 20, 12, 11.0), HLGroup("c", 5, 1, 2.0)]
    # (O-E)^2/E over both outcome classes, summed by hand: 1157/990
    assert abs(hl_statistic(groups) - 1157 / 990) <= 1e-12


def test_zero_expected_cells():
    assert hl_statistic([HLGroup("a", 4, 0, 0.0)]) == 0.0
    with pytest.raises(DomainError):
        hl_statistic([HLGroup("a", 4, 1, 0.0)])


def test_two_groups_exact_fit():
    m = fit_outcomes(grouped({B.B2: (5, 10), B.B3: (7, 10)}))
    res = hosmer_lemeshow(m, grouped({B.B2: (5, 10), B.B3: (7, 10)}))
    assert res.chi2 == pytest.approx(0.0, abs=1e-20)
    assert res.df == 1
    assert res.p_value == 1.0


def test_saturated_fit_vanishing_statistic():
    data = grouped({B.B2: (247, 500), B.B3: (279, 500), B.B4: (312, 500), B.B5: (277, 500)})
    res = hosmer_lemeshow(fit_outcomes(data), data)
    assert res.chi2 <= 1e-8
    assert res.p_value >= 0.9999
    assert res.df == 2
    assert [g.group_id for g in res.groups] == ["B2", "B3", "B4", "B5"]


def test_decile_grouping():
    data = grouped({B.B2: (247, 500), B.B3: (279, 500), B.B4: (312, 500), B.B5: (277, 500)})
    res = hosmer_lemeshow(fit_outcomes(data), data, "deciles")
    assert res.chi2 <= 1e-8
    assert sum(g.n for g in res.groups) == len(data)


def test_parse_grouping():
    assert parse_grouping("covariate_pattern")[0] == "covariate_pattern"
    assert parse_grouping("deciles:5") == ("deciles", 5)
    with pytest.raises(Exception):
        parse_grouping("quartiles")


def test_deciles_without_ties_are_near_equal():
    data = grouped({b: (k, 10) for b, k in zip(B, (2, 3, 4, 5, 6, 7))})
    res = hosmer_lemeshow(fit_outcomes(data), data, "deciles:3")
    assert [g.n for g in res.groups] == [20, 20, 20]
    assert res.chi2 <= 1e-8
