import math

import numpy as np
import pytest

from privrel.errors import InputError
from privrel.inference import (
    ComponentCountDistribution,
    LifetimeSample,
    binomial_pmf,
    count_distribution,
    distribution_from_survival,
    empirical_survival,
    load_lifetimes,
    parse_lifetimes,
    save_lifetimes,
    survival_function,
)


def test_empirical_survival_is_right_continuous():
    s = LifetimeSample((1.0, 2.0, 3.0, 4.0))
    assert empirical_survival(s, 0.0) == 1.0
    assert empirical_survival(s, 1.0) == 0.75
    assert empirical_survival(s, 2.5) == 0.5
    assert empirical_survival(s, 4.0) == 0.0


def test_kaplan_meier_with_censoring():
    s = LifetimeSample((1.0, 2.0, 3.0, 4.0), (False, True, False, False))
    got = survival_function(s, [0.5, 1.0, 2.0, 3.0, 4.0])
    assert np.allclose(got, [1.0, 0.75, 0.75, 0.375, 0.0])


def test_all_censored_keeps_survival_at_one():
    s = LifetimeSample((1.0, 2.0), (True, True))
    assert list(survival_function(s, [0.5, 3.0])) == [1.0, 1.0]


def test_binomial_pmf():
    assert binomial_pmf(2, 0.5) == (0.25, 0.5, 0.25)
    assert binomial_pmf(0, 0.3) == (1.0,)
    assert math.fsum(binomial_pmf(7, 0.37)) == pytest.approx(1.0, abs=1e-15)


def test_count_distribution():
    s = LifetimeSample((1.0, 3.0))
    d = count_distribution(s, 2, [0.0, 2.0, 5.0], type_id=3)
    assert d.type_id == 3 and d.multiplicity == 2
    assert d.at(2.0) == (0.25, 0.5, 0.25)
    assert d.at(5.0) == (1.0, 0.0, 0.0)
    with pytest.raises(InputError):
        d.at(1.5)


def test_distribution_rows_must_sum_to_one():
    with pytest.raises(InputError):
        ComponentCountDistribution(1, (0.0,), ((0.5, 0.4),))
    d = distribution_from_survival([1.0, 0.5], 1, [0.0, 1.0])
    assert d.pmf == ((0.0, 1.0), (0.5, 0.5))


@pytest.mark.parametrize("bad", [(), (0.0,), (-1.0,), (float("nan"),)])
def test_invalid_samples(bad):
    with pytest.raises(InputError):
        LifetimeSample(bad)


def test_lifetime_file_round_trip(tmp_path):
    s = LifetimeSample((0.5, 1.25, 3.0), (False, True, False))
    p = tmp_path / "x.txt"
    save_lifetimes(s, p, header="privrel-lifetimes/1")
    assert load_lifetimes(p) == s


def test_parse_lifetimes_errors():
    assert parse_lifetimes("# only comments\n1.5\n2.5 0\n").observations == (1.5, 2.5)
    with pytest.raises(InputError, match="no lifetime observations"):
        parse_lifetimes("# nothing\n")
    with pytest.raises(InputError, match="2"):
        parse_lifetimes("1.0\nabc\n")
    with pytest.raises(InputError):
        parse_lifetimes("1.0 2\n")
    with pytest.raises(InputError):
        load_lifetimes("/nonexistent/data.txt")
