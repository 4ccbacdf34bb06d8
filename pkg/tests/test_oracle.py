"""Truncated conditional-recurrence oracle: frozen entries, structure, tails."""

import numpy as np
import pytest

from psbatch.errors import DomainError, TruncationWarning
from psbatch.model import ModelParams, spectral
from psbatch.oracle import (
    aggregate_lst,
    aggregate_mean,
    column_generating,
    generating_value,
    solve_conditional_lst,
    solve_conditional_means,
)
from psbatch.solver import E_uv, E_qv

REF = ModelParams(0.5, 0.3)


@pytest.fixture(scope="module")
def lst_table():
    return solve_conditional_lst(REF, s=1.0, n_max=400, b_max=60)


@pytest.fixture(scope="module")
def mean_table():
    return solve_conditional_means(REF, n_max=400, b_max=60)


def test_mean_entries_closed_form(mean_table):
    """M_{0,1} and M_{1,1} have hand-derivable values at the reference point.

    A lone job with no background work: one exponential phase plus the batch
    arrivals it may pick up; conditioning the first transition gives 14/9.
    """
    assert mean_table.entries[0, 1] == pytest.approx(14.0 / 9.0, rel=1e-10)
    assert mean_table.entries[1, 1] == pytest.approx(7.0 / 3.0, rel=1e-10)


def test_lst_kind_checks(lst_table, mean_table):
    assert lst_table.kind == "lst"
    assert mean_table.kind == "mean"
    with pytest.raises(DomainError):
        aggregate_lst(mean_table, REF)
    with pytest.raises(DomainError):
        aggregate_mean(lst_table, REF)


def test_lst_entries_decrease_in_n_and_b(lst_table):
    # stay in the bulk of the table: far columns decay below the solver's
    # truncation floor (~1e-12 here) where successive entries tie exactly
    e = lst_table.entries[:60, 1:31]
    assert np.all(np.diff(e, axis=0) < 0), "transforms must decrease in n"
    assert np.all(np.diff(e, axis=1) < 0), "transforms must decrease in b"
    assert np.all((0 < e) & (e < 1))


def test_mean_entries_increase(mean_table):
    m = mean_table.entries[:60, 1:40]
    assert np.all(np.diff(m, axis=0) > 0), "means must increase in n"
    assert np.all(np.diff(m, axis=1) > 0), "means must increase in b"


def test_truncation_sensitivity_reported(lst_table):
    assert lst_table.truncation_sensitivity >= 0.0
    assert lst_table.truncation_sensitivity < 1e-8


def test_truncation_warning_on_coarse_table():
    # small s decays slowly in n, so the smallest legal table is too short
    with pytest.warns(TruncationWarning):
        solve_conditional_lst(ModelParams(0.5, 0.3), s=0.01, n_max=40, b_max=60)


def test_aggregate_lst_bracket(lst_table):
    br = aggregate_lst(lst_table, REF)
    assert br.half_width < 1e-10
    assert br.value == pytest.approx(0.2173330701899628, abs=1e-9)


def test_aggregate_mean_bracket(mean_table):
    br = aggregate_mean(mean_table, REF)
    assert br.half_width < 1e-7
    assert br.value == pytest.approx(5.577701147, rel=1e-8)


def test_generating_value_consistency(lst_table):
    """Horner column sum and the direct double sum must agree."""
    u, v = 0.55, 0.25
    cols = sum(
        column_generating(lst_table, b, u) * v**b
        for b in range(1, lst_table.b_max + 1)
    )
    # column_generating sums over n with weight u^n; multiply in v^b
    assert generating_value(lst_table, u, v) == pytest.approx(cols, rel=1e-12)


def test_oracle_matches_analytic_generating_function(lst_table):
    """Full assembly check of E(s; u, v) against the transform solver."""
    sp = spectral(REF, 1.0)
    u = REF.rho + REF.q
    v = 0.99 * REF.q * u
    mine = E_uv(sp, u, v)
    oracle = generating_value(lst_table, u, v)
    assert mine == pytest.approx(oracle, abs=1e-10)


def test_oracle_matches_E_qv(lst_table):
    sp = spectral(REF, 1.0)
    for v in (0.1, 0.2, 0.3):
        oracle = generating_value(lst_table, REF.q, v)
        assert E_qv(sp, v) == pytest.approx(oracle, abs=1e-10), f"v={v}"


def test_column_generating_bounds(lst_table):
    with pytest.raises(DomainError):
        column_generating(lst_table, lst_table.b_max + 1, 0.5)


def test_lst_zero_s_gives_ones():
    tab = solve_conditional_lst(REF, s=0.0, n_max=50, b_max=10)
    assert np.allclose(tab.entries[:, 1:], 1.0, atol=1e-10)
