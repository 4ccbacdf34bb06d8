"""Transform solver: generating functions, LST, mean pipeline, inversion."""

import math

import numpy as np
import pytest

from psbatch.errors import DomainError, InversionUnstable
from psbatch.model import ModelParams, spectral
from psbatch.solver import (
    AuxPolynomials,
    E1_qv,
    E_qv,
    E_uv,
    F1_at_rho_plus_q,
    F_at_zero,
    F_uv,
    batch_lst,
    batch_lst_analytic,
    ccdf,
    mean_batch_sojourn,
    pde_residual,
    stehfest_weights,
)
from psbatch.triangular import solve_boundary_lst, solve_boundary_mean

from conftest import GRID, POINTS

REF = ModelParams(0.5, 0.3)

# transform values at the reference point, frozen from the truncated
# conditional-recurrence oracle (n_max=400, b_max=60, agreement ~1e-11)
FROZEN_LST = {0.5: 0.3393237113, 1.0: 0.2173330702, 2.0: 0.1286798987}

# batch sojourn means frozen from the conditional-mean oracle
FROZEN_MEAN = {(0.5, 0.3): 5.577701147, (0.3, 0.2): 2.064403476, (0.2, 0.5): 3.697744379}


@pytest.fixture(scope="module")
def sp1():
    return spectral(REF, 1.0)


@pytest.fixture(scope="module")
def sp0():
    return spectral(REF, 0.0)


class TestGeneratingFunctions:
    def test_E_qv_zero_s_identity(self, sp0):
        # all conditional transforms are 1 at s=0, so E telescopes to a geometric sum
        for v in (0.05, 0.2, 0.3, 0.6):
            want = v / (0.7 * (1.0 - v))
            assert E_qv(sp0, v) == pytest.approx(want, rel=1e-12), f"v={v}"

    def test_F_uv_zero_s_identity(self, sp0):
        for u, v in [(0.3, 0.1), (0.55, 0.2), (0.7, 0.5)]:
            want = v / ((1.0 - v) * (1.0 - u) * 0.7)
            assert F_uv(sp0, u, v) == pytest.approx(want, rel=1e-9), f"(u,v)=({u},{v})"

    def test_E_qv_vanishes_at_zero(self, sp1):
        assert E_qv(sp1, 0.0) == 0.0

    def test_E_qv_domain(self, sp1):
        with pytest.raises(DomainError):
            E_qv(sp1, sp1.u_minus)

    def test_F_uv_domain(self, sp1):
        # v must stay below u; the diagonal itself is a continuous limit
        with pytest.raises(DomainError):
            F_uv(sp1, 0.2, 0.3)
        with pytest.raises(DomainError):
            F_uv(sp1, 0.3, 0.4)
        assert math.isfinite(F_uv(sp1, 0.3, 0.3))

    def test_F_uv_vanishes_at_v_zero(self, sp1):
        assert F_uv(sp1, 0.4, 0.0) == 0.0

    def test_F_near_diagonal_extrapolation_continuous(self, sp1):
        # the Richardson patch inside |u - v| < 1e-6 must join the direct path
        v = 0.25
        patched = F_uv(sp1, v + 5e-7, v)
        direct = F_uv(sp1, v + 5e-3, v)
        nearby = F_uv(sp1, v + 1e-4, v)
        # F is smooth in u; successive values approach each other
        assert abs(patched - nearby) < abs(patched - direct)
        assert patched == pytest.approx(nearby, rel=1e-3)

    def test_F_at_zero_matches_extrapolation(self, sp1):
        """The u=0 closed form continues F off the evaluated wedge."""
        v = 5e-5
        f1 = F_uv(sp1, 1e-4, v)
        f2 = F_uv(sp1, 2e-4, v)
        extrap = f1 + (f1 - f2) * (1e-4 - 0.0) / 1e-4
        assert F_at_zero(sp1, v) == pytest.approx(extrap, rel=1e-4)

    def test_E_uv_assembly(self, sp1):
        # E(u,v) = (u-q) F(u,v) + E(q,v) by construction; spot-check coherence
        u, v = 0.6, 0.2
        assert E_uv(sp1, u, v) == pytest.approx(
            (u - REF.q) * F_uv(sp1, u, v) + E_qv(sp1, v), rel=1e-13
        )

    def test_X_two_forms_agree(self, sp1):
        aux = AuxPolynomials(sp1)
        v = np.linspace(1e-3, 0.9 * sp1.u_minus, 80)
        a = np.array([aux.X(float(vi)) for vi in v])
        b = np.array([aux.X_direct(float(vi)) for vi in v])
        assert np.max(np.abs(a / b - 1.0)) < 1e-12

    def test_generating_function_vs_boundary_solve(self):
        """sum_l E_l(q) v^l reproduces E(q, v) for moderate v."""
        for s in (0.5, 1.0, 2.0):
            sp = spectral(REF, s)
            tab = solve_boundary_lst(sp, b_max=60)
            for v in (0.1, REF.q):
                series = sum(
                    tab.coefficient(l) * v**l for l in range(1, 61)
                )
                assert E_qv(sp, v) == pytest.approx(series, abs=1e-6), f"s={s}, v={v}"


class TestBatchLst:
    def test_normalization_short_circuit(self):
        tv = batch_lst(REF, 0.0)
        assert tv.value == 1.0 and tv.s == 0.0

    def test_analytic_path_normalization(self):
        assert batch_lst_analytic(REF, 0.0) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("s,want", sorted(FROZEN_LST.items()))
    def test_frozen_values(self, s, want):
        assert batch_lst(REF, s).value == pytest.approx(want, abs=1e-9)

    def test_rejects_negative_s(self):
        with pytest.raises(DomainError):
            batch_lst(REF, -0.5)

    def test_complete_monotonicity_signs(self):
        """LST of a nonnegative variable: alternating finite differences."""
        s_grid = np.array([0.1 * k for k in range(1, 21)])
        vals = np.array([batch_lst(REF, float(s)).value for s in s_grid])
        d1, d2, d3 = np.diff(vals), np.diff(vals, n=2), np.diff(vals, n=3)
        assert np.all(vals > 0) and np.all(vals < 1)
        assert np.all(d1 < 0) and np.all(d2 > 0) and np.all(d3 < 0)

    def test_derivative_at_zero_is_minus_mean(self):
        h = 1e-4
        fd = (batch_lst(REF, h).value - 1.0) / h
        assert fd == pytest.approx(-FROZEN_MEAN[(0.5, 0.3)], rel=1e-3)


class TestMeanPipeline:
    def test_E1_matches_boundary_series(self):
        """Series sum_l E1_l q^l of the derivative system reproduces E1(q, q)."""
        sp0 = spectral(REF, 0.0)
        tab = solve_boundary_mean(sp0, b_max=60)
        series = sum(tab.coefficient(l) * REF.q**l for l in range(1, 61))
        assert E1_qv(REF, REF.q) == pytest.approx(series, abs=1e-8)

    def test_E1_series_coefficients_by_differencing(self):
        """Fourth-order central differences recover the first two series terms."""
        h = 0.02
        e = {k: E1_qv(REF, k * h) for k in (-2, -1, 1, 2)}
        c1 = (8.0 * (e[1] - e[-1]) - (e[2] - e[-2])) / (12.0 * h)
        c2 = (16.0 * (e[1] + e[-1]) - (e[2] + e[-2])) / (24.0 * h * h)
        assert c1 == pytest.approx(-2.6984126984, rel=1e-4)
        assert c2 == pytest.approx(-5.4761904762, rel=1e-4)

    def test_E1_frozen_values(self):
        frozen = {(0.5, 0.3): -1.676236140, (0.3, 0.2): -0.540715383, (0.2, 0.5): -6.864943648}
        for (rho, q), want in frozen.items():
            p = ModelParams(rho, q)
            assert E1_qv(p, q) == pytest.approx(want, rel=1e-8), f"({rho},{q})"

    def test_F1_frozen_values(self):
        frozen = {
            (0.5, 0.3): -22.211613094,
            (0.3, 0.2): -1.916716389,
            (0.2, 0.5): -40.567982694,
        }
        for (rho, q), want in frozen.items():
            p = ModelParams(rho, q)
            assert F1_at_rho_plus_q(p, q) == pytest.approx(want, rel=1e-7), f"({rho},{q})"

    @pytest.mark.parametrize("rho,q", POINTS)
    def test_mean_frozen_values(self, rho, q):
        want = FROZEN_MEAN[(rho, q)]
        assert mean_batch_sojourn(ModelParams(rho, q)) == pytest.approx(want, rel=1e-8)

    def test_mean_dominates_job_mean(self, mean_grid):
        """The whole batch leaves no earlier than a lone job would."""
        for (rho, q), m in mean_grid.items():
            assert m >= 1.0 / (1.0 - rho - q) - 1e-9, f"({rho},{q})"

    def test_mean_increasing_in_rho(self, mean_grid):
        by_q = {}
        for (rho, q), m in mean_grid.items():
            by_q.setdefault(q, []).append((rho, m))
        for q, pairs in by_q.items():
            pairs.sort()
            means = [m for _, m in pairs]
            assert all(a < b for a, b in zip(means, means[1:])), f"q={q}"

    def test_mean_increasing_in_q(self, mean_grid):
        by_rho = {}
        for (rho, q), m in mean_grid.items():
            by_rho.setdefault(rho, []).append((q, m))
        for rho, pairs in by_rho.items():
            pairs.sort()
            means = [m for _, m in pairs]
            assert all(a < b for a, b in zip(means, means[1:])), f"rho={rho}"


class TestPdeResidual:
    def test_small_on_interior_points(self):
        for u, frac in [(0.3, 0.4), (0.5, 0.5), (0.62, 0.6)]:
            res, scale = pde_residual(REF, 1.0, u, u * frac)
            assert abs(res) <= 1e-3 * scale, f"(u,frac)=({u},{frac})"

    def test_rejects_cramped_stencil(self):
        with pytest.raises(DomainError):
            pde_residual(REF, 1.0, 0.3, 0.2999)


class TestInversion:
    def test_order_two_weights(self):
        assert stehfest_weights(2) == (2.0, -2.0)

    def test_weights_sum_to_zero(self):
        for order in (4, 8, 12):
            assert abs(sum(stehfest_weights(order))) < 1e-8 * max(
                abs(w) for w in stehfest_weights(order)
            )

    def test_weights_reject_odd_or_tiny_order(self):
        with pytest.raises(DomainError):
            stehfest_weights(7)
        with pytest.raises(DomainError):
            ccdf(REF, [1.0], order=2)

    def test_ccdf_curve_shape(self):
        t = np.array([0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0])
        curve = ccdf(REF, t)
        assert np.all(np.diff(curve.values) < 0)
        assert np.all((0.0 <= curve.values) & (curve.values <= 1.0))
        assert curve.max_order_disagreement < 1e-3
        assert curve.order == 12

    def test_ccdf_frozen_midpoint(self):
        # pinned from the order-12/order-10 pair at the reference point
        curve = ccdf(REF, [2.0])
        assert curve.values[0] == pytest.approx(0.58975318, abs=1e-5)

    def test_unstable_slack_raises(self):
        with pytest.raises(InversionUnstable):
            ccdf(REF, [5.0], slack=1e-9)
