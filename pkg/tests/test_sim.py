"""Monte Carlo tagged-batch simulator: RNG anchoring, laws, reproducibility."""

import math

import numpy as np
import pytest
from numpy.random import Philox
from scipy import stats
from scipy.special import gammainc

from psbatch.model import ModelParams
from psbatch.sim import (
    _philox_raw_block,
    coupled_sojourn_samples,
    dkw_band,
    ecdf_ccdf,
    simulate_batch_sojourn,
    simulate_job_sojourn,
)

REF = ModelParams(0.5, 0.3)
SEED = 12345

# first raw block of numpy's Philox stream for key=12345 (counter pre-incremented
# to (1,0,0,0)); pins the in-kernel generator bit-for-bit
ANCHOR_BLOCK = (
    0xA5792C0A0ED6A560,
    0xC63666BA8B756514,
    0xC953E311F634209D,
    0x28DB5404D83FAC91,
)


@pytest.fixture(scope="module")
def batch_run():
    return simulate_batch_sojourn(REF, n_reps=200_000, seed=SEED)


class TestPhilox:
    def test_frozen_anchor_block(self):
        assert _philox_raw_block((1, 0, 0), (SEED,)) == ANCHOR_BLOCK

    def test_matches_numpy_stream(self):
        want = [int(x) for x in Philox(key=SEED).random_raw(12)]
        got = []
        for blk in (1, 2, 3):
            got.extend(_philox_raw_block((blk, 0, 0), (SEED,)))
        assert want == got

    def test_substreams_differ(self):
        a = _philox_raw_block((1, 7, 0), (SEED,))
        b = _philox_raw_block((1, 8, 0), (SEED,))
        c = _philox_raw_block((1, 7, 1), (SEED,))
        assert a != b and a != c and b != c


class TestBatchSimulator:
    def test_mean_within_ci(self, batch_run):
        # frozen analytic mean at the reference point
        assert abs(batch_run.mean - 5.577701147) <= batch_run.ci_half_width

    def test_reproducible(self, batch_run):
        again = simulate_batch_sojourn(REF, n_reps=200_000, seed=SEED)
        assert again.mean == batch_run.mean
        assert again.ci_half_width == batch_run.ci_half_width

    def test_seed_changes_samples(self, batch_run):
        other = simulate_batch_sojourn(REF, n_reps=200_000, seed=SEED + 1)
        assert other.mean != batch_run.mean

    def test_ci_shrinks_like_root_n(self):
        small = simulate_batch_sojourn(REF, n_reps=50_000, seed=3)
        large = simulate_batch_sojourn(REF, n_reps=200_000, seed=3)
        ratio = large.ci_half_width / small.ci_half_width
        assert ratio == pytest.approx(0.5, abs=0.1)

    def test_metadata(self, batch_run):
        assert batch_run.kind == "batch"
        assert batch_run.n_reps == 200_000
        assert (batch_run.rho, batch_run.q) == (0.5, 0.3)
        assert batch_run.ecdf is not None and len(batch_run.ecdf) == 200_000

    def test_samples_sorted_nonnegative(self, batch_run):
        s = batch_run.ecdf
        assert np.all(np.diff(s) >= 0.0)
        assert s[0] > 0.0


class TestJobSimulator:
    def test_littles_law_mean(self):
        """Per-job sojourn mean is 1/(1 - rho - q) by Little's law."""
        est = simulate_job_sojourn(REF, n_reps=400_000, seed=77)
        assert abs(est.mean - 5.0) <= est.ci_half_width

    def test_second_point(self):
        p = ModelParams(0.3, 0.2)
        est = simulate_job_sojourn(p, n_reps=300_000, seed=78)
        assert abs(est.mean - 2.0) <= est.ci_half_width


class TestCoupledRun:
    def test_job_never_after_batch(self):
        out_b, out_j = coupled_sojourn_samples(REF, n_reps=100_000, seed=5)
        assert np.all(out_j <= out_b * (1.0 + 1e-12))
        # the epochs coincide exactly when the uniformly chosen member is the
        # last to leave: P(K = B) = E[1/B] = -(1-q)/q log(1-q) ~ 0.832 at q=0.3
        share_equal = np.mean(out_j == out_b)
        assert share_equal == pytest.approx(0.8322, abs=0.01)


class TestEcdf:
    def test_dkw_band_formula(self):
        n = 10**5
        assert dkw_band(n) == pytest.approx(math.sqrt(math.log(2.0 / 0.01) / (2 * n)))
        assert dkw_band(n, level=0.05) < dkw_band(n, level=0.01)

    def test_ccdf_values(self, batch_run):
        curve = ecdf_ccdf(batch_run, [0.5, 2.0, 5.0, 15.0])
        assert np.all(np.diff(curve.values) < 0)
        assert np.all((0 <= curve.values) & (curve.values <= 1))
        assert curve.band == pytest.approx(dkw_band(batch_run.n_reps))
        # analytic reference values at t = 2 and t = 5
        assert curve.values[1] == pytest.approx(0.58975, abs=curve.band + 1e-3)
        assert curve.values[2] == pytest.approx(0.33485, abs=curve.band + 1e-3)

    def test_step_semantics(self):
        est = simulate_batch_sojourn(REF, n_reps=1000, seed=9)
        t0 = float(est.ecdf[0])
        curve = ecdf_ccdf(est, [t0 * 0.999, t0])
        # P(T > t) drops exactly at a sample point (right-continuous count)
        assert curve.values[0] == 1.0
        assert curve.values[1] == pytest.approx(1.0 - 1.0 / 1000.0)


class TestAgainstExactLaw:
    def test_empty_system_mixed_erlang(self):
        """At vanishing load the batch drains alone: Erlang(B, 1) mixtures.

        P(T <= t) = sum_b (1-q) q^(b-1) P(Gamma(b) <= t); a chi-squared test
        on 8 quantile bins at the 1% level should not reject.
        """
        p = ModelParams(1e-9, 0.3)
        est = simulate_batch_sojourn(p, n_reps=100_000, seed=41)
        samples = est.ecdf

        def cdf(t):
            return sum(
                0.7 * 0.3 ** (b - 1) * gammainc(b, t) for b in range(1, 60)
            )

        # invert the cdf on a grid to get equal-probability bin edges
        grid = np.linspace(1e-6, 40.0, 20001)
        cdf_grid = np.array([cdf(t) for t in grid])
        probs = np.linspace(0.125, 0.875, 7)
        edges = np.interp(probs, cdf_grid, grid)
        counts, _ = np.histogram(samples, bins=np.concatenate(([0.0], edges, [np.inf])))
        expected = len(samples) / 8.0
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert chi2 < stats.chi2.ppf(0.99, df=7), f"chi2={chi2:.1f}"
