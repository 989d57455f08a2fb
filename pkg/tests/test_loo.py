"""Tests for PSIS-LOO and control-variant comparison"""

import logging

import numpy as np
import pytest
from scipy.stats import norm

from soundsym.inference import variants
from soundsym.inference.draws import PosteriorDraws
from soundsym.inference.loo import COMPARISON_COLUMNS, LooResult, compare_loo, psis_loo
from soundsym.inference.variants import fit_variants, variant_spec


def loo_result(pointwise, name=''):
    pointwise = np.asarray(pointwise, dtype=float)
    return LooResult(float(pointwise.sum()), 1.0, 1.0, pointwise, np.zeros_like(pointwise), 0.0, False, name)


def normal_mean_draws(y, n_draws, rng):
    """Posterior draws of a unit-variance normal mean under a flat prior, with pointwise log likelihood."""
    mu = rng.normal(y.mean(), 1.0 / np.sqrt(len(y)), size=n_draws)
    return norm.logpdf(y[None, :], loc=mu[:, None], scale=1.0)


class TestPsisLoo:

    def test_matches_exact_leave_one_out(self, rng):
        y = rng.normal(0.3, 1.0, size=20)
        log_lik = normal_mean_draws(y, 4000, rng)
        result = psis_loo(log_lik, chain_ids=np.repeat(np.arange(4), 1000))

        n = len(y)
        exact = sum(
            norm.logpdf(y[i], loc=np.delete(y, i).mean(), scale=np.sqrt(1.0 + 1.0 / (n - 1)))
            for i in range(n)
        )
        assert result.elpd == pytest.approx(exact, abs=0.25)
        assert abs(result.elpd - exact) < 2 * result.se
        assert result.p_loo == pytest.approx(1.0, abs=0.5)
        assert result.n_obs == 20
        assert not result.warning

    def test_nearly_constant_likelihood(self, rng):
        log_lik = -1.5 + 0.01 * rng.standard_normal((400, 10))
        result = psis_loo(log_lik)
        assert result.elpd == pytest.approx(-15.0, abs=0.05)
        assert abs(result.p_loo) < 0.05
        np.testing.assert_allclose(result.pointwise, -1.5, atol=0.01)

    def test_heavy_tailed_ratios_warn(self, rng, caplog):
        log_lik = -1.0 + 0.01 * rng.standard_normal((1000, 10))
        log_lik[:, 0] = -0.5 * (30.0 * rng.standard_normal(1000)) ** 2
        with caplog.at_level(logging.WARNING):
            result = psis_loo(log_lik)
        assert result.pareto_k[0] > 0.7
        assert result.high_k_fraction == pytest.approx(0.1)
        assert result.warning
        assert 'Pareto-k' in caplog.text

    def test_from_draws(self, rng):
        log_lik = -1.0 + 0.05 * rng.standard_normal((200, 6))
        draws = PosteriorDraws(['theta'], np.ones((200, 1)), np.repeat([0, 1], 100), seed=0,
                               variant='phylo_only', log_lik=log_lik)
        result = psis_loo(draws)
        assert result.name == 'phylo_only'
        assert result.n_obs == 6

    def test_missing_or_bad_matrix(self):
        draws = PosteriorDraws(['theta'], np.ones((10, 1)), np.zeros(10, dtype=int), seed=0)
        with pytest.raises(ValueError, match="no pointwise"):
            psis_loo(draws)
        with pytest.raises(ValueError, match="non-finite"):
            psis_loo(np.array([[0.0, np.nan], [0.0, 0.0]]))
        with pytest.raises(ValueError):
            psis_loo(np.zeros(5))


class TestCompareLoo:

    def test_self_comparison(self):
        result = loo_result([-1.0, -2.0, -0.5])
        table = compare_loo({'full': result, 'none': result})
        assert list(table['elpd_diff']) == [0.0, 0.0]
        assert list(table['se_diff']) == [0.0, 0.0]

    def test_four_variants(self):
        results = {
            'none': loo_result([-3.0, -3.0, -2.0]),
            'full': loo_result([-1.0, -1.5, -1.0]),
            'phylo_only': loo_result([-1.2, -1.5, -1.1]),
            'areal_only': loo_result([-2.0, -2.5, -1.0]),
        }
        table = compare_loo(results)
        assert list(table.columns) == COMPARISON_COLUMNS
        assert list(table['model']) == ['full', 'phylo_only', 'areal_only', 'none']
        assert list(table['label']) == ['with_c', 'phylo_c', 'area_c', 'no_c']
        assert table.iloc[0]['elpd_diff'] == 0.0
        assert table.iloc[1]['elpd_diff'] == pytest.approx(0.3)
        assert table.iloc[3]['elpd_diff'] == pytest.approx(4.5)
        assert (table['elpd_diff'] >= 0).all()
        diff = np.array([2.0, 1.5, 1.0])
        assert table.iloc[3]['se_diff'] == pytest.approx(np.sqrt(3 * diff.var(ddof=1)))

    def test_different_observations(self):
        with pytest.raises(ValueError, match="different observations"):
            compare_loo({'a': loo_result([-1.0]), 'b': loo_result([-1.0, -2.0])})

    def test_empty(self):
        assert list(compare_loo({}).columns) == COMPARISON_COLUMNS


class TestVariants:

    def test_variant_spec_pins(self, small_spec):
        assert variant_spec(small_spec, 'full').active_controls == ('phylo', 'areal')
        assert variant_spec(small_spec, 'phylo_only').pinned == ('areal',)
        assert variant_spec(small_spec, 'areal_only').active_controls == ('areal',)
        assert variant_spec(small_spec, 'none').active_controls == ()

    def test_unknown_variant(self, small_spec):
        with pytest.raises(ValueError, match="Unknown variant"):
            variant_spec(small_spec, 'everything')

    def test_variant_needs_matrix(self, small_spec):
        phylo_only = small_spec.with_controls(('phylo',))
        with pytest.raises(ValueError, match="areal"):
            variant_spec(phylo_only, 'areal_only')

    def test_failed_variant_recorded(self, small_spec, monkeypatch, rng):
        def fake_sample(spec, seed, settings, workers, variant):
            if variant == 'none':
                raise RuntimeError("chain initialization failed")
            shift = {'full': 0.0, 'phylo_only': -0.1, 'areal_only': -0.2}[variant]
            log_lik = shift - 1.0 + 0.01 * rng.standard_normal((100, spec.N))
            return PosteriorDraws(['theta'], np.ones((100, 1)), np.repeat([0, 1], 50), seed=seed,
                                  variant=variant, log_lik=log_lik)

        monkeypatch.setattr(variants, 'sample', fake_sample)
        fits, table = fit_variants(small_spec, seed=1)
        assert not fits['none'].ok
        assert 'initialization' in fits['none'].error
        assert list(table['model']) == ['full', 'phylo_only', 'areal_only']

    @pytest.mark.slow
    def test_fit_all_variants(self, small_spec, fast_sampler):
        fits, table = fit_variants(small_spec, seed=5, settings=fast_sampler)
        assert all(fit.ok for fit in fits.values())
        assert len(table) == 4
        assert table.iloc[0]['elpd_diff'] == 0.0
