"""Tests for the Dirichlet regression: spec, density, gradient and prior simulation"""

import math

import numpy as np
import pytest
from scipy.special import softmax

from soundsym.model import (DirichletModel, ModelError, ModelSpec, NonFiniteError, full_predictor,
                            intercepts_from_composition, level_log_odds, linear_predictor, load_model_spec,
                            log_likelihood, prior_report, prior_simulate, save_model_spec)
from soundsym.schemas import PriorSettings


def perturbed(model, rng, scale=0.3):
    return model.prior_mode() + scale * rng.standard_normal(model.dim)


def finite_difference_gradient(model, q, h=1e-6):
    numeric = np.empty(model.dim)
    for i in range(model.dim):
        step = np.zeros(model.dim)
        step[i] = h
        numeric[i] = (model.log_density_and_gradient(q + step)[0]
                      - model.log_density_and_gradient(q - step)[0]) / (2 * h)
    return numeric


class TestModelSpec:

    def test_dimensions(self, small_spec):
        assert small_spec.K == 3
        assert small_spec.L == 8
        assert small_spec.C == 6
        assert small_spec.active_controls == ('phylo', 'areal')
        assert small_spec.proportions.shape == (small_spec.N, 3)

    def test_parameter_count(self, small_spec):
        k1, L, C = 2, small_spec.L, small_spec.C
        shared = k1 + C * k1 + L * k1 + 2 * k1 + 1
        gp = L * k1 + 2
        assert DirichletModel(small_spec).dim == shared + 2 * gp
        assert DirichletModel(small_spec.with_controls(())).dim == shared
        assert len(DirichletModel(small_spec).layout.names()) == shared + 2 * gp

    def test_boundary_proportions_rejected(self):
        with pytest.raises(ModelError) as excinfo:
            ModelSpec('voicing', ('unvoiced', 'voiced'), ('a',), ('x',), [0, 0], [0, 0],
                      [[0.5, 0.5], [1.0, 0.0]], [2, 2], controls=())
        assert excinfo.value.index == 1

    def test_out_of_range_index(self):
        with pytest.raises(ModelError, match="out-of-range"):
            ModelSpec('voicing', ('unvoiced', 'voiced'), ('a',), ('x',), [0, 1], [0, 0],
                      [[0.5, 0.5], [0.4, 0.6]], [2, 2], controls=())

    def test_control_without_matrix(self, small_spec):
        with pytest.raises(ModelError, match="without a distance matrix"):
            ModelSpec(small_spec.category, small_spec.levels, small_spec.language_ids, small_spec.concept_ids,
                      small_spec.lang_idx, small_spec.concept_idx, small_spec.proportions,
                      small_spec.phone_totals, controls=('phylo',))

    def test_weights(self, small_spec):
        np.testing.assert_array_equal(small_spec.weights, np.ones(small_spec.N))
        weighted = small_spec.with_controls(small_spec.controls)
        weighted.weight_by_phones = True
        assert weighted.weights.mean() == pytest.approx(1.0)

    def test_save_and_load(self, small_spec, tmp_path):
        path = save_model_spec(small_spec.with_controls(('phylo', 'areal'), pinned=('areal',)),
                               tmp_path / 'model_spec.json')
        loaded = load_model_spec(path)
        assert loaded.pinned == ('areal',)
        assert loaded.language_ids == small_spec.language_ids
        np.testing.assert_array_equal(loaded.proportions, small_spec.proportions)
        np.testing.assert_array_equal(loaded.phylo.mask, small_spec.phylo.mask)

        original = DirichletModel(small_spec.with_controls(('phylo', 'areal'), pinned=('areal',)))
        q = original.prior_mode()
        assert DirichletModel(loaded).log_density_and_gradient(q)[0] == pytest.approx(
            original.log_density_and_gradient(q)[0])

    def test_load_rejects_other_json(self, tmp_path):
        path = tmp_path / 'other.json'
        path.write_text('{"format": "something-else"}', encoding='utf-8')
        with pytest.raises(ModelError):
            load_model_spec(path)


class TestDensity:
    """Log posterior values and gradients"""

    @pytest.mark.parametrize("controls", [(), ('phylo',), ('phylo', 'areal')])
    def test_gradient_matches_finite_differences(self, small_spec, rng, controls):
        model = DirichletModel(small_spec.with_controls(controls))
        q = perturbed(model, rng)
        _, grad = model.log_density_and_gradient(q)
        np.testing.assert_allclose(grad, finite_difference_gradient(model, q), rtol=1e-4, atol=1e-4)

    @pytest.mark.slow
    def test_gradient_sweep(self, small_spec, rng):
        model = DirichletModel(small_spec)
        for _ in range(100):
            q = perturbed(model, rng, scale=0.5)
            _, grad = model.log_density_and_gradient(q)
            np.testing.assert_allclose(grad, finite_difference_gradient(model, q), rtol=1e-4, atol=1e-4)

    def test_pinned_controls_match_no_controls(self, small_spec, rng):
        pinned = DirichletModel(small_spec.with_controls(('phylo', 'areal'), pinned=('phylo', 'areal')))
        bare = DirichletModel(small_spec.with_controls(()))
        assert pinned.dim == bare.dim
        q = perturbed(bare, rng)
        value_a, grad_a = pinned.log_density_and_gradient(q)
        value_b, grad_b = bare.log_density_and_gradient(q)
        assert value_a == pytest.approx(value_b)
        np.testing.assert_allclose(grad_a, grad_b)

    def test_prior_terms_sum_to_density(self, small_spec, rng):
        model = DirichletModel(small_spec)
        q = perturbed(model, rng)
        terms = model.log_prior_terms(q)
        assert set(terms) == {'likelihood', 'prior_shared', 'prior_phylo', 'prior_areal'}
        assert sum(terms.values()) == pytest.approx(model.log_density_and_gradient(q)[0])
        assert terms['likelihood'] == pytest.approx(model.pointwise_log_likelihood(q).sum())

    def test_non_finite_handling(self, small_spec):
        model = DirichletModel(small_spec.with_controls(()))
        q = model.prior_mode()
        q[model.layout.slices['log_theta']] = 800.0
        value, grad = model.log_density_and_gradient(q, strict=False)
        assert value == -np.inf
        assert np.all(grad == 0)
        with pytest.raises(NonFiniteError):
            model.log_density_and_gradient(q, strict=True)

    def test_prior_mode(self, small_spec):
        model = DirichletModel(small_spec)
        params = model.constrain(model.prior_mode())
        np.testing.assert_allclose(params['tau_c'], 1.0)
        assert params['theta'] == pytest.approx(20.0)
        assert params['phi_p'] == pytest.approx(2.0)
        assert params['sigma_a'] == pytest.approx(1.0)
        np.testing.assert_allclose(params['phylo_effect'], 0.0)

    def test_constrained_row_matches_names(self, small_spec, rng):
        model = DirichletModel(small_spec)
        q = perturbed(model, rng)
        row = model.constrained_row(q)
        names = model.constrained_names()
        assert row.shape == (len(names),)
        params = model.constrain(q)
        assert row[names.index('theta')] == pytest.approx(params['theta'])
        assert row[names.index('c[2,1]')] == pytest.approx(params['c'][2, 1])


class TestFunctionalInterface:

    def test_log_likelihood_matches_model(self, small_spec, rng):
        model = DirichletModel(small_spec)
        q = perturbed(model, rng)
        params = model.constrain(q)
        assert log_likelihood(params, small_spec) == pytest.approx(model.pointwise_log_likelihood(q).sum())

    def test_linear_predictor(self, small_spec, rng):
        model = DirichletModel(small_spec)
        params = model.constrain(perturbed(model, rng))
        eta = linear_predictor(params, small_spec, 0)
        assert eta.shape == (3,)
        assert eta[-1] == 0.0
        with pytest.raises(ModelError):
            linear_predictor(params, small_spec, small_spec.N)

    def test_level_log_odds(self):
        assert level_log_odds(np.zeros(2), 0)[0] == pytest.approx(-math.log(2.0))
        assert level_log_odds(np.array([math.log(2.0), 0.0]), 0)[0] == pytest.approx(0.0)

    def test_intercepts_invert_softmax(self):
        mu = np.array([0.2, 0.5, 0.3])
        np.testing.assert_allclose(softmax(full_predictor(intercepts_from_composition(mu))), mu)


class TestPriorSimulation:

    def test_shapes_and_determinism(self, small_spec):
        a = prior_simulate(small_spec, 200, seed=5)
        b = prior_simulate(small_spec, 200, seed=5)
        assert a.values.shape[0] == 200
        np.testing.assert_array_equal(a.values, b.values)
        assert 'phi_p' in a.names and 'theta' in a.names
        assert a.block('c').shape == (200, small_spec.C, 2)

    def test_scales_positive(self, small_spec):
        draws = prior_simulate(small_spec, 500, seed=1)
        assert np.all(draws.column('tau_c[0]') >= 0)
        assert np.all(draws.column('theta') > 0)

    def test_report(self, small_spec):
        draws = prior_simulate(small_spec, 400, seed=2)
        report = prior_report(draws, small_spec)
        log_odds = report[report['parameter'].str.startswith('log_odds[')]
        assert list(log_odds['parameter']) == [f'log_odds[{lvl}]' for lvl in small_spec.levels]
        assert {'mean', 'sd', 'q05', 'q95', 'p_abs_gt_1'} <= set(report.columns)
        assert not report['parameter'].str.startswith('c[').any()

    def test_custom_priors(self, small_spec):
        tight = small_spec.with_controls(small_spec.controls)
        tight.priors = PriorSettings(scale_sd=0.1)
        wide = prior_simulate(small_spec, 1000, seed=3).column('tau_l[0]')
        narrow = prior_simulate(tight, 1000, seed=3).column('tau_l[0]')
        assert narrow.mean() < wide.mean()
