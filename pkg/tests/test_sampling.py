"""Tests for MAP estimation, multi-chain sampling, draws files and diagnostics"""

import numpy as np
import pandas as pd
import pytest

from soundsym.inference.diagnostics import summarize_chains, worst
from soundsym.inference.draws import PosteriorDraws
from soundsym.inference.optimizer import map_estimate
from soundsym.inference.sampling import sample, sample_target
from soundsym.model import DirichletModel
from soundsym.schemas import SamplerSettings


class ShiftedGaussian:

    def __init__(self, mean):
        self.mean = np.asarray(mean, dtype=float)
        self.dim = self.mean.size

    def log_density_and_gradient(self, q, strict=True):
        d = q - self.mean
        return -0.5 * float(np.dot(d, d)), -d


class Nowhere(ShiftedGaussian):

    def log_density_and_gradient(self, q, strict=True):
        return -np.inf, np.zeros_like(q)


def make_draws(n_chains=2, n_draws=50, seed=0):
    rng = np.random.default_rng(seed)
    names = ['alpha[0]', 'alpha[1]', 'c[0,0]', 'c[0,1]', 'c[1,0]', 'c[1,1]', 'theta']
    values = rng.standard_normal((n_chains * n_draws, len(names)))
    chain_ids = np.repeat(np.arange(n_chains), n_draws)
    log_lik = rng.standard_normal((n_chains * n_draws, 4)) - 2.0
    return PosteriorDraws(names, values, chain_ids, seed=seed, category='voicing',
                          levels=('unvoiced', 'voiced'), concept_ids=('a', 'b'), log_lik=log_lik)


class TestMapEstimate:

    def test_finds_mode(self):
        result = map_estimate(ShiftedGaussian([1.0, -2.0, 0.5]))
        assert result.converged
        np.testing.assert_allclose(result.q, [1.0, -2.0, 0.5], atol=1e-5)
        assert result.log_posterior == pytest.approx(0.0, abs=1e-9)

    def test_no_finite_start(self):
        with pytest.raises(RuntimeError, match="not finite"):
            map_estimate(Nowhere([0.0, 0.0]), max_retries=3)

    def test_model_spec_target(self, small_spec):
        model = DirichletModel(small_spec)
        result = map_estimate(small_spec, max_iter=300)
        start = model.log_density_and_gradient(model.prior_mode())[0]
        assert result.log_posterior > start
        assert result.q.shape == (model.dim,)


class TestSampleTarget:

    def test_chain_layout(self):
        settings = SamplerSettings(chains=3, warmup=100, iterations=80, init_jitter=0.1)
        draws = sample_target(ShiftedGaussian([2.0, -1.0]), init=np.zeros(2), seed=4, settings=settings)
        assert draws.values.shape == (240, 2)
        assert draws.names == ['q[0]', 'q[1]']
        assert draws.n_chains == 3
        assert len(draws.diagnostics) == 2
        assert len(draws.chain_stats) == 3
        assert draws.reliable
        assert draws.log_lik is None
        np.testing.assert_allclose(draws.values.mean(axis=0), [2.0, -1.0], atol=0.35)

    def test_same_seed_same_draws(self):
        settings = SamplerSettings(chains=2, warmup=40, iterations=40)
        a = sample_target(ShiftedGaussian([0.0]), seed=7, settings=settings)
        b = sample_target(ShiftedGaussian([0.0]), seed=7, settings=settings)
        c = sample_target(ShiftedGaussian([0.0]), seed=8, settings=settings)
        np.testing.assert_array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_single_chain_skips_diagnostics(self):
        settings = SamplerSettings(chains=1, warmup=20, iterations=20)
        draws = sample_target(ShiftedGaussian([0.0]), seed=1, settings=settings)
        assert draws.diagnostics == []

    @pytest.mark.slow
    def test_workers_do_not_change_draws(self, small_spec, fast_sampler):
        serial = sample(small_spec, seed=3, settings=fast_sampler, workers=1)
        parallel = sample(small_spec, seed=3, settings=fast_sampler, workers=2)
        np.testing.assert_array_equal(serial.values, parallel.values)
        np.testing.assert_array_equal(serial.log_lik, parallel.log_lik)

    @pytest.mark.slow
    def test_model_draws(self, small_spec, fast_sampler):
        draws = sample(small_spec, seed=2, settings=fast_sampler)
        model = DirichletModel(small_spec)
        assert draws.names == model.constrained_names()
        assert draws.log_lik.shape == (fast_sampler.chains * fast_sampler.iterations, small_spec.N)
        assert draws.block('c').shape[1:] == (small_spec.C, 2)
        assert np.all(draws.column('theta') > 0)


class TestPosteriorDraws:

    def test_block_shapes(self):
        draws = make_draws()
        assert draws.block('alpha').shape == (100, 2)
        assert draws.block('c').shape == (100, 2, 2)
        assert draws.block('theta').shape == (100,)
        np.testing.assert_array_equal(draws.block('c')[:, 1, 0], draws.column('c[1,0]'))

    def test_unknown_names(self):
        draws = make_draws()
        with pytest.raises(KeyError):
            draws.column('sigma_p')
        with pytest.raises(KeyError):
            draws.block('z_p')

    def test_by_chain(self):
        draws = make_draws(n_chains=3, n_draws=10)
        assert draws.by_chain().shape == (3, 10, 7)
        assert draws.by_chain(draws.log_lik).shape == (3, 10, 4)

    def test_save_and_load(self, tmp_path):
        draws = make_draws()
        draws.diagnostics = [{'name': 'theta', 'rhat': 1.01}]
        loaded = PosteriorDraws.load(draws.save(tmp_path / 'draws.npz'))
        assert loaded.names == draws.names
        assert loaded.levels == ('unvoiced', 'voiced')
        assert loaded.diagnostics == draws.diagnostics
        np.testing.assert_array_equal(loaded.values, draws.values)
        np.testing.assert_array_equal(loaded.log_lik, draws.log_lik)

    def test_load_rejects_other_archives(self, tmp_path):
        path = tmp_path / 'other.npz'
        np.savez(path, metadata=np.frombuffer(b'{"format": "x"}', dtype=np.uint8))
        with pytest.raises(ValueError, match="not a draws file"):
            PosteriorDraws.load(path)

    def test_csv(self, tmp_path):
        draws = make_draws()
        frame = pd.read_csv(draws.to_csv(tmp_path / 'draws.csv'))
        assert list(frame.columns) == ['chain'] + draws.names
        np.testing.assert_array_equal(frame['theta'].to_numpy(), draws.column('theta'))

    def test_column_count_checked(self):
        with pytest.raises(ValueError):
            PosteriorDraws(['a'], np.zeros((3, 2)), np.zeros(3, dtype=int), seed=0)


class TestDiagnostics:

    def test_independent_chains(self, rng):
        chains = rng.standard_normal((4, 500, 2))
        rows = summarize_chains(chains, ['a', 'b'])
        assert [r['name'] for r in rows] == ['a', 'b']
        for row in rows:
            assert row['rhat'] == pytest.approx(1.0, abs=0.02)
            assert row['ess_bulk'] > 1000
            assert 0 < row['mcse_mean'] < 0.05

    def test_shifted_chain_raises_rhat(self, rng):
        chains = rng.standard_normal((4, 300, 1))
        chains[0] += 5.0
        assert summarize_chains(chains, ['a'])[0]['rhat'] > 1.5

    def test_worst(self):
        rows = [
            {'name': 'a', 'rhat': 1.01, 'ess_bulk': 800.0},
            {'name': 'b', 'rhat': 1.2, 'ess_bulk': 90.0},
            {'name': 'c', 'rhat': None, 'ess_bulk': None},
        ]
        assert worst(rows) == {'max_rhat': 1.2, 'min_ess_bulk': 90.0}
        assert worst([]) == {'max_rhat': None, 'min_ess_bulk': None}
