"""Tests for the reproduction pipeline: run layout, failure marker, exit codes and manifest"""

import json

import numpy as np
import pandas as pd
import pytest

from soundsym import config, pipeline, simulate
from soundsym.evaluation.run_info_writer import file_sha256, write_run_manifest
from soundsym.inference.draws import PosteriorDraws
from soundsym.inference.loo import compare_loo
from soundsym.inference.variants import VariantFit
from soundsym.schemas import CATEGORY_NAMES, RunConfig, SamplerSettings, load_run_config


def fake_fit_variants(reliable=True, fail=()):
    """Stand-in for fit_variants that returns near-zero draws without sampling."""
    def fit(spec, variants, seed=0, settings=None, workers=1):
        fits = {}
        for name in variants:
            if name in fail:
                fits[name] = VariantFit(name, error='sampler exploded')
                continue
            k1 = spec.K - 1
            names = ([f'alpha[{k}]' for k in range(k1)]
                     + [f'c[{j},{k}]' for j in range(spec.C) for k in range(k1)])
            values = np.random.default_rng(seed).normal(scale=0.01, size=(40, len(names)))
            draws = PosteriorDraws(names, values, np.repeat([0, 1], 20), seed=seed, category=spec.category,
                                   levels=spec.levels, concept_ids=spec.concept_ids, variant=name,
                                   reliable=reliable)
            fits[name] = VariantFit(name, draws=draws)
        return fits, compare_loo({})
    return fit


@pytest.fixture
def sim_paths(sim_result, tmp_path):
    return simulate.write(sim_result, tmp_path / 'sim')


@pytest.fixture
def run_config(sim_paths, tmp_path):
    return RunConfig(
        corpus={'languages': sim_paths['languages'], 'concepts': sim_paths['concepts'],
                'forms': sim_paths['forms']},
        categories=['height'], variants=['full', 'none'], prior_draws=20,
        output_dir=tmp_path / 'run', seed=5,
    )


class TestPipelineRun:

    def test_run_directory_layout(self, run_config, monkeypatch):
        monkeypatch.setattr(pipeline, 'fit_variants', fake_fit_variants())
        code, run_dir = pipeline.run_pipeline(run_config, reproducible=True)

        assert code == config.EXIT_OK
        expected = [
            'manifest.json', 'run_info.txt', 'pipeline.log', 'corpus.json.gz', 'corpus_stats.json',
            'segment_frequencies_vowel.csv', 'segment_frequencies_consonant.csv',
            'covariance/phylo.csv', 'covariance/areal.csv',
            'height/counts.csv', 'height/model_spec.json', 'height/prior_report.csv',
            'height/draws_full.npz', 'height/draws_none.npz', 'height/results_full.csv',
            'height/results_none.csv', 'height/results.csv', 'height/loo.csv',
            'results.csv', 'effect_counts.csv', 'list_intersection.csv', 'evaluation_report.txt',
            'reduced_vs_full_counts.csv', 'compare_reduced/correlation.json',
        ]
        for name in expected:
            assert (run_dir / name).exists(), name
        assert not (run_dir / config.FAILED_MARKER).exists()

        results = pd.read_csv(run_dir / 'results.csv')
        assert len(results) == 6 * 3
        assert set(results['category']) == {'height'}
        assert 'PHASE 3: FIT AND EVALUATE' in (run_dir / 'pipeline.log').read_text()

    def test_unreliable_output_exit_code(self, run_config, monkeypatch):
        monkeypatch.setattr(pipeline, 'fit_variants', fake_fit_variants(reliable=False))
        code, run_dir = pipeline.run_pipeline(run_config, reproducible=True)
        assert code == config.EXIT_UNRELIABLE
        assert (run_dir / 'results.csv').exists()
        assert not (run_dir / config.FAILED_MARKER).exists()

    def test_failed_variant_marks_run(self, run_config, monkeypatch):
        monkeypatch.setattr(pipeline, 'fit_variants', fake_fit_variants(fail=('none',)))
        code, run_dir = pipeline.run_pipeline(run_config, reproducible=True)

        assert code == config.EXIT_FAILURE
        marker = (run_dir / config.FAILED_MARKER).read_text()
        assert 'stage: fit' in marker
        assert 'none' in marker
        assert len(pd.read_csv(run_dir / 'height' / 'results.csv')) == 18
        assert not (run_dir / 'height' / 'draws_none.npz').exists()

    def test_all_variants_failed(self, run_config, monkeypatch):
        monkeypatch.setattr(pipeline, 'fit_variants', fake_fit_variants(fail=('full', 'none')))
        code, run_dir = pipeline.run_pipeline(run_config, reproducible=True)
        assert code == config.EXIT_FAILURE
        assert 'All variants failed' in (run_dir / config.FAILED_MARKER).read_text()
        assert not (run_dir / 'height' / 'results.csv').exists()

    def test_ingest_failure(self, run_config, tmp_path):
        forms = tmp_path / 'broken_forms.csv'
        forms.write_text("ID,Language_ID,Parameter_ID\n1,x,y\n", encoding='utf-8')
        broken = run_config.model_copy(update={'corpus': run_config.corpus.model_copy(update={'forms': forms})})

        code, run_dir = pipeline.run_pipeline(broken, reproducible=True)
        assert code == config.EXIT_FAILURE
        assert 'stage: ingest' in (run_dir / config.FAILED_MARKER).read_text()
        assert (run_dir / 'manifest.json').exists()

    def test_rerun_clears_marker(self, run_config, monkeypatch):
        monkeypatch.setattr(pipeline, 'fit_variants', fake_fit_variants(fail=('full', 'none')))
        code, run_dir = pipeline.run_pipeline(run_config, reproducible=True)
        assert (run_dir / config.FAILED_MARKER).exists()

        monkeypatch.setattr(pipeline, 'fit_variants', fake_fit_variants())
        code, run_dir = pipeline.run_pipeline(run_config, reproducible=True)
        assert code == config.EXIT_OK
        assert not (run_dir / config.FAILED_MARKER).exists()

    def test_prior_results_compared(self, run_config, monkeypatch, tmp_path):
        monkeypatch.setattr(pipeline, 'fit_variants', fake_fit_variants())
        _, first = pipeline.run_pipeline(run_config, reproducible=True)

        second_config = run_config.model_copy(update={'prior_results': first / 'results.csv',
                                                      'output_dir': tmp_path / 'second'})
        code, second = pipeline.run_pipeline(second_config, reproducible=True)
        assert code == config.EXIT_OK
        with open(second / 'compare' / 'correlation.json') as f:
            assert json.load(f)['pearson_r'] == pytest.approx(1.0)
        counts = pd.read_csv(second / 'effect_counts.csv')
        assert 'original_strong' in counts.columns

    def test_default_run_directory(self, run_config, monkeypatch, tmp_path):
        monkeypatch.setattr(config, 'RESULTS_DIR', str(tmp_path / 'results'))
        unnamed = run_config.model_copy(update={'output_dir': None})
        first = pipeline.ReproductionPipeline(unnamed).run_dir
        second = pipeline.ReproductionPipeline(unnamed).run_dir
        assert first.parent == tmp_path / 'results' / 'runs'
        assert first.name.startswith('height_s5_')
        assert first != second
        assert first.is_dir() and second.is_dir()

    @pytest.mark.parametrize("categories,label", [
        (['height'], 'height'),
        (['voicing', 'height'], 'voicing-height'),
        (['voicing', 'height', 'manner', 'position'], 'voicing-height-manner+1'),
        (list(reversed(CATEGORY_NAMES)), 'all'),
    ])
    def test_run_label(self, categories, label):
        assert pipeline.run_label(categories) == label

    def test_reproducible_forces_one_worker(self, run_config):
        assert pipeline.ReproductionPipeline(run_config, reproducible=True, workers=8).workers == 1
        assert pipeline.ReproductionPipeline(run_config, workers=8).workers == 8


class TestSeedsAndManifest:

    def test_category_seeds(self):
        seeds = pipeline._category_seeds(0, ['voicing', 'height'])
        assert seeds == pipeline._category_seeds(0, ['voicing', 'height'])
        assert seeds['voicing'] != seeds['height']
        assert seeds != pipeline._category_seeds(1, ['voicing', 'height'])

    def test_manifest_is_byte_stable(self, run_config, tmp_path):
        a, b = tmp_path / 'a', tmp_path / 'b'
        a.mkdir()
        b.mkdir()
        seeds = {'height': 7}
        first = write_run_manifest(a, run_config, True, 1, seeds).read_bytes()
        assert first == write_run_manifest(b, run_config, True, 1, seeds).read_bytes()

        manifest = json.loads(first)
        assert manifest['format'] == 'soundsym-run-manifest'
        assert manifest['category_seeds'] == seeds
        assert manifest['inputs']['forms']['sha256'] == file_sha256(run_config.corpus.forms)
        assert manifest['config']['categories'] == ['height']
        assert 'timestamp' not in first.decode('utf-8').lower()

    def test_file_sha256(self, tmp_path):
        path = tmp_path / 'x.txt'
        path.write_bytes(b'abc')
        assert file_sha256(path) == 'ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad'


class TestRunConfig:

    def test_sampler_defaults(self):
        settings = SamplerSettings()
        assert settings.target_accept == config.TARGET_ACCEPT == 0.9
        assert settings.chains == config.CHAINS

    def test_relative_paths_anchor_at_config(self, sim_paths):
        path = sim_paths['languages'].parent / 'run.yaml'
        path.write_text(
            "corpus:\n  languages: languages.csv\n  concepts: concepts.csv\n  forms: forms.csv\n"
            "categories: [height]\noutput_dir: out\n",
            encoding='utf-8',
        )
        loaded = load_run_config(path)
        assert loaded.corpus.forms == sim_paths['forms']
        assert loaded.output_dir == path.parent / 'out'
        assert loaded.variants == ['full']

    def test_missing_input(self, tmp_path):
        path = tmp_path / 'run.yaml'
        path.write_text("corpus:\n  languages: a.csv\n  concepts: b.csv\n  forms: c.csv\n", encoding='utf-8')
        with pytest.raises(FileNotFoundError, match="a.csv"):
            load_run_config(path)

    @pytest.mark.parametrize("update", [
        {'categories': ['tone']},
        {'categories': []},
        {'variants': ['full', 'full']},
        {'variants': ['everything']},
    ])
    def test_invalid_values(self, sim_paths, update):
        corpus = {'languages': sim_paths['languages'], 'concepts': sim_paths['concepts'],
                  'forms': sim_paths['forms']}
        with pytest.raises(ValueError):
            RunConfig(corpus=corpus, **update)


@pytest.mark.slow
class TestSampledRun:

    def test_reproducible_runs_match(self, run_config, tmp_path):
        settings = SamplerSettings(chains=2, warmup=150, iterations=150, map_max_iter=500)
        cfg = run_config.model_copy(update={'sampler': settings, 'variants': ['full']})

        code_a, dir_a = pipeline.run_pipeline(cfg, tmp_path / 'a', reproducible=True)
        code_b, dir_b = pipeline.run_pipeline(cfg, tmp_path / 'b', reproducible=True)

        assert code_a in (config.EXIT_OK, config.EXIT_UNRELIABLE)
        assert code_a == code_b
        assert (dir_a / 'results.csv').read_bytes() == (dir_b / 'results.csv').read_bytes()
        assert (dir_a / 'manifest.json').read_bytes() == (dir_b / 'manifest.json').read_bytes()
        a = PosteriorDraws.load(dir_a / 'height' / 'draws_full.npz')
        b = PosteriorDraws.load(dir_b / 'height' / 'draws_full.npz')
        np.testing.assert_array_equal(a.values, b.values)
