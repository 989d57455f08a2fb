"""Tests for the synthetic corpus generator"""

import json
import logging
import math
import re

import numpy as np
import pytest
from scipy.special import softmax

from soundsym import config, simulate
from soundsym.corpus import load_corpus
from soundsym.model import full_predictor
from soundsym.phonology import CATEGORIES, classify_segment, count_features
from soundsym.schemas import SimulationSpec


def level_shares(table, rows=None):
    counts = table.counts if rows is None else table.counts[rows]
    totals = counts.sum(axis=0)
    return totals / totals.sum()


class TestRepresentativeSegments:

    @pytest.mark.parametrize("category", list(CATEGORIES))
    def test_round_trip(self, category):
        segments = simulate.representative_segments(category)
        levels = CATEGORIES[category][1]
        assert len(segments) == len(levels)
        for segment, level in zip(segments, levels):
            assert classify_segment(segment).level(category) == level


class TestGenerate:

    def test_structure(self, sim_spec, sim_result):
        corpus = sim_result.corpus
        assert len(corpus.languages) == 8
        assert len(corpus.concepts) == 6
        assert len(corpus.forms) == 8 * 6 * 2
        assert all(len(form.segments) == 5 for form in corpus.forms)
        assert {lang.family for lang in corpus.languages} == {'f000', 'f001'}
        assert sim_result.phylo.labels == tuple(lang.id for lang in corpus.languages)

    def test_truth_record(self, sim_result):
        truth = sim_result.truth
        assert truth['category'] == 'height'
        assert truth['levels'] == ['high', 'low', 'mid']
        assert np.array(truth['language_effects']).shape == (8, 2)
        planted = truth['planted'][0]
        assert planted['concept'] == 'C000'
        assert planted['level'] == 'high'
        alpha = np.array(truth['alpha'])
        c = alpha + np.array(truth['c'][0])
        p = softmax(full_predictor(c))[0]
        base = softmax(full_predictor(alpha))[0]
        expected = math.log(p / (1 - p)) - math.log(base / (1 - base))
        assert planted['log_odds'] == pytest.approx(expected)

    def test_same_seed_same_corpus(self, sim_spec, sim_result):
        again = simulate.generate(sim_spec)
        assert again.corpus == sim_result.corpus
        other = simulate.generate(sim_spec.model_copy(update={'seed': 12}))
        assert other.corpus != sim_result.corpus

    def test_written_files_are_byte_identical(self, sim_spec, tmp_path):
        a = simulate.write(simulate.generate(sim_spec), tmp_path / 'a')
        b = simulate.write(simulate.generate(sim_spec), tmp_path / 'b')
        assert set(a) == {'languages', 'concepts', 'forms', 'truth', 'manifest'}
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes(), key

    def test_tables_ingest_without_warnings(self, sim_spec, tmp_path, caplog):
        paths = simulate.write(simulate.generate(sim_spec), tmp_path / 'sim')
        with caplog.at_level(logging.WARNING):
            corpus = load_corpus(paths['languages'], paths['concepts'], paths['forms'], strict=True)
            table = count_features(corpus, sim_spec.category)
        assert not [r for r in caplog.records if r.levelno >= logging.WARNING]
        assert table.totals.sum() == 8 * 6 * 2 * 5
        with open(paths['manifest']) as f:
            assert json.load(f)['forms'] == 'forms.csv'

    def test_frequencies_approach_baseline(self):
        spec = SimulationSpec(
            n_families=2, langs_per_family=5, tree_depth=1, n_areas=1, area_centers=[(0.0, 0.0)],
            n_concepts=10, category='height', alpha=[0.5, -0.3], theta=20.0,
            forms_per_pair=20, segments_per_form=10, seed=3,
        )
        result = simulate.generate(spec)
        shares = level_shares(count_features(result.corpus, 'height'))
        np.testing.assert_allclose(shares, softmax([0.5, -0.3, 0.0]), atol=0.015)

    def test_planted_effect_raises_share(self):
        spec = SimulationSpec(
            n_families=2, langs_per_family=5, tree_depth=1, n_areas=1, area_centers=[(0.0, 0.0)],
            n_concepts=4, category='voicing', concept_effects=[{'concept': 0, 'level': 0, 'value': math.log(1.5)}],
            forms_per_pair=40, segments_per_form=10, seed=8,
        )
        table = count_features(simulate.generate(spec).corpus, 'voicing')
        planted = np.array([c == 'C000' for c in table.concept_ids])
        assert level_shares(table, planted)[0] > level_shares(table, ~planted)[0]

    def test_structured_effects_follow_families(self):
        spec = SimulationSpec(
            n_families=2, langs_per_family=4, tree_depth=2, n_areas=1, area_centers=[(0.0, 0.0)],
            n_concepts=2, category='voicing', sigma_p=1.0, seed=4,
        )
        result = simulate.generate(spec)
        effects = np.array(result.truth['language_effects'])
        assert np.any(effects != 0)
        silent = simulate.generate(spec.model_copy(update={'sigma_p': 0.0}))
        np.testing.assert_array_equal(np.array(silent.truth['language_effects']), 0.0)

    def test_cutoff_changes_areal_not_phylo(self, sim_result):
        from soundsym.covariance import areal_distance, patristic_distance

        languages = sim_result.corpus.languages
        near = areal_distance(languages, cutoff_km=50.0)
        assert not np.array_equal(near.mask, sim_result.areal.mask)
        np.testing.assert_array_equal(patristic_distance(languages).values, sim_result.phylo.values)

    def test_reference_level_cannot_be_planted(self):
        spec = SimulationSpec(n_families=1, langs_per_family=2, tree_depth=1, n_areas=1,
                              area_centers=[(0.0, 0.0)], n_concepts=2, category='voicing',
                              concept_effects=[{'concept': 0, 'level': 1, 'value': 1.0}])
        with pytest.raises(ValueError, match="reference level"):
            simulate.generate(spec)

    def test_alpha_length_checked(self):
        spec = SimulationSpec(n_families=1, langs_per_family=2, tree_depth=1, n_areas=1,
                              area_centers=[(0.0, 0.0)], n_concepts=2, category='height', alpha=[0.1])
        with pytest.raises(ValueError, match="alpha needs 2"):
            simulate.generate(spec)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SimulationSpec(n_areas=2, area_centers=[(0.0, 0.0)])
        with pytest.raises(ValueError):
            SimulationSpec(n_concepts=2, concept_effects=[{'concept': 5, 'level': 0, 'value': 1.0}])
        with pytest.raises(ValueError):
            SimulationSpec(category='tone')

    def test_language_count_fits_glottocodes(self):
        with pytest.raises(ValueError, match="At most 10000 languages"):
            SimulationSpec(n_families=2, langs_per_family=5001)
        with pytest.raises(ValueError, match="At most 999 families"):
            SimulationSpec(n_families=1000, langs_per_family=1)
        SimulationSpec(n_families=2, langs_per_family=5000)

    def test_glottocodes_match_loader_pattern(self, sim_result):
        assert all(re.match(config.GLOTTOCODE_PATTERN, lang.id) for lang in sim_result.corpus.languages)
