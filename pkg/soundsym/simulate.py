"""
Synthetic corpora with known ground truth.

Languages sit on a balanced classification tree per family and are scattered
around area centers; concept, language, phylogenetic and areal effects are
composed as in the regression model, and every form is a categorical draw of
one representative segment per level.
"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
from scipy.special import softmax

from soundsym import config
from soundsym.corpus import ConceptRecord, Corpus, FormRecord, LanguageRecord, write_tables
from soundsym.covariance import DistanceMatrix, KernelParams, areal_distance, kernel_matrix, patristic_distance
from soundsym.model import full_predictor, level_log_odds
from soundsym.phonology import CATEGORIES, CONSONANTS, VOWELS, classify_segment
from soundsym.schemas import SimulationSpec

logger = logging.getLogger(__name__)

# Tried first when picking the segment that stands for a level
PREFERRED_SEGMENTS = (
    'n', 'k', 'm', 'j', 'h', 's', 'l', 'r', 'b', 't', 'p', 'g', 'c', 'ʕ', 'ɟ', 'd',
    'i', 'e', 'a', 'u', 'o', 'ə', 'ɑ', 'y', 'ɯ', 'ɒ', 'ɶ',
)


def representative_segments(category: str) -> Tuple[str, ...]:
    """One segment per level that the classifier maps back to that level."""
    sound_class, levels = CATEGORIES[category]
    chart = CONSONANTS if sound_class == 'consonant' else VOWELS
    candidates = list(PREFERRED_SEGMENTS) + [t for t in chart if t not in PREFERRED_SEGMENTS]
    chosen = []
    for level in levels:
        token = next((t for t in candidates if classify_segment(t).level(category) == level), None)
        if token is None:
            raise ValueError(f"No chart segment classifies as {category}={level}")
        chosen.append(token)
    return tuple(chosen)


@dataclass
class SimulationResult:
    corpus: Corpus
    truth: Dict
    phylo: DistanceMatrix
    areal: DistanceMatrix


def _destination(lat: float, lon: float, bearing: float, km: float) -> Tuple[float, float]:
    """Point reached from (lat, lon) after km along a great circle at the given bearing."""
    delta = km / config.EARTH_RADIUS_KM
    phi1, lam1 = math.radians(lat), math.radians(lon)
    phi2 = math.asin(math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(bearing))
    lam2 = lam1 + math.atan2(math.sin(bearing) * math.sin(delta) * math.cos(phi1),
                             math.cos(delta) - math.sin(phi1) * math.sin(phi2))
    lon2 = (math.degrees(lam2) + 540.0) % 360.0 - 180.0
    return round(math.degrees(phi2), 6), round(lon2, 6)


def _languages(spec: SimulationSpec, rng: np.random.Generator) -> List[LanguageRecord]:
    branching = max(2, math.ceil(spec.langs_per_family ** (1.0 / spec.tree_depth) - 1e-9))
    macroareas = spec.area_macroareas or [config.MACROAREAS[a % len(config.MACROAREAS)] for a in range(spec.n_areas)]
    languages = []
    for f in range(spec.n_families):
        family = f'f{f:03d}'
        for j in range(spec.langs_per_family):
            digits = []
            rest = j
            for _ in range(spec.tree_depth):
                digits.append(rest % branching)
                rest //= branching
            digits.reverse()
            path = [family]
            for d in digits:
                path.append(f'{path[-1]}.{d}')

            n = len(languages)
            area = n % spec.n_areas
            center_lat, center_lon = spec.area_centers[area]
            bearing = rng.uniform(0.0, 2.0 * math.pi)
            distance = spec.area_spread_km * math.sqrt(rng.uniform())
            lat, lon = _destination(center_lat, center_lon, bearing, distance)
            glottocode = f's{f:03d}{n:04d}'
            languages.append(LanguageRecord(glottocode, f'Simulated {glottocode}', tuple(path), lat, lon, macroareas[area]))
    return languages


def _concepts(n_concepts: int) -> List[ConceptRecord]:
    swadesh = math.ceil(n_concepts / 2)
    holman = math.ceil(0.2 * n_concepts)
    return [
        ConceptRecord(f'C{j:03d}', f'concept {j}', in_swadesh100=j < swadesh,
                      in_tadmor100=j % 2 == 0, in_holman40=j < holman)
        for j in range(n_concepts)
    ]


def _structured_effect(dist: DistanceMatrix, phi: float, sigma: float, k1: int, rng) -> np.ndarray:
    z = rng.standard_normal((dist.size, k1))
    if sigma == 0:
        return np.zeros((dist.size, k1))
    _, factor = kernel_matrix(dist, KernelParams(phi, sigma))
    return factor @ z


def generate(spec: SimulationSpec) -> SimulationResult:
    """Draw a synthetic corpus and its ground truth from `spec` (fully determined by spec.seed)."""
    rng = np.random.default_rng(spec.seed)
    levels = CATEGORIES[spec.category][1]
    k = len(levels)
    k1 = k - 1
    segments = representative_segments(spec.category)

    alpha = np.zeros(k1) if spec.alpha is None else np.asarray(spec.alpha, dtype=float)
    if alpha.shape != (k1,):
        raise ValueError(f"alpha needs {k1} entries for {spec.category}, got {alpha.shape[0]}")
    c = np.zeros((spec.n_concepts, k1))
    for effect in spec.concept_effects:
        if effect.level >= k1:
            raise ValueError(f"Planted level {effect.level} is the reference level of {spec.category}")
        c[effect.concept, effect.level] = effect.value

    languages = _languages(spec, rng)
    concepts = _concepts(spec.n_concepts)
    phylo = patristic_distance(languages)
    areal = areal_distance(languages)

    lang_effect = spec.tau_l * rng.standard_normal((len(languages), k1))
    phylo_effect = _structured_effect(phylo, spec.phi_p, spec.sigma_p, k1, rng)
    areal_effect = _structured_effect(areal, spec.phi_a, spec.sigma_a, k1, rng)
    language_total = lang_effect + phylo_effect + areal_effect

    forms = []
    for i, lang in enumerate(languages):
        for j, concept in enumerate(concepts):
            mu = softmax(full_predictor(alpha + c[j] + language_total[i]))
            for _ in range(spec.forms_per_pair):
                p = rng.dirichlet(spec.theta * mu)
                picks = rng.choice(k, size=spec.segments_per_form, p=p)
                forms.append(FormRecord(lang.id, concept.id, tuple(segments[x] for x in picks)))

    planted = []
    for effect in spec.concept_effects:
        ratio = level_log_odds(alpha + c[effect.concept], effect.level) - level_log_odds(alpha, effect.level)
        planted.append({
            'concept': concepts[effect.concept].id,
            'level': levels[effect.level],
            'value': effect.value,
            'log_odds': float(ratio[0]),
        })

    truth = {
        'seed': spec.seed,
        'category': spec.category,
        'levels': list(levels),
        'segments': list(segments),
        'alpha': alpha.tolist(),
        'c': c.tolist(),
        'planted': planted,
        'tau_l': spec.tau_l,
        'sigma_p': spec.sigma_p,
        'sigma_a': spec.sigma_a,
        'phi_p': spec.phi_p,
        'phi_a': spec.phi_a,
        'theta': spec.theta,
        'language_effects': language_total.tolist(),
        'spec': json.loads(spec.model_dump_json()),
    }
    corpus = Corpus(tuple(languages), tuple(concepts), tuple(forms))
    logger.info(
        f"Simulated {spec.category}: {len(languages)} languages, {len(concepts)} concepts, "
        f"{len(forms)} forms, {len(planted)} planted effects"
    )
    return SimulationResult(corpus, truth, phylo, areal)


def write(result: SimulationResult, out_dir) -> Dict[str, Path]:
    """Write languages.csv, concepts.csv, forms.csv, manifest.json and truth.json."""
    out_dir = Path(out_dir)
    paths = write_tables(result.corpus, out_dir)
    paths['truth'] = out_dir / 'truth.json'
    with open(paths['truth'], 'w', encoding='utf-8') as f:
        json.dump(result.truth, f, indent=2, sort_keys=True)
        f.write('\n')
    paths['manifest'] = out_dir / 'manifest.json'
    with open(paths['manifest'], 'w', encoding='utf-8') as f:
        json.dump({'languages': 'languages.csv', 'concepts': 'concepts.csv', 'forms': 'forms.csv'},
                  f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info(f"Wrote simulated corpus to {out_dir}")
    return paths
