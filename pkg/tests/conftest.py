import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path to import the soundsym package
parent_dir = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(parent_dir))

from soundsym import simulate
from soundsym.covariance import areal_distance, patristic_distance
from soundsym.model import build_model_spec
from soundsym.phonology import count_features
from soundsym.schemas import SamplerSettings, SimulationSpec


LANGUAGES_CSV = """ID,Name,Glottocode,Latitude,Longitude,Macroarea,Family_Path
L1,Alpha,alph1234,10.0,20.0,Africa,fama/famab/alph
L2,Beta,beta1234,10.5,20.5,Africa,fama/famab/beta
L3,Gamma,gamm1234,11.0,21.0,Africa,fama/gamm
L4,Delta,delt1234,50.0,100.0,Eurasia,famd/delt
"""

CONCEPTS_CSV = """ID,Name,Swadesh_100,Tadmor_100,Holman_40
water,WATER,1,1,1
stone,STONE,1,0,0
small,SMALL,0,1,0
"""

FORMS_CSV = """ID,Language_ID,Parameter_ID,Segments
1,L1,water,n a m i
2,L1,stone,t o k
3,L2,water,m u n
4,L2,small,i t i
5,L3,water,"p a"
6,L3,stone,k e l
7,L4,water,n u
8,L4,small,s i k
"""


def write_tables(directory: Path, languages=LANGUAGES_CSV, concepts=CONCEPTS_CSV, forms=FORMS_CSV):
    directory.mkdir(parents=True, exist_ok=True)
    (directory / 'languages.csv').write_text(languages, encoding='utf-8')
    (directory / 'concepts.csv').write_text(concepts, encoding='utf-8')
    (directory / 'forms.csv').write_text(forms, encoding='utf-8')
    return directory / 'languages.csv', directory / 'concepts.csv', directory / 'forms.csv'


@pytest.fixture
def tables(tmp_path):
    """Paths of a four-language, three-concept corpus"""
    return write_tables(tmp_path / 'tables')


@pytest.fixture(scope='session')
def sim_spec():
    return SimulationSpec(
        n_families=2, langs_per_family=4, tree_depth=2, n_areas=2,
        area_centers=[(0.0, 20.0), (40.0, 100.0)], area_spread_km=200.0,
        n_concepts=6, category='height', alpha=[0.2, -0.1],
        concept_effects=[{'concept': 0, 'level': 0, 'value': 0.8}],
        tau_l=0.2, sigma_p=0.3, sigma_a=0.3, theta=20.0,
        forms_per_pair=2, segments_per_form=5, seed=11,
    )


@pytest.fixture(scope='session')
def sim_result(sim_spec):
    return simulate.generate(sim_spec)


@pytest.fixture(scope='session')
def small_spec(sim_result, sim_spec):
    """Full-control model spec over the simulated corpus"""
    table = count_features(sim_result.corpus, sim_spec.category)
    return build_model_spec(table, sim_result.phylo, sim_result.areal)


@pytest.fixture
def fast_sampler():
    return SamplerSettings(chains=2, warmup=150, iterations=150, map_max_iter=500)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
