"""
Pydantic models for run, sampler, evaluation and simulation configuration
"""
import json
import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, Field, field_validator, model_validator

from soundsym import config
from soundsym.evaluation import config as eval_config

CATEGORY_NAMES = [
    'voicing',
    'manner',
    'manner_voicing',
    'position',
    'position_voicing',
    'backness',
    'extreme',
    'extreme_roundedness',
    'height',
    'roundedness',
]

VariantName = Literal['full', 'phylo_only', 'areal_only', 'none']


class PriorSettings(BaseModel):
    """Prior hyperparameters of the Dirichlet regression"""
    intercept_mean: float = Field(config.PRIOR_INTERCEPT_MEAN, description="Mean of the Normal prior on free intercepts")
    intercept_sd: float = Field(config.PRIOR_INTERCEPT_SD, gt=0, description="SD of the Normal prior on free intercepts")
    scale_sd: float = Field(config.PRIOR_SCALE_SD, gt=0, description="SD of the half-Normal prior on tau_c, tau_l and sigma")
    phi_shape: float = Field(config.PRIOR_PHI_SHAPE, gt=0, description="Gamma shape for kernel decay phi")
    phi_rate: float = Field(config.PRIOR_PHI_RATE, gt=0, description="Gamma rate for kernel decay phi")
    theta_shape: float = Field(config.PRIOR_THETA_SHAPE, gt=0, description="Gamma shape for Dirichlet precision theta")
    theta_rate: float = Field(config.PRIOR_THETA_RATE, gt=0, description="Gamma rate for Dirichlet precision theta")


class SamplerSettings(BaseModel):
    """NUTS and MAP settings"""
    chains: int = Field(config.CHAINS, ge=1)
    warmup: int = Field(config.WARMUP, ge=0)
    iterations: int = Field(config.ITERATIONS, ge=1)
    target_accept: float = Field(config.TARGET_ACCEPT, gt=0, lt=1)
    max_tree_depth: int = Field(config.MAX_TREE_DEPTH, ge=1)
    init_jitter: float = Field(config.INIT_JITTER, ge=0)
    map_max_iter: int = Field(config.MAP_MAX_ITER, ge=1)


class EvaluationConfig(BaseModel):
    """HPDI mass and ROPE bounds used to classify effects"""
    hpdi_mass: float = Field(eval_config.HPDI_MASS, gt=0, lt=1)
    rope_upper: float = Field(eval_config.ROPE_UPPER, gt=0)
    rope_lower: Optional[float] = Field(None, description="Defaults to -rope_upper")

    @model_validator(mode='after')
    def _symmetric_rope(self):
        if self.rope_lower is None:
            self.rope_lower = -self.rope_upper
        if not math.isclose(self.rope_lower, -self.rope_upper, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"rope_lower must equal -rope_upper, got {self.rope_lower} and {self.rope_upper}")
        return self


class CorpusManifest(BaseModel):
    """JSON manifest listing the three corpus tables and the exclusion list"""
    languages: Path
    concepts: Path
    forms: Path
    exclude: Optional[Path] = Field(None, description="File with one glottocode per line")
    delimiter: str = Field(config.CSV_DELIMITER, min_length=1, max_length=1)

    def resolve(self, base: Path) -> 'CorpusManifest':
        """Return a copy whose relative paths are anchored at base."""
        def _anchor(p):
            if p is None or p.is_absolute():
                return p
            return base / p
        return self.model_copy(update={
            'languages': _anchor(self.languages),
            'concepts': _anchor(self.concepts),
            'forms': _anchor(self.forms),
            'exclude': _anchor(self.exclude),
        })


class PlantedEffect(BaseModel):
    concept: int = Field(..., ge=0, description="Concept index")
    level: int = Field(..., ge=0, description="Free level index (the last level is the reference)")
    value: float


class SimulationSpec(BaseModel):
    """Synthetic corpus generator settings with ground truth"""
    n_families: int = Field(3, ge=1)
    langs_per_family: int = Field(20, ge=1)
    tree_depth: int = Field(3, ge=1)
    n_areas: int = Field(2, ge=1)
    area_centers: List[Tuple[float, float]] = Field(
        default_factory=lambda: [(0.0, 20.0), (40.0, 100.0)],
        description="(latitude, longitude) of each area center",
    )
    area_spread_km: float = Field(300.0, gt=0)
    area_macroareas: Optional[List[str]] = Field(None, description="Macro-area per area; defaults cycle through the six")
    n_concepts: int = Field(30, ge=1)
    category: str = 'position'
    alpha: Optional[List[float]] = Field(None, description="K-1 free intercepts; zeros when omitted")
    concept_effects: List[PlantedEffect] = Field(default_factory=list)
    tau_l: float = Field(0.0, ge=0)
    sigma_p: float = Field(0.0, ge=0)
    sigma_a: float = Field(0.0, ge=0)
    phi_p: float = Field(2.0, gt=0)
    phi_a: float = Field(2.0, gt=0)
    theta: float = Field(20.0, gt=0)
    forms_per_pair: int = Field(2, ge=1)
    segments_per_form: int = Field(4, ge=1)
    seed: int = 0

    @field_validator('category')
    @classmethod
    def _known_category(cls, v):
        if v not in CATEGORY_NAMES:
            raise ValueError(f"Unknown category '{v}'. Valid: {', '.join(CATEGORY_NAMES)}")
        return v

    @field_validator('area_macroareas')
    @classmethod
    def _known_macroareas(cls, v):
        if v is not None:
            bad = [m for m in v if m not in config.MACROAREAS]
            if bad:
                raise ValueError(f"Unknown macro-areas: {bad}")
        return v

    @model_validator(mode='after')
    def _check_shapes(self):
        if self.n_families > config.SIM_MAX_FAMILIES:
            raise ValueError(f"At most {config.SIM_MAX_FAMILIES} families can be simulated, got {self.n_families}")
        n_languages = self.n_families * self.langs_per_family
        if n_languages > config.SIM_MAX_LANGUAGES:
            raise ValueError(
                f"At most {config.SIM_MAX_LANGUAGES} languages can be simulated, got {n_languages}"
            )
        if len(self.area_centers) != self.n_areas:
            raise ValueError(f"area_centers has {len(self.area_centers)} entries, n_areas is {self.n_areas}")
        if self.area_macroareas is not None and len(self.area_macroareas) != self.n_areas:
            raise ValueError("area_macroareas must have one entry per area")
        for effect in self.concept_effects:
            if effect.concept >= self.n_concepts:
                raise ValueError(f"Planted effect on concept {effect.concept} but n_concepts is {self.n_concepts}")
            if not math.isfinite(effect.value):
                raise ValueError("Planted effects must be finite")
        return self


class RunConfig(BaseModel):
    """Top-level configuration of a reproduction run"""
    corpus: CorpusManifest
    prior_results: Optional[Path] = Field(None, description="CSV of previously published results to compare against")
    categories: List[str] = Field(default_factory=lambda: list(CATEGORY_NAMES))
    variants: List[VariantName] = Field(default_factory=lambda: ['full'])
    sampler: SamplerSettings = Field(default_factory=SamplerSettings)
    priors: PriorSettings = Field(default_factory=PriorSettings)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    areal_cutoff_km: float = Field(config.AREAL_CUTOFF_KM, gt=0)
    weight_by_phones: bool = config.WEIGHT_BY_PHONES
    prior_draws: int = Field(1000, ge=0, description="Prior simulation draws per category; 0 skips the prior report")
    output_dir: Optional[Path] = Field(None, description="Run directory; a timestamped folder under results/runs when omitted")
    seed: int = 0

    @field_validator('categories')
    @classmethod
    def _known_categories(cls, v):
        bad = [c for c in v if c not in CATEGORY_NAMES]
        if bad:
            raise ValueError(f"Unknown categories: {bad}")
        if not v:
            raise ValueError("At least one category is required")
        return v

    @field_validator('variants')
    @classmethod
    def _unique_variants(cls, v):
        if len(set(v)) != len(v) or not v:
            raise ValueError(f"Variants must be non-empty and unique, got {v}")
        return v

    def input_files(self) -> Dict[str, Path]:
        files = {
            'languages': self.corpus.languages,
            'concepts': self.corpus.concepts,
            'forms': self.corpus.forms,
        }
        if self.corpus.exclude:
            files['exclude'] = self.corpus.exclude
        if self.prior_results:
            files['prior_results'] = self.prior_results
        return files

    def check_files(self) -> None:
        """Raise FileNotFoundError for any referenced input that does not exist."""
        missing = [str(p) for p in self.input_files().values() if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"Missing input files: {', '.join(missing)}")


def _read_structured(path: Path) -> Dict:
    with open(path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict):
        raise ValueError(f"{path} does not contain a mapping")
    return data


def load_run_config(path) -> RunConfig:
    """Load a YAML (or JSON) run config, anchoring relative paths at the file's directory."""
    path = Path(path)
    run_config = RunConfig(**_read_structured(path))
    base = path.parent
    updates = {'corpus': run_config.corpus.resolve(base)}
    if run_config.prior_results and not run_config.prior_results.is_absolute():
        updates['prior_results'] = base / run_config.prior_results
    if run_config.output_dir and not run_config.output_dir.is_absolute():
        updates['output_dir'] = base / run_config.output_dir
    run_config = run_config.model_copy(update=updates)
    run_config.check_files()
    return run_config


def load_simulation_spec(path) -> SimulationSpec:
    return SimulationSpec(**_read_structured(Path(path)))


def load_evaluation_config(path=None) -> EvaluationConfig:
    if path is None:
        return EvaluationConfig()
    return EvaluationConfig(**_read_structured(Path(path)))


def load_manifest(path) -> CorpusManifest:
    """Load a corpus manifest JSON, anchoring relative paths at the file's directory."""
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    return CorpusManifest(**data).resolve(path.parent)
