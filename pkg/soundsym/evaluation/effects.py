"""
Per-concept log-odds ratios and their HPDI/ROPE classification.

A concept's effect on a level compares softmax(alpha + c_concept) with the
intercept-only baseline softmax(alpha); language and structured effects sit at
their zero population mean.
"""
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from soundsym.evaluation import config
from soundsym.model import level_log_odds
from soundsym.phonology import UnknownCategoryError
from soundsym.schemas import EvaluationConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EffectResult:
    concept: str
    category: str
    level: str
    mean: float
    hpdi_low: float
    hpdi_high: float
    classification: str

    def __post_init__(self):
        if self.hpdi_low > self.hpdi_high:
            raise ValueError(f"HPDI bounds out of order for {self.concept}/{self.level}")
        if self.classification not in config.CLASSIFICATIONS:
            raise ValueError(f"Unknown classification '{self.classification}'")

    @property
    def key(self) -> Tuple[str, str, str]:
        return self.concept, self.category, self.level


def _level_index(levels, level: Union[str, int]) -> int:
    if isinstance(level, (int, np.integer)):
        if not 0 <= level < len(levels):
            raise UnknownCategoryError(f"Level index {level} out of range for {len(levels)} levels")
        return int(level)
    if level not in levels:
        raise UnknownCategoryError(f"Level '{level}' not in category levels {list(levels)}")
    return list(levels).index(level)


def concept_log_odds(draws, spec, concept: Union[str, int], level: Union[str, int]) -> np.ndarray:
    """Per-draw log-odds ratio of `level` for `concept` against the intercept baseline."""
    levels = spec.levels if spec is not None else draws.levels
    concept_ids = spec.concept_ids if spec is not None else draws.concept_ids
    k = _level_index(levels, level)
    if isinstance(concept, (int, np.integer)):
        j = int(concept)
    else:
        if concept not in concept_ids:
            raise KeyError(f"Concept '{concept}' not in the model")
        j = list(concept_ids).index(concept)

    alpha = draws.block('alpha')
    c = draws.block('c')[:, j, :]
    return level_log_odds(alpha + c, k) - level_log_odds(alpha, k)


def hpdi(samples, mass: float = config.HPDI_MASS) -> Tuple[float, float]:
    """Shortest contiguous window of sorted samples holding ceil(mass * n) of them.

    Ties go to the lowest starting index.
    """
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    n = s.size
    if not 0 < mass < 1:
        raise ValueError(f"HPDI mass must lie in (0, 1), got {mass}")
    m = int(math.ceil(mass * n - 1e-9))
    if n < config.HPDI_MIN_SAMPLES or m > n or m < 1:
        raise ValueError(f"HPDI needs at least {config.HPDI_MIN_SAMPLES} samples, got {n}")
    widths = s[m - 1:] - s[:n - m + 1]
    i = int(np.argmin(widths))
    return float(s[i]), float(s[i + m - 1])


def classify(mean: float, interval: Tuple[float, float], cfg: Optional[EvaluationConfig] = None) -> str:
    """strong, weak, none or not_interpretable, tested in that order."""
    cfg = cfg or EvaluationConfig()
    low, high = interval
    upper, lower = cfg.rope_upper, cfg.rope_lower
    if low > upper or high < lower:
        return 'strong'
    if (mean > upper or mean < lower) and (low > 0 or high < 0):
        return 'weak'
    if low > lower and high < upper:
        return 'none'
    return 'not_interpretable'


def evaluate_draws(draws, spec=None, cfg: Optional[EvaluationConfig] = None,
                   concepts: Optional[Iterable[str]] = None) -> List[EffectResult]:
    """Classify every (concept, level) cell of one category fit."""
    cfg = cfg or EvaluationConfig()
    levels = spec.levels if spec is not None else draws.levels
    concept_ids = list(spec.concept_ids if spec is not None else draws.concept_ids)
    category = spec.category if spec is not None else draws.category
    wanted = concept_ids if concepts is None else [c for c in concept_ids if c in set(concepts)]

    alpha = draws.block('alpha')
    c_all = draws.block('c')
    baselines = [level_log_odds(alpha, k) for k in range(len(levels))]

    results = []
    for concept in wanted:
        j = concept_ids.index(concept)
        eta = alpha + c_all[:, j, :]
        for k, level in enumerate(levels):
            ratios = level_log_odds(eta, k) - baselines[k]
            interval = hpdi(ratios, cfg.hpdi_mass)
            mean = float(ratios.mean())
            results.append(EffectResult(concept, category, level, mean, interval[0], interval[1],
                                        classify(mean, interval, cfg)))

    counts = pd.Series([r.classification for r in results]).value_counts().to_dict()
    logger.info(f"Evaluated {len(results)} cells for {category}: {counts}")
    return results


def results_frame(results: Iterable[EffectResult]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in results], columns=config.RESULT_COLUMNS)


def write_results_csv(results, path) -> Path:
    path = Path(path)
    frame = results if isinstance(results, pd.DataFrame) else results_frame(results)
    frame.to_csv(path, index=False, lineterminator='\n', float_format='%.10g')
    return path


def read_results_csv(path) -> pd.DataFrame:
    """Load a results (or prior-results) CSV and check its column contract."""
    frame = pd.read_csv(path, dtype={'concept': str, 'category': str, 'level': str, 'classification': str},
                        keep_default_na=False)
    missing = [c for c in config.RESULT_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path} is missing result columns {missing}")
    bad = sorted(set(frame['classification']) - set(config.CLASSIFICATIONS))
    if bad:
        raise ValueError(f"{path} has unknown classifications {bad}")
    for column in ('mean', 'hpdi_low', 'hpdi_high'):
        frame[column] = pd.to_numeric(frame[column], errors='raise').astype(float)
    return frame[config.RESULT_COLUMNS]
