"""
Old-vs-new comparison of result tables: Pearson correlation of matched mean
effects plus the plot data for the scatter and Manhattan layouts.

scatter.csv:   concept, category, level, old_mean, new_mean, old_classification, new_classification
manhattan.csv: x, feature, category, level, concept, mean, abs_mean, classification, label
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats

from soundsym.evaluation import config
from soundsym.phonology import CATEGORIES
from soundsym.schemas import CATEGORY_NAMES

logger = logging.getLogger(__name__)

KEY = ['concept', 'category', 'level']
SCATTER_COLUMNS = KEY + ['old_mean', 'new_mean', 'old_classification', 'new_classification']
MANHATTAN_COLUMNS = ['x', 'feature', 'category', 'level', 'concept', 'mean', 'abs_mean', 'classification', 'label']


@dataclass
class ComparisonReport:
    r: float
    p_value: Optional[float]
    n_matched: int
    scatter: pd.DataFrame
    manhattan: pd.DataFrame

    def to_dict(self) -> dict:
        return {'pearson_r': self.r, 'p_value': self.p_value, 'n_matched': self.n_matched}


def pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    xm = x - x.mean()
    ym = y - y.mean()
    denom = np.sqrt(np.dot(xm, xm) * np.dot(ym, ym))
    if denom == 0:
        return float('nan')
    return float(np.clip(np.dot(xm, ym) / denom, -1.0, 1.0))


def feature_positions():
    """Integer x position for every (category, level) in category order."""
    positions = {}
    for category in CATEGORY_NAMES:
        for level in CATEGORIES[category][1]:
            positions[(category, level)] = len(positions)
    return positions


def manhattan_frame(results: pd.DataFrame, n_labels: int = config.MANHATTAN_LABELS) -> pd.DataFrame:
    positions = feature_positions()
    frame = results.copy()
    frame['x'] = [positions.get((c, lv), -1) for c, lv in zip(frame['category'], frame['level'])]
    unknown = frame['x'] < 0
    if unknown.any():
        logger.warning(f"{int(unknown.sum())} result rows name an unknown (category, level); left out of the layout")
        frame = frame[~unknown]
    frame['feature'] = frame['category'] + ':' + frame['level']
    frame['abs_mean'] = frame['mean'].abs()
    frame['label'] = False
    top = frame.sort_values(['abs_mean'] + KEY, ascending=[False, True, True, True]).head(n_labels).index
    frame.loc[top, 'label'] = True
    return frame.sort_values(['x', 'concept'])[MANHATTAN_COLUMNS].reset_index(drop=True)


def compare_runs(old: pd.DataFrame, new: pd.DataFrame, out_dir=None) -> ComparisonReport:
    """Correlate mean effects matched on (concept, category, level).

    Raises:
        ValueError: when fewer than the minimum number of keys match
    """
    matched = old[KEY + ['mean', 'classification']].merge(
        new[KEY + ['mean', 'classification']], on=KEY, suffixes=('_old', '_new'))
    if len(matched) < config.MIN_MATCHED_KEYS:
        raise ValueError(f"Only {len(matched)} matched (concept, category, level) keys; "
                         f"at least {config.MIN_MATCHED_KEYS} are needed")

    x = matched['mean_old'].to_numpy(dtype=float)
    y = matched['mean_new'].to_numpy(dtype=float)
    r = pearson_r(x, y)
    p_value = None
    if np.isfinite(r) and len(matched) > 2 and abs(r) < 1.0:
        p_value = float(stats.pearsonr(x, y)[1])
    elif np.isfinite(r):
        p_value = 0.0

    scatter = matched.rename(columns={
        'mean_old': 'old_mean', 'mean_new': 'new_mean',
        'classification_old': 'old_classification', 'classification_new': 'new_classification',
    })[SCATTER_COLUMNS].sort_values(KEY).reset_index(drop=True)
    report = ComparisonReport(r, p_value, len(matched), scatter, manhattan_frame(new))
    logger.info(f"Compared {report.n_matched} matched effects: Pearson r = {r:.4f}")

    if out_dir is not None:
        write_comparison(report, out_dir)
    return report


def write_comparison(report: ComparisonReport, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.scatter.to_csv(out_dir / 'scatter.csv', index=False, lineterminator='\n', float_format='%.10g')
    report.manhattan.to_csv(out_dir / 'manhattan.csv', index=False, lineterminator='\n', float_format='%.10g')
    with open(out_dir / 'correlation.json', 'w') as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
    return out_dir


def effect_comparison_table(old: pd.DataFrame, new: pd.DataFrame) -> pd.DataFrame:
    """Cells with a strong or weak effect in either run, old and new estimates side by side."""
    merged = old.merge(new, on=KEY, how='outer', suffixes=('_old', '_new'))
    effect = merged['classification_old'].isin(config.EFFECT_CLASSES) | \
        merged['classification_new'].isin(config.EFFECT_CLASSES)
    merged = merged[effect]
    order = {c: i for i, c in enumerate(CATEGORY_NAMES)}
    merged = merged.assign(_order=merged['category'].map(order).fillna(len(order)))
    merged = merged.sort_values(['_order', 'concept', 'level']).drop(columns='_order')
    columns = KEY + [f'{field}_{run}' for run in ('old', 'new')
                     for field in ('mean', 'hpdi_low', 'hpdi_high', 'classification')]
    return merged[columns].reset_index(drop=True)
