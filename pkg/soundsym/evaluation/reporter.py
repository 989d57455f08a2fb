import json
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence

import pandas as pd

from soundsym.evaluation import config
from soundsym.schemas import CATEGORY_NAMES

logger = logging.getLogger(__name__)


def _effects(results: pd.DataFrame) -> pd.DataFrame:
    return results[results['classification'].isin(config.EFFECT_CLASSES)]


def count_effects(results: pd.DataFrame, categories: Optional[Sequence[str]] = None,
                  original: Optional[pd.DataFrame] = None, by_level: bool = False) -> pd.DataFrame:
    """Strong/weak counts per category with a Total row.

    With `original`, Original/New columns are shown side by side. With `by_level`,
    rows are (category, level) instead of categories.
    """
    keys = ['category', 'level'] if by_level else ['category']
    if categories is None:
        seen = set(results['category']) | (set(original['category']) if original is not None else set())
        categories = [c for c in CATEGORY_NAMES if c in seen] + sorted(seen - set(CATEGORY_NAMES))

    def tally(frame: pd.DataFrame) -> pd.DataFrame:
        effects = _effects(frame)
        if effects.empty:
            return pd.DataFrame(columns=list(config.EFFECT_CLASSES), dtype=int)
        table = effects.groupby(keys + ['classification']).size().unstack('classification', fill_value=0)
        return table.reindex(columns=list(config.EFFECT_CLASSES), fill_value=0)

    if by_level:
        index_frames = [results[keys]] + ([original[keys]] if original is not None else [])
        index_rows = pd.concat(index_frames).drop_duplicates()
        index_rows = index_rows[index_rows['category'].isin(categories)]
        order = {c: i for i, c in enumerate(categories)}
        index_rows = index_rows.assign(_order=index_rows['category'].map(order))
        index_rows = index_rows.sort_values(['_order', 'level']).drop(columns='_order')
        index = pd.MultiIndex.from_frame(index_rows)
    else:
        index = pd.Index(list(categories), name='category')

    new = tally(results).reindex(index, fill_value=0)
    if original is None:
        table = new
    else:
        old = tally(original).reindex(index, fill_value=0)
        table = pd.concat({'original': old, 'new': new}, axis=1)
        table.columns = [f'{run}_{cls}' for run, cls in table.columns]

    table = table.astype(int)
    total = table.sum(axis=0).to_frame().T
    total.index = pd.MultiIndex.from_tuples([('Total',) + ('',) * (len(keys) - 1)], names=keys) if by_level \
        else pd.Index(['Total'], name='category')
    return pd.concat([table, total]).reset_index()


def compare_counts(reduced: pd.DataFrame, full: pd.DataFrame,
                   categories: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Counts of the reduced (no-controls) and full models side by side."""
    a = count_effects(reduced, categories).set_index('category').add_prefix('reduced_')
    b = count_effects(full, categories).set_index('category').add_prefix('full_')
    return a.join(b, how='outer').fillna(0).astype(int).reset_index()


def _concepts_with_effects(results: pd.DataFrame, exclude_categories: Iterable[str] = ()) -> set:
    effects = _effects(results)
    effects = effects[~effects['category'].isin(set(exclude_categories))]
    return set(effects['concept'])


def _replicated(prior: pd.DataFrame, results: pd.DataFrame, exclude_categories: Iterable[str] = ()) -> set:
    """Concepts with the same (category, level) effect, of the same sign, in both runs."""
    keys = ['concept', 'category', 'level']
    old = _effects(prior)
    new = _effects(results)
    old = old[~old['category'].isin(set(exclude_categories))]
    new = new[~new['category'].isin(set(exclude_categories))]
    both = old.merge(new, on=keys, suffixes=('_old', '_new'))
    same_sign = (both['mean_old'] > 0) == (both['mean_new'] > 0)
    return set(both.loc[same_sign, 'concept'])


def list_intersection(results: pd.DataFrame, concepts, prior: Optional[pd.DataFrame] = None,
                      exclude_categories: Iterable[str] = ()) -> pd.DataFrame:
    """Per basic list, concepts with at least one strong or weak effect.

    Args:
        results: Results table of the current run
        concepts: ConceptRecords (or a Corpus) carrying the list flags
        prior: Optional results table of an earlier run; adds original and replicated columns
        exclude_categories: Categories ignored when looking for effects
    """
    if hasattr(concepts, 'concepts'):
        concepts = concepts.concepts
    concepts = list(concepts)
    exclude_categories = tuple(exclude_categories)
    new_set = _concepts_with_effects(results, exclude_categories)
    old_set = _concepts_with_effects(prior, exclude_categories) if prior is not None else None
    replicated = _replicated(prior, results, exclude_categories) if prior is not None else None

    rows = []
    for name, flag in config.BASIC_LISTS.items():
        members = {c.id for c in concepts if getattr(c, flag)}
        row = {'list': name, 'n_concepts': len(members), 'new': len(members & new_set)}
        if prior is not None:
            row['original'] = len(members & old_set)
            row['replicated'] = len(members & replicated)
            row['replicated_pct'] = round(100.0 * row['replicated'] / row['original'], 1) if row['original'] else 0.0
        rows.append(row)
    columns = ['list', 'n_concepts', 'original', 'new', 'replicated', 'replicated_pct'] if prior is not None \
        else ['list', 'n_concepts', 'new']
    return pd.DataFrame(rows, columns=columns)


class Reporter:
    def __init__(self, run_dir):
        """Initialize reporter.

        Args:
            run_dir: Directory receiving the reports
        """
        self.results_dir = Path(run_dir)
        self.results_dir.mkdir(parents=True, exist_ok=True)

    def generate_reports(self, results: pd.DataFrame, concepts=None, prior: Optional[pd.DataFrame] = None,
                         categories: Optional[Sequence[str]] = None,
                         loo_tables: Optional[Dict[str, pd.DataFrame]] = None) -> dict:
        """Write count tables, basic-list tables, a JSON summary and a text report."""
        counts = count_effects(results, categories, original=prior)
        counts_file = self.results_dir / 'effect_counts.csv'
        counts.to_csv(counts_file, index=False, lineterminator='\n')
        logger.info(f"Effect counts: {counts_file}")

        lists = lists_reduced = None
        if concepts is not None:
            lists = list_intersection(results, concepts, prior)
            lists.to_csv(self.results_dir / 'list_intersection.csv', index=False, lineterminator='\n')
            lists_reduced = list_intersection(results, concepts, prior, exclude_categories=('extreme_roundedness',))
            lists_reduced.to_csv(self.results_dir / 'list_intersection_no_extreme_roundedness.csv',
                                 index=False, lineterminator='\n')
            logger.info(f"Basic-list tables: {self.results_dir / 'list_intersection.csv'}")

        summary = self._calculate_summary(results, counts, lists)
        with open(self.results_dir / 'evaluation_summary.json', 'w') as f:
            json.dump(summary, f, indent=2, sort_keys=True)

        with open(self.results_dir / 'evaluation_report.txt', 'w') as f:
            f.write(self._format_report(summary, counts, lists, loo_tables or {}))
        logger.info(f"Report: {self.results_dir / 'evaluation_report.txt'}")
        return summary

    def _calculate_summary(self, results: pd.DataFrame, counts: pd.DataFrame, lists) -> dict:
        by_class = results['classification'].value_counts()
        total = counts[counts['category'] == 'Total'].iloc[0].drop('category').to_dict()
        return {
            'total_cells': int(len(results)),
            'categories': sorted(set(results['category'])),
            'classifications': {c: int(by_class.get(c, 0)) for c in config.CLASSIFICATIONS},
            'effect_totals': {k: int(v) for k, v in total.items()},
            'basic_lists': lists.to_dict(orient='records') if lists is not None else [],
        }

    def _format_report(self, summary: dict, counts: pd.DataFrame, lists, loo_tables: Dict[str, pd.DataFrame]) -> str:
        report = []
        report.append("=" * 80)
        report.append("SOUND-SYMBOLISM EFFECT REPORT")
        report.append("=" * 80)
        report.append(f"\nCells evaluated: {summary['total_cells']}")
        report.append(f"Categories: {', '.join(summary['categories'])}")

        report.append("\n" + "=" * 80)
        report.append("CLASSIFICATIONS")
        report.append("=" * 80)
        for name, n in summary['classifications'].items():
            share = 100.0 * n / summary['total_cells'] if summary['total_cells'] else 0.0
            report.append(f"{name:<20} {n:6d} ({share:5.1f}%)")

        report.append("\n" + "=" * 80)
        report.append("EFFECTS PER CATEGORY")
        report.append("=" * 80)
        report.append(counts.to_string(index=False))

        if lists is not None:
            report.append("\n" + "=" * 80)
            report.append("BASIC VOCABULARY LISTS")
            report.append("=" * 80)
            report.append(lists.to_string(index=False))

        for category, table in loo_tables.items():
            report.append("\n" + "=" * 80)
            report.append(f"LOO COMPARISON: {category}")
            report.append("=" * 80)
            report.append(table[['label', 'elpd_diff', 'se_diff']].to_string(index=False, float_format='%.1f'))

        report.append("")
        return "\n".join(report)
