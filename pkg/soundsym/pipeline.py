"""
End-to-end reproduction run: ingest -> covariance -> per-category fit and
evaluation -> reports and comparisons.

Run directory layout:
    manifest.json, run_info.txt, pipeline.log, corpus.json.gz, corpus_stats.json,
    segment_frequencies_{vowel,consonant}.csv, covariance/{phylo,areal}.csv,
    {category}/{counts.csv, model_spec.json, prior_report.csv, draws_{variant}.npz,
                results.csv, results_{variant}.csv, loo.csv},
    results.csv, effect_counts.csv, list_intersection*.csv, evaluation_report.txt,
    compare/ (against prior results), FAILED (only when a stage failed)
"""
import itertools
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from soundsym import config
from soundsym.corpus import (Corpus, corpus_stats, filter_corpus, load_corpus, read_id_list, save_corpus,
                             segment_frequency_table)
from soundsym.covariance import DistanceMatrix, areal_distance, patristic_distance
from soundsym.evaluation.compare import compare_runs
from soundsym.evaluation.effects import evaluate_draws, read_results_csv, results_frame, write_results_csv
from soundsym.evaluation.reporter import Reporter, compare_counts
from soundsym.evaluation.run_info_writer import write_run_info, write_run_manifest
from soundsym.inference.variants import fit_variants, write_comparison
from soundsym.model import build_model_spec, prior_report, prior_simulate, save_model_spec
from soundsym.phonology import count_features
from soundsym.schemas import CATEGORY_NAMES, RunConfig

logger = logging.getLogger(__name__)


def setup_logging(log_file=None, level: str = config.LOG_LEVEL) -> List[logging.Handler]:
    """Attach a console handler and, optionally, a DEBUG file handler to the root logger.

    Returns:
        The handlers added, so callers can detach them again
    """
    formatter = logging.Formatter(config.LOG_FORMAT)
    handlers: List[logging.Handler] = []

    console_handler = logging.StreamHandler()
    console_handler.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    console_handler.setFormatter(formatter)
    handlers.append(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file, mode='w', encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        handlers.append(file_handler)

    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)
    for handler in handlers:
        root_logger.addHandler(handler)
    return handlers


def teardown_logging(handlers: List[logging.Handler]):
    root_logger = logging.getLogger()
    for handler in handlers:
        root_logger.removeHandler(handler)
        handler.close()


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class CategoryOutcome:
    category: str
    results: Optional[pd.DataFrame] = None
    variant_results: Dict[str, pd.DataFrame] = field(default_factory=dict)
    loo_table: Optional[pd.DataFrame] = None
    reliable: bool = True
    error: Optional[str] = None
    failed_variants: List[str] = field(default_factory=list)


def fit_category(category: str, corpus: Corpus, phylo: DistanceMatrix, areal: DistanceMatrix,
                 run_config: RunConfig, seed: int, out_dir: Path, workers: int = 1) -> CategoryOutcome:
    """Annotate, fit every configured variant and evaluate one category."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outcome = CategoryOutcome(category)
    try:
        table = count_features(corpus, category)
        if table.n_rows < 2:
            raise ValueError(f"Only {table.n_rows} (language, concept) rows carry {category} segments")
        table.write_csv(out_dir / 'counts.csv')

        controls = tuple(c for c in config.CONTROLS
                         if any(c in config.VARIANTS[v] for v in run_config.variants))
        spec = build_model_spec(table, phylo, areal, priors=run_config.priors, controls=controls,
                                weight_by_phones=run_config.weight_by_phones)
        save_model_spec(spec, out_dir / 'model_spec.json')

        if run_config.prior_draws > 0:
            draws = prior_simulate(spec, run_config.prior_draws, seed)
            prior_report(draws, spec).to_csv(out_dir / 'prior_report.csv', index=False,
                                             lineterminator='\n', float_format='%.10g')

        fits, loo_table = fit_variants(spec, run_config.variants, seed=seed,
                                       settings=run_config.sampler, workers=workers)
        write_comparison(loo_table, out_dir / 'loo.csv')
        outcome.loo_table = loo_table

        for name, fit in fits.items():
            if not fit.ok:
                outcome.failed_variants.append(name)
                continue
            fit.draws.save(out_dir / f'draws_{name}.npz')
            outcome.reliable = outcome.reliable and fit.draws.reliable
            frame = results_frame(evaluate_draws(fit.draws, spec, run_config.evaluation))
            write_results_csv(frame, out_dir / f'results_{name}.csv')
            outcome.variant_results[name] = frame

        primary = next((v for v in run_config.variants if v in outcome.variant_results), None)
        if primary is None:
            raise RuntimeError(f"All variants failed: {', '.join(outcome.failed_variants)}")
        outcome.results = outcome.variant_results[primary]
        write_results_csv(outcome.results, out_dir / 'results.csv')
        if outcome.failed_variants:
            outcome.error = f"variants failed: {', '.join(outcome.failed_variants)}"
    except Exception as e:
        logger.error(f"Category {category} failed: {e}")
        logger.debug(traceback.format_exc())
        outcome.error = str(e)
    return outcome


def _category_seeds(seed: int, categories: List[str]) -> Dict[str, int]:
    children = np.random.SeedSequence(seed).spawn(len(categories))
    return {c: int(child.generate_state(1)[0]) for c, child in zip(categories, children)}


def run_label(categories: List[str]) -> str:
    """'all' for the full category set, else the names joined by '-' (at most three, then '+N')."""
    if sorted(categories) == sorted(CATEGORY_NAMES):
        return 'all'
    if len(categories) > 3:
        return '-'.join(categories[:3]) + f'+{len(categories) - 3}'
    return '-'.join(categories)


def create_run_directory(run_config: RunConfig) -> Path:
    """Create <RESULTS_DIR>/runs/<label>_s<seed>_<timestamp>, suffixed _2, _3, ... on a clash."""
    runs = Path(config.RESULTS_DIR) / 'runs'
    runs.mkdir(parents=True, exist_ok=True)
    stem = f"{run_label(run_config.categories)}_s{run_config.seed}_{datetime.now():%Y%m%dT%H%M%S}"
    for attempt in itertools.count(1):
        run_dir = runs / (stem if attempt == 1 else f'{stem}_{attempt}')
        try:
            run_dir.mkdir()
        except FileExistsError:
            continue
        logger.info(f"Run directory: {run_dir}")
        return run_dir


class ReproductionPipeline:
    """Runs every stage for one RunConfig inside one run directory."""

    def __init__(self, run_config: RunConfig, run_dir=None, reproducible: bool = False,
                 workers: int = config.PARALLEL_WORKERS):
        self.run_config = run_config
        if run_dir or run_config.output_dir:
            self.run_dir = Path(run_dir or run_config.output_dir)
        else:
            self.run_dir = create_run_directory(run_config)
        self.reproducible = reproducible
        self.workers = 1 if reproducible else max(1, workers)
        self.corpus: Optional[Corpus] = None
        self.phylo: Optional[DistanceMatrix] = None
        self.areal: Optional[DistanceMatrix] = None
        self.outcomes: Dict[str, CategoryOutcome] = {}
        self.seeds = _category_seeds(run_config.seed, run_config.categories)

    def phase_1_ingest(self) -> Corpus:
        logger.info("=" * 60)
        logger.info("PHASE 1: INGEST")
        logger.info("=" * 60)

        manifest = self.run_config.corpus
        corpus = load_corpus(manifest.languages, manifest.concepts, manifest.forms, manifest.delimiter)
        if manifest.exclude:
            excluded = read_id_list(manifest.exclude)
            logger.info(f"Excluding {len(excluded)} languages listed in {manifest.exclude}")
            corpus = filter_corpus(corpus, exclude_languages=excluded)
        save_corpus(corpus, self.run_dir / 'corpus.json.gz')

        stats = corpus_stats(corpus)
        with open(self.run_dir / 'corpus_stats.json', 'w') as f:
            json.dump(asdict(stats), f, indent=2, sort_keys=True)
        for sound_class in ('vowel', 'consonant'):
            segment_frequency_table(corpus, sound_class).to_csv(
                self.run_dir / f'segment_frequencies_{sound_class}.csv', index=False, lineterminator='\n')

        logger.info(f"  - Languages: {stats.n_languages}")
        logger.info(f"  - Forms: {stats.n_forms}")
        logger.info(f"  - Phones: {stats.n_phones}")
        self.corpus = corpus
        return corpus

    def phase_2_covariance(self) -> Tuple[DistanceMatrix, DistanceMatrix]:
        logger.info("=" * 60)
        logger.info("PHASE 2: COVARIANCE")
        logger.info("=" * 60)

        self.phylo = patristic_distance(self.corpus.languages)
        self.areal = areal_distance(self.corpus.languages, self.run_config.areal_cutoff_km)
        out = self.run_dir / 'covariance'
        out.mkdir(exist_ok=True)
        self.phylo.write_csv(out / 'phylo.csv')
        self.areal.write_csv(out / 'areal.csv')
        logger.info(f"  - Phylogenetic blocks: {len(self.phylo.blocks())}")
        logger.info(f"  - Areal blocks: {len(self.areal.blocks())}")
        return self.phylo, self.areal

    def phase_3_fit(self) -> Dict[str, CategoryOutcome]:
        logger.info("=" * 60)
        logger.info("PHASE 3: FIT AND EVALUATE")
        logger.info("=" * 60)

        categories = self.run_config.categories
        jobs = [
            (c, self.corpus, self.phylo, self.areal, self.run_config, self.seeds[c], self.run_dir / c)
            for c in categories
        ]
        if self.workers > 1 and len(categories) > 1:
            with ProcessPoolExecutor(max_workers=min(self.workers, len(categories))) as pool:
                outcomes = list(pool.map(fit_category, *zip(*jobs)))
        else:
            outcomes = [fit_category(*job, workers=self.workers) for job in jobs]

        for outcome in outcomes:
            self.outcomes[outcome.category] = outcome
            status = 'failed' if outcome.results is None else ('unreliable' if not outcome.reliable else 'ok')
            logger.info(f"  - {outcome.category}: {status}")
        return self.outcomes

    def phase_4_report(self) -> dict:
        logger.info("=" * 60)
        logger.info("PHASE 4: REPORTS AND COMPARISON")
        logger.info("=" * 60)

        done = [o for o in self.outcomes.values() if o.results is not None]
        results = pd.concat([o.results for o in done], ignore_index=True) if done \
            else results_frame([])
        write_results_csv(results, self.run_dir / 'results.csv')

        prior = None
        if self.run_config.prior_results:
            prior = read_results_csv(self.run_config.prior_results)
            prior = prior[prior['category'].isin(self.run_config.categories)]

        loo_tables = {o.category: o.loo_table for o in done
                      if o.loo_table is not None and len(o.loo_table) > 1}
        summary = Reporter(self.run_dir).generate_reports(
            results, self.corpus.concepts, prior, self.run_config.categories, loo_tables)

        paired = [o for o in done if 'none' in o.variant_results and o.results is not o.variant_results['none']]
        if paired:
            full = pd.concat([o.results for o in paired], ignore_index=True)
            reduced = pd.concat([o.variant_results['none'] for o in paired], ignore_index=True)
            compare_counts(reduced, full, self.run_config.categories).to_csv(
                self.run_dir / 'reduced_vs_full_counts.csv', index=False, lineterminator='\n')
            try:
                report = compare_runs(reduced, full, self.run_dir / 'compare_reduced')
                summary['reduced_vs_full_r'] = report.r
            except ValueError as e:
                logger.warning(f"Reduced-vs-full comparison skipped: {e}")

        if prior is not None:
            report = compare_runs(prior, results, self.run_dir / 'compare')
            summary['prior_vs_new_r'] = report.r
        return summary

    def _mark_failed(self, stage: str, message: str):
        with open(self.run_dir / config.FAILED_MARKER, 'w') as f:
            f.write(f"stage: {stage}\nerror: {message}\n")

    def run(self) -> int:
        """Execute all stages; returns a process exit code."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        marker = self.run_dir / config.FAILED_MARKER
        if marker.exists():
            marker.unlink()

        write_run_manifest(self.run_dir, self.run_config, self.reproducible, self.workers, self.seeds)
        write_run_info(self.run_dir, self.run_config, self.reproducible)

        stage = 'ingest'
        try:
            self.phase_1_ingest()
            stage = 'covmat'
            self.phase_2_covariance()
            stage = 'fit'
            self.phase_3_fit()
            stage = 'report'
            self.phase_4_report()
        except Exception as e:
            logger.error(f"Pipeline failed during {stage}: {e}")
            logger.debug(traceback.format_exc())
            self._mark_failed(stage, str(e))
            return config.EXIT_FAILURE

        failed = {c: o.error for c, o in self.outcomes.items() if o.error}
        if failed:
            self._mark_failed('fit', '; '.join(f'{c}: {e}' for c, e in failed.items()))
            return config.EXIT_FAILURE
        if not all(o.reliable for o in self.outcomes.values()):
            logger.warning("Run finished with unreliable sampler output")
            return config.EXIT_UNRELIABLE

        logger.info("=" * 60)
        logger.info(f"RUN COMPLETE: {self.run_dir}")
        logger.info("=" * 60)
        return config.EXIT_OK


def run_pipeline(run_config: RunConfig, run_dir=None, reproducible: bool = False,
                 workers: int = config.PARALLEL_WORKERS, log_level: str = config.LOG_LEVEL) -> Tuple[int, Path]:
    """Run the full pipeline with logging into the run directory."""
    pipeline = ReproductionPipeline(run_config, run_dir, reproducible, workers)
    pipeline.run_dir.mkdir(parents=True, exist_ok=True)
    handlers = setup_logging(pipeline.run_dir / config.LOG_FILE_NAME, log_level)
    try:
        code = pipeline.run()
    finally:
        teardown_logging(handlers)
    return code, pipeline.run_dir
