"""
Command-line entry point.

Usage:
    python -m soundsym ingest --manifest data/manifest.json --out corpus.json.gz
    python -m soundsym annotate --corpus corpus.json.gz --category manner --out counts.csv
    python -m soundsym covmat --corpus corpus.json.gz --kind areal --out areal.csv
    python -m soundsym fit --counts counts.csv --phylo phylo.csv --areal areal.csv \\
        --save-spec spec.json --variant full --chains 4 --seed 42 --out draws.npz
    python -m soundsym evaluate --draws draws.npz --spec spec.json --out results.csv
    python -m soundsym compare --old old.csv --new results.csv --out report/
    python -m soundsym loo --draws full.npz none.npz
    python -m soundsym prior --spec spec.json --draws 1000 --out prior_report.csv
    python -m soundsym simulate --spec sim.yaml --out fixtures/run1/
    python -m soundsym run --config run.yaml --reproducible

Exit codes: 0 success, 1 stage failure, 2 invalid input, 3 unreliable sampler output.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import yaml
from dotenv import load_dotenv

from soundsym import config

logger = logging.getLogger(__name__)


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=None, help='Random seed (default: from config, else 0)')
    common.add_argument('--threads', type=int, default=config.PARALLEL_WORKERS,
                        help='Worker processes for chains and categories')
    common.add_argument('--reproducible', action='store_true',
                        help='Force sequential, bit-reproducible execution')
    common.add_argument('--log-level', type=str, default=config.LOG_LEVEL,
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Console log level')
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='soundsym',
                                     description='Sound-symbolism robustness analysis toolkit')
    sub = parser.add_subparsers(dest='command', required=True)
    common = _common_flags()

    p = sub.add_parser('ingest', parents=[common], help='Load and filter the corpus tables')
    p.add_argument('--manifest', type=str, help='Corpus manifest JSON')
    p.add_argument('--languages', type=str)
    p.add_argument('--concepts', type=str)
    p.add_argument('--forms', type=str)
    p.add_argument('--exclude', type=str, help='Glottocodes to exclude, one per line')
    p.add_argument('--delimiter', type=str, default=config.CSV_DELIMITER)
    p.add_argument('--strict', action='store_true', help='Fail on the first bad row')
    p.add_argument('--out', type=str, required=True, help='Corpus archive (.json.gz)')
    p.add_argument('--tables-dir', type=str, help='Also write the filtered CSV tables here')

    p = sub.add_parser('annotate', parents=[common], help='Count feature levels per (language, concept)')
    p.add_argument('--corpus', type=str, required=True)
    p.add_argument('--category', type=str, required=True)
    p.add_argument('--mapping', type=str, help='Token-to-profile override CSV')
    p.add_argument('--export-mapping', type=str, help='Write the profile of every corpus token here')
    p.add_argument('--out', type=str, required=True)

    p = sub.add_parser('covmat', parents=[common], help='Compute a distance matrix')
    p.add_argument('--corpus', type=str, required=True)
    p.add_argument('--kind', type=str, choices=['phylo', 'areal'], required=True)
    p.add_argument('--cutoff-km', type=float, default=config.AREAL_CUTOFF_KM)
    p.add_argument('--out', type=str, required=True)

    p = sub.add_parser('fit', parents=[common], help='Sample one category model with NUTS')
    p.add_argument('--spec', type=str, help='Model spec JSON')
    p.add_argument('--counts', type=str, help='Counts CSV (when no --spec is given)')
    p.add_argument('--category', type=str, help='Category of --counts')
    p.add_argument('--phylo', type=str, help='Phylogenetic distance CSV')
    p.add_argument('--areal', type=str, help='Areal distance CSV')
    p.add_argument('--weight-by-phones', action='store_true')
    p.add_argument('--save-spec', type=str, help='Write the built model spec here')
    p.add_argument('--variant', type=str, default='full', choices=list(config.VARIANTS))
    p.add_argument('--config', type=str, help='YAML with sampler settings and priors')
    p.add_argument('--chains', type=int)
    p.add_argument('--warmup', type=int)
    p.add_argument('--iterations', type=int)
    p.add_argument('--out', type=str, required=True, help='Draws file (.npz)')
    p.add_argument('--csv', type=str, help='Also export the draws as CSV')

    p = sub.add_parser('evaluate', parents=[common], help='Classify concept effects from draws')
    p.add_argument('--draws', type=str, required=True)
    p.add_argument('--spec', type=str, required=True)
    p.add_argument('--config', type=str, help='Evaluation config (YAML/JSON)')
    p.add_argument('--out', type=str, required=True)

    p = sub.add_parser('compare', parents=[common], help='Correlate two result tables')
    p.add_argument('--old', type=str, required=True)
    p.add_argument('--new', type=str, required=True)
    p.add_argument('--out', type=str, required=True)

    p = sub.add_parser('loo', parents=[common], help='PSIS-LOO comparison of fitted draws')
    p.add_argument('--draws', type=str, nargs='+', required=True)
    p.add_argument('--out', type=str, help='Write the table here instead of stdout')

    p = sub.add_parser('prior', parents=[common], help='Prior simulation report')
    p.add_argument('--spec', type=str, required=True)
    p.add_argument('--draws', type=int, default=1000)
    p.add_argument('--out', type=str, required=True)

    p = sub.add_parser('simulate', parents=[common], help='Generate a synthetic corpus')
    p.add_argument('--spec', type=str, required=True, help='Simulation spec (YAML/JSON)')
    p.add_argument('--out', type=str, required=True)

    p = sub.add_parser('run', parents=[common], help='Run the whole pipeline from a config file')
    p.add_argument('--config', type=str, required=True)
    p.add_argument('--output-dir', type=str, help='Override the configured output directory')

    return parser


# ===== Subcommands =====

def cmd_ingest(args) -> int:
    from soundsym.corpus import filter_corpus, load_corpus, read_id_list, save_corpus, write_tables
    from soundsym.schemas import load_manifest

    if args.manifest:
        manifest = load_manifest(args.manifest)
        tables = (manifest.languages, manifest.concepts, manifest.forms)
        exclude, delimiter = manifest.exclude, manifest.delimiter
    else:
        if not (args.languages and args.concepts and args.forms):
            raise ValueError("Either --manifest or all of --languages, --concepts and --forms are required")
        tables = (args.languages, args.concepts, args.forms)
        exclude, delimiter = args.exclude, args.delimiter

    corpus = load_corpus(*tables, delimiter=delimiter, strict=args.strict)
    if exclude:
        corpus = filter_corpus(corpus, exclude_languages=read_id_list(exclude))
    save_corpus(corpus, args.out)
    if args.tables_dir:
        write_tables(corpus, args.tables_dir, delimiter)
    return config.EXIT_OK


def cmd_annotate(args) -> int:
    from soundsym.corpus import load_corpus_archive
    from soundsym.phonology import count_features, export_mapping, load_mapping

    corpus = load_corpus_archive(args.corpus)
    mapping = load_mapping(args.mapping) if args.mapping else None
    table = count_features(corpus, args.category, mapping)
    table.write_csv(args.out)
    if args.export_mapping:
        tokens = sorted({t for form in corpus.forms for t in form.segments})
        export_mapping(tokens, args.export_mapping, mapping)
    return config.EXIT_OK


def cmd_covmat(args) -> int:
    from soundsym.corpus import load_corpus_archive
    from soundsym.covariance import areal_distance, patristic_distance

    corpus = load_corpus_archive(args.corpus)
    if args.kind == 'phylo':
        matrix = patristic_distance(corpus.languages)
    else:
        matrix = areal_distance(corpus.languages, args.cutoff_km)
    matrix.write_csv(args.out)
    return config.EXIT_OK


def _read_yaml(path) -> dict:
    with open(path, 'r', encoding='utf-8') as f:
        return yaml.safe_load(f) or {}


def cmd_fit(args) -> int:
    from soundsym.covariance import DistanceMatrix
    from soundsym.inference.sampling import sample
    from soundsym.inference.variants import variant_spec
    from soundsym.model import build_model_spec, load_model_spec, save_model_spec
    from soundsym.phonology import CategoryCountTable
    from soundsym.schemas import PriorSettings, SamplerSettings

    options = _read_yaml(args.config) if args.config else {}
    sampler = SamplerSettings(**options.get('sampler', {}))
    overrides = {k: v for k, v in (('chains', args.chains), ('warmup', args.warmup),
                                   ('iterations', args.iterations)) if v is not None}
    sampler = SamplerSettings(**{**sampler.model_dump(), **overrides})

    if args.spec:
        spec = load_model_spec(args.spec)
    else:
        if not (args.counts and args.category):
            raise ValueError("Either --spec or --counts with --category is required")
        table = CategoryCountTable.read_csv(args.counts, args.category)
        phylo = DistanceMatrix.read_csv(args.phylo, 'phylo') if args.phylo else None
        areal = DistanceMatrix.read_csv(args.areal, 'areal') if args.areal else None
        controls = tuple(c for c, m in (('phylo', phylo), ('areal', areal)) if m is not None)
        spec = build_model_spec(table, phylo, areal, PriorSettings(**options.get('priors', {})),
                                controls=controls, weight_by_phones=args.weight_by_phones)
        if args.save_spec:
            save_model_spec(spec, args.save_spec)

    seed = 0 if args.seed is None else args.seed
    workers = 1 if args.reproducible else args.threads
    draws = sample(variant_spec(spec, args.variant), seed=seed, settings=sampler,
                   workers=workers, variant=args.variant)
    draws.save(args.out)
    if args.csv:
        draws.to_csv(args.csv)
    return config.EXIT_OK if draws.reliable else config.EXIT_UNRELIABLE


def cmd_evaluate(args) -> int:
    from soundsym.evaluation.effects import evaluate_draws, results_frame, write_results_csv
    from soundsym.evaluation.reporter import count_effects
    from soundsym.inference.draws import PosteriorDraws
    from soundsym.model import load_model_spec
    from soundsym.schemas import load_evaluation_config

    draws = PosteriorDraws.load(args.draws)
    spec = load_model_spec(args.spec)
    results = evaluate_draws(draws, spec, load_evaluation_config(args.config))
    path = write_results_csv(results, args.out)
    counts = count_effects(results_frame(results))
    counts.to_csv(path.with_name(path.stem + '_counts.csv'), index=False, lineterminator='\n')
    return config.EXIT_OK


def cmd_compare(args) -> int:
    from soundsym.evaluation.compare import compare_runs
    from soundsym.evaluation.effects import read_results_csv

    report = compare_runs(read_results_csv(args.old), read_results_csv(args.new), args.out)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return config.EXIT_OK


def cmd_loo(args) -> int:
    from soundsym.inference.draws import PosteriorDraws
    from soundsym.inference.loo import compare_loo, psis_loo

    results = {}
    for path in args.draws:
        draws = PosteriorDraws.load(path)
        name = draws.variant if draws.variant not in results else Path(path).stem
        results[name] = psis_loo(draws, name=name)
    table = compare_loo(results)
    if args.out:
        table.to_csv(args.out, index=False, lineterminator='\n', float_format='%.6f')
    else:
        table.to_csv(sys.stdout, index=False, lineterminator='\n', float_format='%.1f')
    return config.EXIT_OK


def cmd_prior(args) -> int:
    from soundsym.model import load_model_spec, prior_report, prior_simulate

    spec = load_model_spec(args.spec)
    draws = prior_simulate(spec, args.draws, 0 if args.seed is None else args.seed)
    prior_report(draws, spec).to_csv(args.out, index=False, lineterminator='\n', float_format='%.10g')
    return config.EXIT_OK


def cmd_simulate(args) -> int:
    from soundsym import simulate
    from soundsym.schemas import load_simulation_spec

    spec = load_simulation_spec(args.spec)
    if args.seed is not None:
        spec = spec.model_copy(update={'seed': args.seed})
    simulate.write(simulate.generate(spec), args.out)
    return config.EXIT_OK


def cmd_run(args) -> int:
    from soundsym.pipeline import run_pipeline
    from soundsym.schemas import load_run_config

    run_config = load_run_config(args.config)
    if args.seed is not None:
        run_config = run_config.model_copy(update={'seed': args.seed})
    code, run_dir = run_pipeline(run_config, args.output_dir, reproducible=args.reproducible,
                                 workers=args.threads, log_level=args.log_level)
    print(f"Run directory: {run_dir} (exit {code})")
    return code


COMMANDS = {
    'ingest': cmd_ingest,
    'annotate': cmd_annotate,
    'covmat': cmd_covmat,
    'fit': cmd_fit,
    'evaluate': cmd_evaluate,
    'compare': cmd_compare,
    'loo': cmd_loo,
    'prior': cmd_prior,
    'simulate': cmd_simulate,
    'run': cmd_run,
}


def main(argv=None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)

    handlers = []
    if args.command != 'run':
        from soundsym.pipeline import setup_logging
        handlers = setup_logging(None, args.log_level)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, KeyError, FileNotFoundError, yaml.YAMLError) as e:
        logger.error(f"Invalid input: {e}")
        return config.EXIT_INVALID
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        return config.EXIT_FAILURE
    finally:
        if handlers:
            from soundsym.pipeline import teardown_logging
            teardown_logging(handlers)


if __name__ == '__main__':
    sys.exit(main())
