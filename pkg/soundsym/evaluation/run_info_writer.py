"""
Generate run_info.txt and the machine-readable manifest.json of a pipeline run.
"""
import hashlib
import json
import platform
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def package_versions() -> Dict[str, str]:
    import arviz
    import numpy
    import pandas
    import pydantic
    import scipy

    import soundsym

    return {
        'python': platform.python_version(),
        'soundsym': soundsym.__version__,
        'numpy': numpy.__version__,
        'scipy': scipy.__version__,
        'pandas': pandas.__version__,
        'arviz': arviz.__version__,
        'pydantic': pydantic.__version__,
    }


def write_run_manifest(run_dir: Path, run_config, reproducible: bool, workers: int,
                       category_seeds: Optional[Dict[str, int]] = None) -> Path:
    """Write manifest.json: versions, seeds, input hashes and the resolved configuration.

    Contains no timestamps, so equal inputs give a byte-identical manifest.
    """
    run_dir = Path(run_dir)
    inputs = {}
    for label, path in run_config.input_files().items():
        inputs[label] = {'path': str(path), 'sha256': file_sha256(path)}

    manifest = {
        'format': 'soundsym-run-manifest',
        'versions': package_versions(),
        'seed': run_config.seed,
        'category_seeds': category_seeds or {},
        'reproducible': reproducible,
        'workers': workers,
        'inputs': inputs,
        'config': json.loads(run_config.model_dump_json()),
    }
    path = run_dir / 'manifest.json'
    with open(path, 'w') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def write_run_info(run_dir: Path, run_config, reproducible: bool = False):
    """Write the human-readable run configuration to run_info.txt."""
    from soundsym import config as core_config
    from soundsym.evaluation import config as eval_config

    run_info_path = Path(run_dir) / 'run_info.txt'
    timestamp = datetime.now().strftime('%Y-%m-%dT%H:%M:%S')

    with open(run_info_path, 'w') as f:
        f.write("=" * 65 + "\n")
        f.write("REPRODUCTION RUN CONFIGURATION\n")
        f.write("=" * 65 + "\n\n")

        f.write(f"Timestamp: {timestamp}\n")
        f.write(f"Seed: {run_config.seed}\n")
        f.write(f"Reproducible: {reproducible}\n\n")

        _write_data_section(f, run_config)
        _write_model_section(f, run_config, core_config)
        _write_sampler_section(f, run_config)
        _write_evaluation_section(f, run_config, eval_config)

        f.write("=" * 65 + "\n")
    return run_info_path


def _write_data_section(f, run_config):
    f.write("-" * 65 + "\n")
    f.write("DATA\n")
    f.write("-" * 65 + "\n")
    corpus = run_config.corpus
    f.write(f"Languages: {corpus.languages}\n")
    f.write(f"Concepts: {corpus.concepts}\n")
    f.write(f"Forms: {corpus.forms}\n")
    f.write(f"Exclusion list: {corpus.exclude or '-'}\n")
    f.write(f"Prior results: {run_config.prior_results or '-'}\n\n")


def _write_model_section(f, run_config, core_config):
    f.write("-" * 65 + "\n")
    f.write("MODEL\n")
    f.write("-" * 65 + "\n")
    f.write(f"Categories: {', '.join(run_config.categories)}\n")
    f.write(f"Variants: {', '.join(run_config.variants)}\n")
    f.write(f"Areal cutoff (km): {run_config.areal_cutoff_km}\n")
    f.write(f"Weight by phones: {run_config.weight_by_phones}\n")
    for name, value in run_config.priors.model_dump().items():
        f.write(f"Prior {name}: {value}\n")
    f.write(f"Kernel jitter: {core_config.KERNEL_JITTER} (max {core_config.KERNEL_MAX_JITTER})\n\n")


def _write_sampler_section(f, run_config):
    f.write("-" * 65 + "\n")
    f.write("SAMPLER\n")
    f.write("-" * 65 + "\n")
    s = run_config.sampler
    f.write(f"Chains: {s.chains}\n")
    f.write(f"Warmup: {s.warmup}\n")
    f.write(f"Iterations: {s.iterations}\n")
    f.write(f"Target acceptance: {s.target_accept}\n")
    f.write(f"Max tree depth: {s.max_tree_depth}\n\n")


def _write_evaluation_section(f, run_config, eval_config):
    f.write("-" * 65 + "\n")
    f.write("EVALUATION SETTINGS\n")
    f.write("-" * 65 + "\n")
    e = run_config.evaluation
    f.write(f"HPDI mass: {e.hpdi_mass}\n")
    f.write(f"ROPE: ({e.rope_lower:.10f}, {e.rope_upper:.10f})\n")
    f.write(f"Minimum matched keys for comparison: {eval_config.MIN_MATCHED_KEYS}\n\n")
