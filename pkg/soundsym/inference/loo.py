"""
PSIS-LOO estimates and the model-comparison table.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional

import arviz as az
import numpy as np
import pandas as pd

from soundsym import config

logger = logging.getLogger(__name__)

COMPARISON_COLUMNS = ['model', 'label', 'elpd_loo', 'se', 'elpd_diff', 'se_diff', 'p_loo', 'high_k_fraction', 'warning']


@dataclass
class LooResult:
    elpd: float
    se: float
    p_loo: float
    pointwise: np.ndarray
    pareto_k: np.ndarray
    high_k_fraction: float
    warning: bool
    name: str = ''

    @property
    def n_obs(self) -> int:
        return len(self.pointwise)


def _relative_efficiency(log_lik: np.ndarray) -> float:
    """Mean relative ESS of the pointwise likelihoods, 1.0 for a single chain."""
    if log_lik.shape[0] < 2:
        return 1.0
    n_samples = log_lik.shape[0] * log_lik.shape[1]
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        lik = np.exp(log_lik - log_lik.max(axis=(0, 1), keepdims=True))
        ess = az.ess(az.convert_to_dataset({'lik': lik}), method='mean')['lik'].values
    ess = np.asarray(ess, dtype=float)
    ess = ess[np.isfinite(ess)]
    if not ess.size:
        return 1.0
    return float(np.clip(ess.mean() / n_samples, 1e-3, 1.0))


def psis_loo(log_lik, chain_ids: Optional[np.ndarray] = None, name: str = '') -> LooResult:
    """Pareto-smoothed importance-sampling LOO.

    Args:
        log_lik: (n_draws, n_obs) pointwise log likelihood, or PosteriorDraws carrying one
        chain_ids: Chain of each draw row; rows are treated as one chain when omitted
        name: Label for logs and tables

    Raises:
        ValueError: if the matrix is missing or not finite
    """
    if hasattr(log_lik, 'log_lik'):
        draws = log_lik
        chain_ids = draws.chain_ids if chain_ids is None else chain_ids
        name = name or draws.variant
        log_lik = draws.log_lik
    if log_lik is None:
        raise ValueError("Draws carry no pointwise log likelihood")
    log_lik = np.asarray(log_lik, dtype=float)
    if log_lik.ndim != 2:
        raise ValueError(f"Expected a (draws, observations) matrix, got shape {log_lik.shape}")
    if not np.all(np.isfinite(log_lik)):
        raise ValueError("Pointwise log likelihood contains non-finite values")

    if chain_ids is None:
        chain_ids = np.zeros(log_lik.shape[0], dtype=np.int64)
    chains = np.unique(chain_ids)
    by_chain = np.stack([log_lik[chain_ids == c] for c in chains])

    data = az.from_dict(log_likelihood={'y': by_chain})
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        elpd = az.loo(data, pointwise=True, reff=_relative_efficiency(by_chain))

    pareto_k = np.asarray(elpd['pareto_k'].values, dtype=float)
    high = float(np.mean(pareto_k > config.PARETO_K_THRESHOLD))
    warn = high > config.PARETO_K_WARN_FRACTION
    if warn:
        logger.warning(
            f"LOO {name or ''}: {high:.1%} of Pareto-k values exceed {config.PARETO_K_THRESHOLD}; "
            "the estimate may be unreliable"
        )
    return LooResult(
        elpd=float(elpd['elpd_loo']),
        se=float(elpd['se']),
        p_loo=float(elpd['p_loo']),
        pointwise=np.asarray(elpd['loo_i'].values, dtype=float),
        pareto_k=pareto_k,
        high_k_fraction=high,
        warning=warn,
        name=name,
    )


def compare_loo(results: Dict[str, LooResult]) -> pd.DataFrame:
    """Model-comparison table sorted best-first.

    elpd_diff is the non-negative loss of each model against the best one and
    se_diff the standard error of the pointwise differences; both are 0 for the best.
    """
    if not results:
        return pd.DataFrame(columns=COMPARISON_COLUMNS)
    sizes = {r.n_obs for r in results.values()}
    if len(sizes) != 1:
        raise ValueError(f"Models were scored on different observations: {sorted(sizes)}")

    ordered = sorted(results.items(), key=lambda item: -item[1].elpd)
    best = ordered[0][1]
    rows: List[Dict] = []
    for name, result in ordered:
        diff = best.pointwise - result.pointwise
        n = len(diff)
        se_diff = float(np.sqrt(n * np.var(diff, ddof=1))) if n > 1 else 0.0
        rows.append({
            'model': name,
            'label': config.VARIANT_LABELS.get(name, name),
            'elpd_loo': result.elpd,
            'se': result.se,
            'elpd_diff': float(diff.sum()),
            'se_diff': se_diff,
            'p_loo': result.p_loo,
            'high_k_fraction': result.high_k_fraction,
            'warning': result.warning,
        })
    return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)
