import logging
import warnings
from typing import Dict, List, Sequence

import arviz as az
import numpy as np

logger = logging.getLogger(__name__)


def _dataset(chains: np.ndarray):
    """(chains, draws, P) array as an arviz dataset with one variable."""
    return az.convert_to_dataset({'x': chains})


def summarize_chains(chains: np.ndarray, names: Sequence[str]) -> List[Dict]:
    """Split R-hat, bulk/tail ESS and the MCSE of the mean for every column.

    Args:
        chains: Array of shape (chains, draws_per_chain, n_params)
        names: Parameter names, one per column

    Returns:
        One dict per parameter
    """
    ds = _dataset(chains)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        rhat = np.atleast_1d(az.rhat(ds)['x'].values)
        ess_bulk = np.atleast_1d(az.ess(ds, method='bulk')['x'].values)
        ess_tail = np.atleast_1d(az.ess(ds, method='tail')['x'].values)
        mcse = np.atleast_1d(az.mcse(ds, method='mean')['x'].values)

    return [
        {
            'name': name,
            'rhat': _clean(rhat[i]),
            'ess_bulk': _clean(ess_bulk[i]),
            'ess_tail': _clean(ess_tail[i]),
            'mcse_mean': _clean(mcse[i]),
        }
        for i, name in enumerate(names)
    ]


def _clean(x) -> float:
    x = float(x)
    return x if np.isfinite(x) else None


def worst(diagnostics: List[Dict]) -> Dict:
    """Largest R-hat and smallest bulk ESS across parameters (None when unavailable)."""
    rhats = [d['rhat'] for d in diagnostics if d['rhat'] is not None]
    ess = [d['ess_bulk'] for d in diagnostics if d['ess_bulk'] is not None]
    return {
        'max_rhat': max(rhats) if rhats else None,
        'min_ess_bulk': min(ess) if ess else None,
    }
