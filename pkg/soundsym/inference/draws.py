"""
Posterior draw container and its on-disk format.

A draws file is a single .npz archive: `values` (n_draws x n_params,
constrained scale), `chain_ids`, optional `log_lik` (n_draws x n_obs) and a
`metadata` member holding JSON (format version, names, seed, diagnostics).
Members are read on first access.
"""
import json
import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from soundsym import config

logger = logging.getLogger(__name__)

_INDEX = re.compile(r'^(?P<base>[^\[]+)(\[(?P<idx>[0-9,]+)\])?$')


class PosteriorDraws:
    """Constrained-scale parameter draws with chain ids and diagnostics."""

    def __init__(self, names: Sequence[str], values: np.ndarray, chain_ids: np.ndarray, seed: int,
                 category: str = '', levels: Sequence[str] = (), concept_ids: Sequence[str] = (),
                 variant: str = 'full', log_lik: Optional[np.ndarray] = None,
                 diagnostics: Optional[List[Dict]] = None, chain_stats: Optional[List[Dict]] = None,
                 reliable: bool = True):
        self.names = list(names)
        self._values = values
        self._chain_ids = chain_ids
        self._log_lik = log_lik
        self.seed = int(seed)
        self.category = category
        self.levels = tuple(levels)
        self.concept_ids = tuple(concept_ids)
        self.variant = variant
        self.diagnostics = diagnostics or []
        self.chain_stats = chain_stats or []
        self.reliable = reliable
        self._archive = None
        self._position = {name: i for i, name in enumerate(self.names)}
        if values is not None and values.shape[1] != len(self.names):
            raise ValueError(f"{values.shape[1]} columns but {len(self.names)} names")

    # --- lazy members ---

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = self._archive['values']
        return self._values

    @property
    def chain_ids(self) -> np.ndarray:
        if self._chain_ids is None:
            self._chain_ids = self._archive['chain_ids']
        return self._chain_ids

    @property
    def log_lik(self) -> Optional[np.ndarray]:
        if self._log_lik is None and self._archive is not None and 'log_lik' in self._archive.files:
            self._log_lik = self._archive['log_lik']
        return self._log_lik

    @property
    def n_draws(self) -> int:
        return self.values.shape[0]

    @property
    def n_chains(self) -> int:
        return int(len(np.unique(self.chain_ids)))

    # --- access ---

    def column(self, name: str) -> np.ndarray:
        if name not in self._position:
            raise KeyError(f"No parameter '{name}' in draws")
        return self.values[:, self._position[name]]

    def block(self, base: str) -> np.ndarray:
        """All columns of one named block, reshaped to (n_draws, *shape)."""
        cols = []
        shape = None
        for i, name in enumerate(self.names):
            m = _INDEX.match(name)
            if m and m.group('base') == base:
                idx = tuple(int(x) for x in m.group('idx').split(',')) if m.group('idx') else ()
                cols.append(i)
                shape = idx if shape is None else tuple(max(a, b) for a, b in zip(shape, idx))
        if not cols:
            raise KeyError(f"No block '{base}' in draws")
        shape = tuple(s + 1 for s in shape)
        return self.values[:, cols].reshape((self.n_draws,) + shape)

    def by_chain(self, array: Optional[np.ndarray] = None) -> np.ndarray:
        """Reshape rows to (chains, draws_per_chain, ...); chains must be equally long."""
        array = self.values if array is None else array
        chains = np.unique(self.chain_ids)
        parts = [array[self.chain_ids == c] for c in chains]
        lengths = {len(p) for p in parts}
        if len(lengths) != 1:
            raise ValueError(f"Chains have unequal lengths {sorted(lengths)}")
        return np.stack(parts)

    # --- persistence ---

    def _metadata(self) -> Dict:
        return {
            'format': 'soundsym-draws',
            'format_version': config.DRAWS_FORMAT_VERSION,
            'names': self.names,
            'seed': self.seed,
            'category': self.category,
            'levels': list(self.levels),
            'concept_ids': list(self.concept_ids),
            'variant': self.variant,
            'diagnostics': self.diagnostics,
            'chain_stats': self.chain_stats,
            'reliable': self.reliable,
        }

    def save(self, path) -> Path:
        path = Path(path)
        members = {
            'metadata': np.frombuffer(json.dumps(self._metadata(), sort_keys=True).encode('utf-8'), dtype=np.uint8),
            'values': self.values,
            'chain_ids': self.chain_ids,
        }
        if self.log_lik is not None:
            members['log_lik'] = self.log_lik
        with open(path, 'wb') as f:
            np.savez(f, **members)
        logger.info(f"Saved {self.n_draws} draws of {len(self.names)} parameters to {path}")
        return path

    @classmethod
    def load(cls, path) -> 'PosteriorDraws':
        archive = np.load(path, allow_pickle=False)
        meta = json.loads(bytes(archive['metadata']).decode('utf-8'))
        if meta.get('format') != 'soundsym-draws':
            raise ValueError(f"{path} is not a draws file")
        if meta.get('format_version') != config.DRAWS_FORMAT_VERSION:
            raise ValueError(f"Unsupported draws version {meta.get('format_version')}")
        draws = cls(
            names=meta['names'], values=None, chain_ids=None, seed=meta['seed'],
            category=meta['category'], levels=meta['levels'], concept_ids=meta['concept_ids'],
            variant=meta['variant'], diagnostics=meta['diagnostics'],
            chain_stats=meta['chain_stats'], reliable=meta['reliable'],
        )
        draws._archive = archive
        return draws

    def to_csv(self, path) -> Path:
        path = Path(path)
        frame = pd.DataFrame(self.values, columns=self.names)
        frame.insert(0, 'chain', self.chain_ids)
        frame.to_csv(path, index=False, lineterminator='\n', float_format='%.17g')
        return path
