"""
Fit the control variants of one category model and compare them by PSIS-LOO.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import pandas as pd

from soundsym import config
from soundsym.inference.draws import PosteriorDraws
from soundsym.inference.loo import LooResult, compare_loo, psis_loo
from soundsym.inference.sampling import sample
from soundsym.schemas import SamplerSettings

logger = logging.getLogger(__name__)


@dataclass
class VariantFit:
    name: str
    draws: Optional[PosteriorDraws] = None
    loo: Optional[LooResult] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def variant_spec(spec, variant: str):
    """The spec with every control outside the variant pinned to zero."""
    if variant not in config.VARIANTS:
        raise ValueError(f"Unknown variant '{variant}'; expected one of {list(config.VARIANTS)}")
    keep = config.VARIANTS[variant]
    missing = [c for c in keep if c not in spec.controls]
    if missing:
        raise ValueError(f"Variant '{variant}' needs controls {missing} that the model spec does not carry")
    pinned = [c for c in config.CONTROLS if c not in keep]
    return spec.with_controls(spec.controls, pinned=pinned)


def fit_variants(spec, variants: Sequence[str] = tuple(config.VARIANTS), seed: int = 0,
                 settings: Optional[SamplerSettings] = None, workers: int = 1):
    """Fit each variant on identical data and priors, then compare them.

    A failing variant is logged and recorded; the others are still fitted.

    Returns:
        (dict of VariantFit by name, comparison DataFrame over the variants that succeeded)
    """
    fits: Dict[str, VariantFit] = {}
    for name in variants:
        logger.info(f"Fitting variant '{name}' for {spec.category}")
        try:
            draws = sample(variant_spec(spec, name), seed=seed, settings=settings, workers=workers, variant=name)
            fits[name] = VariantFit(name, draws=draws, loo=psis_loo(draws, name=name))
        except Exception as e:
            logger.error(f"Variant '{name}' failed: {e}")
            fits[name] = VariantFit(name, error=str(e))

    table = compare_loo({name: fit.loo for name, fit in fits.items() if fit.ok})
    if not table.empty:
        logger.info(f"Best variant for {spec.category}: {table.iloc[0]['model']}")
    return fits, table


def write_comparison(table: pd.DataFrame, path):
    table.to_csv(path, index=False, lineterminator='\n', float_format='%.6f')
    return path
