"""
Maximum a posteriori estimation with L-BFGS-B.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from soundsym import config

logger = logging.getLogger(__name__)


@dataclass
class MapResult:
    q: np.ndarray
    log_posterior: float
    converged: bool
    iterations: int
    message: str


def map_estimate(target, init: Optional[np.ndarray] = None, seed: int = 0,
                 max_iter: int = config.MAP_MAX_ITER, gtol: float = config.MAP_GTOL,
                 max_retries: int = config.MAP_MAX_RETRIES) -> MapResult:
    """Quasi-Newton ascent on the log posterior.

    Args:
        target: Object with `dim`, `log_density_and_gradient(q, strict=False)` and
            optionally `prior_mode()` (a DirichletModel, or a ModelSpec which is wrapped)
        init: Starting point; defaults to the prior mode, else zeros
        seed: Seed for the jittered restarts
        max_iter: Iteration cap
        gtol: Stop when the gradient max-norm falls below this
        max_retries: Jittered restarts allowed when the start is not finite

    Returns:
        MapResult holding the best point visited

    Raises:
        RuntimeError: if no finite starting point is found
    """
    from soundsym.model import DirichletModel, ModelSpec

    if isinstance(target, ModelSpec):
        target = DirichletModel(target)

    if init is None:
        init = target.prior_mode() if hasattr(target, 'prior_mode') else np.zeros(target.dim)
    start = np.asarray(init, dtype=float).copy()
    rng = np.random.default_rng(seed)

    for attempt in range(max_retries + 1):
        value, _ = target.log_density_and_gradient(start, strict=False)
        if np.isfinite(value):
            break
        if attempt == max_retries:
            raise RuntimeError(f"Log posterior not finite at the initial point after {max_retries} jittered retries")
        logger.warning(f"Non-finite log posterior at init (attempt {attempt + 1}); jittering")
        start = np.asarray(init, dtype=float) + rng.uniform(-1.0, 1.0, size=start.shape)

    best = {'q': start.copy(), 'value': value}

    def objective(q):
        lp, grad = target.log_density_and_gradient(q, strict=False)
        if lp > best['value']:
            best['q'] = q.copy()
            best['value'] = lp
        if not np.isfinite(lp):
            return np.inf, np.zeros_like(q)
        return -lp, -grad

    result = minimize(objective, start, jac=True, method='L-BFGS-B',
                      options={'maxiter': max_iter, 'gtol': gtol})

    logger.info(
        f"MAP finished after {result.nit} iterations: log posterior {best['value']:.4f} "
        f"({'converged' if result.success else result.message})"
    )
    return MapResult(
        q=best['q'],
        log_posterior=float(best['value']),
        converged=bool(result.success),
        iterations=int(result.nit),
        message=str(result.message),
    )
