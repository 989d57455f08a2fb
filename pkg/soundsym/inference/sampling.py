"""
Multi-chain NUTS orchestration: MAP initialization, per-chain seeding, optional
process-level parallelism, and assembly of PosteriorDraws with diagnostics.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional

import numpy as np

from soundsym import config
from soundsym.inference.diagnostics import summarize_chains, worst
from soundsym.inference.draws import PosteriorDraws
from soundsym.inference.nuts import ChainResult, NutsSampler
from soundsym.inference.optimizer import map_estimate
from soundsym.schemas import SamplerSettings

logger = logging.getLogger(__name__)


def _run_chain(target, init, warmup, iterations, seed_seq, settings: SamplerSettings):
    """Run one chain and map its draws to the constrained scale."""
    rng = np.random.default_rng(seed_seq)
    start = np.asarray(init, dtype=float) + rng.uniform(-settings.init_jitter, settings.init_jitter, size=len(init))
    lp, _ = target.log_density_and_gradient(start, strict=False)
    if not np.isfinite(lp):
        start = np.asarray(init, dtype=float)

    sampler = NutsSampler(target, rng, target_accept=settings.target_accept,
                          max_tree_depth=settings.max_tree_depth)
    result = sampler.run(start, warmup, iterations)

    if hasattr(target, 'constrained_row'):
        rows = np.array([target.constrained_row(q) for q in result.samples])
    else:
        rows = result.samples.copy()
    log_lik = None
    if hasattr(target, 'pointwise_log_likelihood'):
        log_lik = np.array([target.pointwise_log_likelihood(q) for q in result.samples])
    return result, rows, log_lik


def _names(target) -> List[str]:
    if hasattr(target, 'constrained_names'):
        return target.constrained_names()
    return [f'q[{i}]' for i in range(target.dim)]


def sample_target(target, init: Optional[np.ndarray] = None, seed: int = 0,
                  settings: Optional[SamplerSettings] = None, workers: int = 1,
                  category: str = '', levels=(), concept_ids=(), variant: str = 'full') -> PosteriorDraws:
    """Run `settings.chains` NUTS chains on any target exposing `dim` and
    `log_density_and_gradient(q, strict=False)`.

    Chain i draws from SeedSequence(seed).spawn(chains)[i], so the result does not
    depend on `workers`.
    """
    settings = settings or SamplerSettings()
    init = np.zeros(target.dim) if init is None else np.asarray(init, dtype=float)
    seeds = np.random.SeedSequence(seed).spawn(settings.chains)
    args = [(target, init, settings.warmup, settings.iterations, s, settings) for s in seeds]

    logger.info(
        f"Sampling {settings.chains} chains ({settings.warmup} warmup + {settings.iterations} draws, "
        f"dim={target.dim}, workers={min(workers, settings.chains)})"
    )
    if workers > 1 and settings.chains > 1:
        with ProcessPoolExecutor(max_workers=min(workers, settings.chains)) as pool:
            outputs = list(pool.map(_run_chain, *zip(*args)))
    else:
        outputs = [_run_chain(*a) for a in args]

    results: List[ChainResult] = [o[0] for o in outputs]
    values = np.vstack([o[1] for o in outputs])
    chain_ids = np.repeat(np.arange(settings.chains), settings.iterations)
    log_lik = np.vstack([o[2] for o in outputs]) if outputs[0][2] is not None else None

    names = _names(target)
    diagnostics = summarize_chains(np.stack([o[1] for o in outputs]), names) if settings.chains >= 2 else []
    chain_stats = [r.stats(i) for i, r in enumerate(results)]

    divergences = sum(s['divergences'] for s in chain_stats)
    fraction = divergences / max(len(values), 1)
    reliable = fraction <= config.UNRELIABLE_DIVERGENCE_FRACTION
    summary = worst(diagnostics)
    logger.info(
        f"Sampling done: {divergences} divergent transitions ({fraction:.1%}), "
        f"max R-hat {summary['max_rhat']}, min bulk ESS {summary['min_ess_bulk']}"
    )
    if not reliable:
        logger.warning(f"More than {config.UNRELIABLE_DIVERGENCE_FRACTION:.0%} of transitions diverged; draws flagged unreliable")
    saturated = sum(s['treedepth_saturation'] for s in chain_stats)
    if saturated:
        logger.warning(f"{saturated} transitions hit the maximum tree depth {settings.max_tree_depth}")

    return PosteriorDraws(
        names=names, values=values, chain_ids=chain_ids, seed=seed,
        category=category, levels=levels, concept_ids=concept_ids, variant=variant,
        log_lik=log_lik, diagnostics=diagnostics, chain_stats=chain_stats, reliable=reliable,
    )


def sample(spec, chains: int = config.CHAINS, warmup: int = config.WARMUP, iters: int = config.ITERATIONS,
           seed: int = 0, settings: Optional[SamplerSettings] = None, workers: int = 1,
           variant: str = 'full') -> PosteriorDraws:
    """Fit a category model by NUTS, starting every chain from the jittered MAP point."""
    from soundsym.model import DirichletModel

    if settings is None:
        settings = SamplerSettings(chains=chains, warmup=warmup, iterations=iters)
    if settings.chains < 2:
        logger.warning("Fewer than 2 chains; R-hat and ESS are not computed")

    model = DirichletModel(spec)
    start = map_estimate(model, seed=seed, max_iter=settings.map_max_iter)
    return sample_target(
        model, init=start.q, seed=seed, settings=settings, workers=workers,
        category=spec.category, levels=spec.levels, concept_ids=spec.concept_ids, variant=variant,
    )
