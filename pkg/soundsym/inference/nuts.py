"""
No-U-Turn sampler with multinomial trajectory sampling, the generalized U-turn
criterion, a diagonal mass matrix and Stan-style windowed warmup.

Targets expose `dim` and `log_density_and_gradient(q, strict=False)` returning
(log density, gradient); a non-finite density marks a divergent region.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from soundsym import config

logger = logging.getLogger(__name__)


def leapfrog(q, p, grad, step_size, inv_metric, log_density_and_gradient):
    """One velocity-Verlet step; returns (q, p, log density, gradient)."""
    p_half = p + 0.5 * step_size * grad
    q_new = q + step_size * inv_metric * p_half
    logp, grad_new = log_density_and_gradient(q_new)
    p_new = p_half + 0.5 * step_size * grad_new
    return q_new, p_new, logp, grad_new


def kinetic_energy(p, inv_metric) -> float:
    return 0.5 * float(np.dot(inv_metric * p, p))


# ===== Adaptation =====

class DualAveraging:
    """Step-size adaptation toward a target mean acceptance statistic."""

    def __init__(self, step_size: float, target_accept: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.target_accept = target_accept
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(step_size)

    def restart(self, step_size: float):
        self.mu = math.log(10.0 * step_size)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept_stat: float) -> float:
        self.counter += 1
        accept_stat = min(1.0, accept_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target_accept - accept_stat)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** (-self.kappa)
        self.x_bar = x_eta * x + (1.0 - x_eta) * self.x_bar
        return math.exp(x)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.x_bar)


class WelfordVariance:
    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x: np.ndarray):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def regularized_variance(self) -> np.ndarray:
        """Sample variance shrunk toward 1e-3, as in Stan's diagonal adaptation."""
        n = self.n
        var = self.m2 / max(n - 1, 1)
        return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


def adaptation_windows(warmup: int) -> List[Tuple[int, int]]:
    """Metric-adaptation windows [start, end) inside warmup."""
    if warmup < 20:
        return []
    init, term, base = config.ADAPT_INIT_BUFFER, config.ADAPT_TERM_BUFFER, config.ADAPT_BASE_WINDOW
    if init + term + base > warmup:
        init = int(0.15 * warmup)
        term = int(0.1 * warmup)
        base = warmup - init - term
    windows = []
    start, size = init, base
    last = warmup - term
    while start < last:
        end = start + size
        if end + 2 * size > last:
            windows.append((start, last))
            break
        windows.append((start, end))
        start, size = end, 2 * size
    return windows


# ===== Trajectory building =====

@dataclass
class _Tree:
    q_left: np.ndarray
    p_left: np.ndarray
    grad_left: np.ndarray
    q_right: np.ndarray
    p_right: np.ndarray
    grad_right: np.ndarray
    q_proposal: np.ndarray
    logp_proposal: float
    grad_proposal: np.ndarray
    log_weight: float
    p_sum: np.ndarray
    sum_accept: float
    n_leapfrog: int
    turning: bool = False
    divergent: bool = False


@dataclass
class Transition:
    accept_stat: float
    tree_depth: int
    n_leapfrog: int
    divergent: bool
    saturated: bool
    energy: float


@dataclass
class ChainResult:
    samples: np.ndarray
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    divergent: np.ndarray
    saturated: np.ndarray
    energy: np.ndarray
    n_leapfrog: np.ndarray
    step_size: float
    inv_metric: np.ndarray
    warmup_divergences: int = 0

    def stats(self, chain: int) -> dict:
        return {
            'chain': chain,
            'divergences': int(self.divergent.sum()),
            'warmup_divergences': int(self.warmup_divergences),
            'treedepth_saturation': int(self.saturated.sum()),
            'mean_accept_stat': float(self.accept_stat.mean()) if self.accept_stat.size else None,
            'mean_tree_depth': float(self.tree_depth.mean()) if self.tree_depth.size else None,
            'step_size': float(self.step_size),
        }


class NutsSampler:
    """Single-chain NUTS transition kernel with warmup adaptation."""

    def __init__(self, target, rng: np.random.Generator, target_accept: float = config.TARGET_ACCEPT,
                 max_tree_depth: int = config.MAX_TREE_DEPTH, max_energy_error: float = config.MAX_ENERGY_ERROR):
        self.target = target
        self.rng = rng
        self.target_accept = target_accept
        self.max_tree_depth = max_tree_depth
        self.max_energy_error = max_energy_error

    def _density(self, q):
        return self.target.log_density_and_gradient(q, strict=False)

    def _is_turning(self, p_left, p_right, p_sum, inv_metric) -> bool:
        return (np.dot(inv_metric * p_left, p_sum) <= 0) or (np.dot(inv_metric * p_right, p_sum) <= 0)

    def _leaf(self, q, p, grad, direction, step_size, inv_metric, h0) -> _Tree:
        q1, p1, logp1, grad1 = leapfrog(q, p, grad, direction * step_size, inv_metric, self._density)
        h1 = -logp1 + kinetic_energy(p1, inv_metric) if np.isfinite(logp1) else np.inf
        if not np.isfinite(h1):
            h1 = np.inf
        energy_error = h1 - h0
        divergent = not (energy_error <= self.max_energy_error)
        log_weight = -energy_error if np.isfinite(energy_error) else -np.inf
        accept = min(1.0, math.exp(min(0.0, -energy_error))) if np.isfinite(energy_error) else 0.0
        return _Tree(q1, p1, grad1, q1, p1, grad1, q1, logp1, grad1,
                     log_weight, p1.copy(), accept, 1, False, divergent)

    def _build(self, q, p, grad, direction, depth, step_size, inv_metric, h0) -> _Tree:
        if depth == 0:
            return self._leaf(q, p, grad, direction, step_size, inv_metric, h0)

        inner = self._build(q, p, grad, direction, depth - 1, step_size, inv_metric, h0)
        if inner.turning or inner.divergent:
            return inner

        if direction > 0:
            outer = self._build(inner.q_right, inner.p_right, inner.grad_right,
                                direction, depth - 1, step_size, inv_metric, h0)
        else:
            outer = self._build(inner.q_left, inner.p_left, inner.grad_left,
                                direction, depth - 1, step_size, inv_metric, h0)

        tree = _Tree(
            inner.q_left, inner.p_left, inner.grad_left,
            inner.q_right, inner.p_right, inner.grad_right,
            inner.q_proposal, inner.logp_proposal, inner.grad_proposal,
            inner.log_weight, inner.p_sum + outer.p_sum,
            inner.sum_accept + outer.sum_accept,
            inner.n_leapfrog + outer.n_leapfrog,
        )
        if outer.turning or outer.divergent:
            tree.turning, tree.divergent = outer.turning, outer.divergent
            return tree

        if direction > 0:
            tree.q_right, tree.p_right, tree.grad_right = outer.q_right, outer.p_right, outer.grad_right
        else:
            tree.q_left, tree.p_left, tree.grad_left = outer.q_left, outer.p_left, outer.grad_left

        tree.log_weight = np.logaddexp(inner.log_weight, outer.log_weight)
        # uniform progressive sampling within the subtree
        if math.log(self.rng.uniform()) < outer.log_weight - tree.log_weight:
            tree.q_proposal, tree.logp_proposal, tree.grad_proposal = (
                outer.q_proposal, outer.logp_proposal, outer.grad_proposal)

        tree.turning = self._is_turning(tree.p_left, tree.p_right, tree.p_sum, inv_metric)
        return tree

    def transition(self, q, logp, grad, step_size, inv_metric):
        """One NUTS iteration from (q, logp, grad)."""
        p0 = self.rng.standard_normal(q.shape[0]) / np.sqrt(inv_metric)
        h0 = -logp + kinetic_energy(p0, inv_metric)

        q_left = q_right = q
        p_left = p_right = p0
        grad_left = grad_right = grad
        proposal = (q, logp, grad)
        log_weight = 0.0
        p_sum = p0.copy()
        sum_accept = 0.0
        n_leapfrog = 0
        divergent = False
        depth = 0

        while depth < self.max_tree_depth:
            direction = 1 if self.rng.uniform() < 0.5 else -1
            if direction > 0:
                sub = self._build(q_right, p_right, grad_right, direction, depth, step_size, inv_metric, h0)
            else:
                sub = self._build(q_left, p_left, grad_left, direction, depth, step_size, inv_metric, h0)
            sum_accept += sub.sum_accept
            n_leapfrog += sub.n_leapfrog
            depth += 1

            if sub.divergent:
                divergent = True
                break
            if sub.turning:
                break

            # biased progressive sampling toward the new subtree
            if math.log(self.rng.uniform()) < sub.log_weight - log_weight:
                proposal = (sub.q_proposal, sub.logp_proposal, sub.grad_proposal)
            log_weight = np.logaddexp(log_weight, sub.log_weight)
            p_sum = p_sum + sub.p_sum

            if direction > 0:
                q_right, p_right, grad_right = sub.q_right, sub.p_right, sub.grad_right
            else:
                q_left, p_left, grad_left = sub.q_left, sub.p_left, sub.grad_left

            if self._is_turning(p_left, p_right, p_sum, inv_metric):
                break
        saturated = depth >= self.max_tree_depth and not divergent

        q_new, logp_new, grad_new = proposal
        info = Transition(
            accept_stat=sum_accept / max(n_leapfrog, 1),
            tree_depth=depth,
            n_leapfrog=n_leapfrog,
            divergent=divergent,
            saturated=saturated,
            energy=float(h0),
        )
        return q_new, logp_new, grad_new, info

    def initial_step_size(self, q, logp, grad, inv_metric, step_size: float = 1.0) -> float:
        """Double or halve the step until one leapfrog step crosses acceptance 0.8."""
        p = self.rng.standard_normal(q.shape[0]) / np.sqrt(inv_metric)
        h0 = -logp + kinetic_energy(p, inv_metric)

        def delta_h(eps):
            _, p1, logp1, _ = leapfrog(q, p, grad, eps, inv_metric, self._density)
            if not np.isfinite(logp1):
                return -np.inf
            return h0 - (-logp1 + kinetic_energy(p1, inv_metric))

        threshold = math.log(0.8)
        direction = 1 if delta_h(step_size) > threshold else -1
        for _ in range(100):
            step_size *= 2.0 ** direction
            dh = delta_h(step_size)
            if direction == 1 and not dh > threshold:
                break
            if direction == -1 and not dh < threshold:
                break
            if not 1e-10 < step_size < 1e7:
                break
        return float(step_size)

    def run(self, init: np.ndarray, warmup: int, iterations: int) -> ChainResult:
        q = np.asarray(init, dtype=float).copy()
        logp, grad = self._density(q)
        if not np.isfinite(logp):
            raise RuntimeError("Log density is not finite at the chain's initial point")

        dim = q.shape[0]
        inv_metric = np.ones(dim)
        step_size = self.initial_step_size(q, logp, grad, inv_metric)
        adapter = DualAveraging(step_size, self.target_accept)
        windows = adaptation_windows(warmup)
        window = 0
        welford = WelfordVariance(dim)
        warmup_divergences = 0

        samples = np.empty((iterations, dim))
        accept = np.empty(iterations)
        depth = np.empty(iterations, dtype=np.int64)
        divergent = np.zeros(iterations, dtype=bool)
        saturated = np.zeros(iterations, dtype=bool)
        energy = np.empty(iterations)
        n_leapfrog = np.empty(iterations, dtype=np.int64)

        for it in range(warmup + iterations):
            q, logp, grad, info = self.transition(q, logp, grad, step_size, inv_metric)

            if it < warmup:
                warmup_divergences += int(info.divergent)
                step_size = adapter.update(info.accept_stat)
                if window < len(windows):
                    start, end = windows[window]
                    if start <= it < end:
                        welford.add(q)
                    if it == end - 1:
                        inv_metric = welford.regularized_variance()
                        welford = WelfordVariance(dim)
                        step_size = self.initial_step_size(q, logp, grad, inv_metric, step_size)
                        adapter.restart(step_size)
                        window += 1
                if it == warmup - 1:
                    step_size = adapter.final_step_size
                continue

            i = it - warmup
            samples[i] = q
            accept[i] = info.accept_stat
            depth[i] = info.tree_depth
            divergent[i] = info.divergent
            saturated[i] = info.saturated
            energy[i] = info.energy
            n_leapfrog[i] = info.n_leapfrog

        return ChainResult(samples, accept, depth, divergent, saturated, energy, n_leapfrog,
                           step_size, inv_metric, warmup_divergences)
