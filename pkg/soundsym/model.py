"""
Dirichlet multilevel regression for one phonological category.

Observation r (a language/concept pair) has compressed level proportions y_r and

    eta_r[k] = alpha[k] + c[concept, k] + l[lang, k]
               + sigma_p (L_p z_p)[lang, k] + sigma_a (L_a z_a)[lang, k]     (k < K)
    eta_r[K] = 0,  mu_r = softmax(eta_r),  y_r ~ Dirichlet(theta * mu_r)

with c = tau_c * z_c, l = tau_l * z_l and L_p, L_a the Cholesky factors of the
phylogenetic and areal correlation kernels exp(-phi d) (masked pairs zero).
All latents are standard normal (non-centered); positive parameters are
sampled on the log scale with Jacobian terms included.
"""
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import digamma, gammaln, logsumexp, softmax

from soundsym import config
from soundsym.covariance import BlockCholesky, CholeskyError, DistanceMatrix, KernelParams
from soundsym.phonology import CategoryCountTable, category_levels, to_proportions
from soundsym.schemas import PriorSettings

logger = logging.getLogger(__name__)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

ParameterVector = Dict[str, np.ndarray]


class ModelError(ValueError):
    """Invalid model input or a non-finite evaluation; `index` names the row or component."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class NonFiniteError(RuntimeError):
    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


# ===== Model specification =====

@dataclass(eq=False)
class ModelSpec:
    """Design of one category model: observation indices, data, priors and controls."""
    category: str
    levels: Tuple[str, ...]
    language_ids: Tuple[str, ...]
    concept_ids: Tuple[str, ...]
    lang_idx: np.ndarray
    concept_idx: np.ndarray
    proportions: np.ndarray
    phone_totals: np.ndarray
    priors: PriorSettings = field(default_factory=PriorSettings)
    phylo: Optional[DistanceMatrix] = None
    areal: Optional[DistanceMatrix] = None
    controls: Tuple[str, ...] = config.CONTROLS
    pinned: Tuple[str, ...] = ()
    weight_by_phones: bool = config.WEIGHT_BY_PHONES

    def __post_init__(self):
        self.levels = tuple(self.levels)
        self.language_ids = tuple(self.language_ids)
        self.concept_ids = tuple(self.concept_ids)
        self.controls = tuple(c for c in config.CONTROLS if c in self.controls)
        self.pinned = tuple(c for c in config.CONTROLS if c in self.pinned)
        self.lang_idx = np.asarray(self.lang_idx, dtype=np.int64)
        self.concept_idx = np.asarray(self.concept_idx, dtype=np.int64)
        self.proportions = np.asarray(self.proportions, dtype=float).reshape(-1, len(self.levels))
        self.phone_totals = np.asarray(self.phone_totals, dtype=float)

        if self.K < 2:
            raise ModelError(f"A category needs at least 2 levels, got {self.K}")
        n = self.proportions.shape[0]
        if not (self.lang_idx.shape == self.concept_idx.shape == self.phone_totals.shape == (n,)):
            raise ModelError("Observation index arrays must all have one entry per row")
        bad = np.flatnonzero((self.lang_idx < 0) | (self.lang_idx >= self.L)
                             | (self.concept_idx < 0) | (self.concept_idx >= self.C))
        if bad.size:
            raise ModelError(f"Observation {bad[0]} has an out-of-range index", int(bad[0]))
        interior = (self.proportions > 0) & (self.proportions < 1)
        bad = np.flatnonzero(~interior.all(axis=1))
        if bad.size:
            raise ModelError(f"Observation {bad[0]} has proportions on the simplex boundary", int(bad[0]))
        for control in self.active_controls:
            dist = self.distance(control)
            if dist is None:
                raise ModelError(f"Control '{control}' requested without a distance matrix")
            if dist.labels != self.language_ids:
                raise ModelError(f"The {control} matrix labels do not match the model's languages")

    @property
    def K(self) -> int:
        return len(self.levels)

    @property
    def L(self) -> int:
        return len(self.language_ids)

    @property
    def C(self) -> int:
        return len(self.concept_ids)

    @property
    def N(self) -> int:
        return self.proportions.shape[0]

    @property
    def active_controls(self) -> Tuple[str, ...]:
        return tuple(c for c in self.controls if c not in self.pinned)

    @property
    def weights(self) -> np.ndarray:
        if not self.weight_by_phones or self.N == 0:
            return np.ones(self.N)
        return self.phone_totals / self.phone_totals.mean()

    def distance(self, control: str) -> Optional[DistanceMatrix]:
        return self.phylo if control == 'phylo' else self.areal

    def with_controls(self, controls: Sequence[str], pinned: Sequence[str] = ()) -> 'ModelSpec':
        return replace(self, controls=tuple(controls), pinned=tuple(pinned))


def build_model_spec(table: CategoryCountTable, phylo: Optional[DistanceMatrix] = None,
                     areal: Optional[DistanceMatrix] = None, priors: Optional[PriorSettings] = None,
                     controls: Sequence[str] = config.CONTROLS,
                     weight_by_phones: bool = config.WEIGHT_BY_PHONES) -> ModelSpec:
    """Build a ModelSpec from a count table.

    Languages and concepts are indexed in order of first appearance; distance
    matrices are restricted to the modeled languages.
    """
    language_ids = tuple(dict.fromkeys(table.language_ids))
    concept_ids = tuple(dict.fromkeys(table.concept_ids))
    lang_pos = {lang: i for i, lang in enumerate(language_ids)}
    concept_pos = {c: j for j, c in enumerate(concept_ids)}

    controls = tuple(controls)
    spec = ModelSpec(
        category=table.category,
        levels=table.levels,
        language_ids=language_ids,
        concept_ids=concept_ids,
        lang_idx=np.array([lang_pos[lang] for lang in table.language_ids], dtype=np.int64),
        concept_idx=np.array([concept_pos[c] for c in table.concept_ids], dtype=np.int64),
        proportions=to_proportions(table),
        phone_totals=table.totals.astype(float),
        priors=priors or PriorSettings(),
        phylo=phylo.subset(language_ids) if phylo is not None and 'phylo' in controls else None,
        areal=areal.subset(language_ids) if areal is not None and 'areal' in controls else None,
        controls=controls,
        weight_by_phones=weight_by_phones,
    )
    logger.info(
        f"Model spec for {spec.category}: K={spec.K}, L={spec.L}, C={spec.C}, N={spec.N}, "
        f"controls={list(spec.active_controls) or 'none'}"
    )
    return spec


def _matrix_to_json(dist: Optional[DistanceMatrix]):
    if dist is None:
        return None
    return {'values': dist.values.tolist(), 'mask': dist.mask.astype(int).tolist()}


def _matrix_from_json(data, labels, kind) -> Optional[DistanceMatrix]:
    if data is None:
        return None
    return DistanceMatrix(labels, np.array(data['values'], dtype=float),
                          np.array(data['mask'], dtype=bool), kind)


def save_model_spec(spec: ModelSpec, path) -> Path:
    """Write a self-contained, versioned JSON description of the model."""
    path = Path(path)
    payload = {
        'format': 'soundsym-model-spec',
        'format_version': config.MODEL_FORMAT_VERSION,
        'category': spec.category,
        'levels': list(spec.levels),
        'language_ids': list(spec.language_ids),
        'concept_ids': list(spec.concept_ids),
        'lang_idx': spec.lang_idx.tolist(),
        'concept_idx': spec.concept_idx.tolist(),
        'proportions': spec.proportions.tolist(),
        'phone_totals': spec.phone_totals.tolist(),
        'priors': spec.priors.model_dump(),
        'controls': list(spec.controls),
        'pinned': list(spec.pinned),
        'weight_by_phones': spec.weight_by_phones,
        'phylo': _matrix_to_json(spec.phylo),
        'areal': _matrix_to_json(spec.areal),
    }
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f)
    return path


def load_model_spec(path) -> ModelSpec:
    with open(path, 'r', encoding='utf-8') as f:
        payload = json.load(f)
    if payload.get('format') != 'soundsym-model-spec':
        raise ModelError(f"{path} is not a model spec")
    if payload.get('format_version') != config.MODEL_FORMAT_VERSION:
        raise ModelError(f"Unsupported model spec version {payload.get('format_version')}")
    labels = tuple(payload['language_ids'])
    category_levels(payload['category'])
    return ModelSpec(
        category=payload['category'],
        levels=tuple(payload['levels']),
        language_ids=labels,
        concept_ids=tuple(payload['concept_ids']),
        lang_idx=np.array(payload['lang_idx'], dtype=np.int64),
        concept_idx=np.array(payload['concept_idx'], dtype=np.int64),
        proportions=np.array(payload['proportions'], dtype=float).reshape(-1, len(payload['levels'])),
        phone_totals=np.array(payload['phone_totals'], dtype=float),
        priors=PriorSettings(**payload['priors']),
        phylo=_matrix_from_json(payload['phylo'], labels, 'phylo'),
        areal=_matrix_from_json(payload['areal'], labels, 'areal'),
        controls=tuple(payload['controls']),
        pinned=tuple(payload['pinned']),
        weight_by_phones=payload['weight_by_phones'],
    )


# ===== Parameter layout =====

class ParameterLayout:
    """Offsets of each unconstrained block inside the flat parameter vector."""

    def __init__(self, spec: ModelSpec):
        k1 = spec.K - 1
        blocks: List[Tuple[str, Tuple[int, ...]]] = [
            ('alpha', (k1,)),
            ('z_c', (spec.C, k1)),
            ('z_l', (spec.L, k1)),
            ('log_tau_c', (k1,)),
            ('log_tau_l', (k1,)),
        ]
        for control in spec.active_controls:
            suffix = control[0]
            blocks += [
                (f'z_{suffix}', (spec.L, k1)),
                (f'log_phi_{suffix}', ()),
                (f'log_sigma_{suffix}', ()),
            ]
        blocks.append(('log_theta', ()))

        self.shapes: Dict[str, Tuple[int, ...]] = {}
        self.slices: Dict[str, slice] = {}
        offset = 0
        for name, shape in blocks:
            size = int(np.prod(shape)) if shape else 1
            self.shapes[name] = shape
            self.slices[name] = slice(offset, offset + size)
            offset += size
        self.size = offset

    def unpack(self, q: np.ndarray) -> ParameterVector:
        out = {}
        for name, shape in self.shapes.items():
            block = q[self.slices[name]]
            out[name] = block.reshape(shape) if shape else block[0]
        return out

    def pack(self, params: ParameterVector) -> np.ndarray:
        q = np.zeros(self.size)
        for name, shape in self.shapes.items():
            q[self.slices[name]] = np.ravel(params[name])
        return q

    def names(self) -> List[str]:
        return _expand_names([(name, shape) for name, shape in self.shapes.items()])


def _expand_names(blocks) -> List[str]:
    names = []
    for name, shape in blocks:
        if not shape:
            names.append(name)
        elif len(shape) == 1:
            names.extend(f'{name}[{k}]' for k in range(shape[0]))
        else:
            names.extend(f'{name}[{i},{k}]' for i in range(shape[0]) for k in range(shape[1]))
    return names


# ===== Likelihood pieces =====

def _normal_logpdf(x, mean, sd):
    return -0.5 * ((x - mean) / sd) ** 2 - math.log(sd) - _HALF_LOG_2PI


def _half_normal_log_scale(u, sd):
    """log half-Normal(exp(u) | 0, sd) + u, and its derivative in u."""
    x = np.exp(u)
    value = math.log(2.0) - math.log(sd) - _HALF_LOG_2PI - 0.5 * (x / sd) ** 2 + u
    grad = 1.0 - (x / sd) ** 2
    return value, grad


def _gamma_log_scale(u, shape, rate):
    """log Gamma(exp(u) | shape, rate) + u, and its derivative in u."""
    x = np.exp(u)
    value = shape * math.log(rate) - gammaln(shape) + shape * u - rate * x
    grad = shape - rate * x
    return value, grad


def dirichlet_rows(mu: np.ndarray, theta: float, log_y: np.ndarray) -> np.ndarray:
    """Row-wise Dirichlet log density of y under concentration theta * mu."""
    a = theta * mu
    return gammaln(theta) - gammaln(a).sum(axis=1) + ((a - 1.0) * log_y).sum(axis=1)


def full_predictor(eta_free: np.ndarray) -> np.ndarray:
    """Append the pinned reference logit 0."""
    return np.concatenate([eta_free, np.zeros(eta_free.shape[:-1] + (1,))], axis=-1)


def intercepts_from_composition(mu: np.ndarray) -> np.ndarray:
    """Free intercepts whose softmax (with the reference pinned) is mu."""
    mu = np.asarray(mu, dtype=float)
    return np.log(mu[..., :-1]) - np.log(mu[..., -1:])


def level_log_odds(eta_free: np.ndarray, level: int) -> np.ndarray:
    """logit of softmax(eta)[level] for rows of free logits."""
    eta = full_predictor(np.atleast_2d(eta_free))
    others = np.delete(eta, level, axis=1)
    return eta[:, level] - logsumexp(others, axis=1)


class DirichletModel:
    """Log posterior and gradient over the flat unconstrained parameter vector."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.layout = ParameterLayout(spec)
        self.log_y = np.log(spec.proportions)
        self.weights = spec.weights
        self.kernels: Dict[str, BlockCholesky] = {
            control: BlockCholesky(spec.distance(control)) for control in spec.active_controls
        }

    @property
    def dim(self) -> int:
        return self.layout.size

    # --- parameter views ---

    def prior_mode(self) -> np.ndarray:
        """Mode of the prior on the unconstrained scale (Jacobians included)."""
        priors = self.spec.priors
        params = {name: np.zeros(shape) if shape else 0.0 for name, shape in self.layout.shapes.items()}
        params['alpha'] = np.full(self.spec.K - 1, priors.intercept_mean)
        params['log_tau_c'] = np.full(self.spec.K - 1, math.log(priors.scale_sd))
        params['log_tau_l'] = np.full(self.spec.K - 1, math.log(priors.scale_sd))
        for control in self.spec.active_controls:
            s = control[0]
            params[f'log_phi_{s}'] = math.log(priors.phi_shape / priors.phi_rate)
            params[f'log_sigma_{s}'] = math.log(priors.scale_sd)
        params['log_theta'] = math.log(priors.theta_shape / priors.theta_rate)
        return self.layout.pack(params)

    def constrain(self, q: np.ndarray) -> ParameterVector:
        """Constrained parameters plus the derived effects."""
        p = self.layout.unpack(np.asarray(q, dtype=float))
        out: ParameterVector = {
            'alpha': p['alpha'],
            'tau_c': np.exp(p['log_tau_c']),
            'tau_l': np.exp(p['log_tau_l']),
            'theta': float(np.exp(p['log_theta'])),
        }
        out['c'] = p['z_c'] * out['tau_c']
        out['l'] = p['z_l'] * out['tau_l']
        for control in self.spec.active_controls:
            s = control[0]
            out[f'z_{s}'] = p[f'z_{s}']
            out[f'phi_{s}'] = float(np.exp(p[f'log_phi_{s}']))
            out[f'sigma_{s}'] = float(np.exp(p[f'log_sigma_{s}']))
            chol = self.kernels[control].factorize(KernelParams(out[f'phi_{s}'], 1.0))
            out[f'{control}_effect'] = out[f'sigma_{s}'] * chol.matmul(p[f'z_{s}'])
        return out

    def constrained_names(self) -> List[str]:
        k1 = self.spec.K - 1
        blocks = [('alpha', (k1,)), ('tau_c', (k1,)), ('tau_l', (k1,)),
                  ('c', (self.spec.C, k1)), ('l', (self.spec.L, k1))]
        for control in self.spec.active_controls:
            s = control[0]
            blocks += [(f'z_{s}', (self.spec.L, k1)), (f'phi_{s}', ()), (f'sigma_{s}', ())]
        blocks.append(('theta', ()))
        return _expand_names(blocks)

    def constrained_row(self, q: np.ndarray) -> np.ndarray:
        params = self.constrain(q)
        parts = [params['alpha'], params['tau_c'], params['tau_l'], params['c'].ravel(), params['l'].ravel()]
        for control in self.spec.active_controls:
            s = control[0]
            parts += [params[f'z_{s}'].ravel(), [params[f'phi_{s}']], [params[f'sigma_{s}']]]
        parts.append([params['theta']])
        return np.concatenate([np.asarray(part, dtype=float).ravel() for part in parts])

    # --- density ---

    def _language_effects(self, params: ParameterVector) -> np.ndarray:
        effect = params['l'].copy()
        for control in self.spec.active_controls:
            effect = effect + params[f'{control}_effect']
        return effect

    def _eta_free(self, params: ParameterVector) -> np.ndarray:
        spec = self.spec
        lang = self._language_effects(params)
        return params['alpha'] + params['c'][spec.concept_idx] + lang[spec.lang_idx]

    def pointwise_log_likelihood(self, q: np.ndarray) -> np.ndarray:
        params = self.constrain(q)
        mu = softmax(full_predictor(self._eta_free(params)), axis=1)
        return self.weights * dirichlet_rows(mu, params['theta'], self.log_y)

    def log_prior_terms(self, q: np.ndarray) -> Dict[str, float]:
        return self._evaluate(np.asarray(q, dtype=float), need_grad=False)[2]

    def log_density_and_gradient(self, q: np.ndarray, strict: bool = True) -> Tuple[float, np.ndarray]:
        """Log posterior (up to the evidence) and its gradient at unconstrained q.

        Args:
            q: Flat unconstrained parameter vector
            strict: Raise NonFiniteError on non-finite values; when False, regions where
                the kernel cannot be factorized or the density overflows return -inf

        Returns:
            (log posterior, gradient)
        """
        q = np.asarray(q, dtype=float)
        if strict:
            value, grad, _ = self._evaluate(q, need_grad=True)
            if not np.isfinite(value):
                raise NonFiniteError(f"Non-finite log posterior {value}", -1)
            bad = np.flatnonzero(~np.isfinite(grad))
            if bad.size:
                raise NonFiniteError(f"Non-finite gradient at component {bad[0]}", int(bad[0]))
            return value, grad

        try:
            with np.errstate(over='ignore', invalid='ignore', divide='ignore', under='ignore'):
                value, grad, _ = self._evaluate(q, need_grad=True)
        except (CholeskyError, NonFiniteError, ValueError, np.linalg.LinAlgError) as e:
            logger.debug(f"Density evaluation failed: {e}")
            return -np.inf, np.zeros_like(q)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            return -np.inf, np.zeros_like(q)
        return value, grad

    def _evaluate(self, q: np.ndarray, need_grad: bool):
        spec = self.spec
        priors = spec.priors
        layout = self.layout
        p = layout.unpack(q)
        grad = np.zeros(layout.size) if need_grad else None
        terms: Dict[str, float] = {}

        def put(name, value):
            if need_grad:
                grad[layout.slices[name]] += np.ravel(value)

        tau_c = np.exp(p['log_tau_c'])
        tau_l = np.exp(p['log_tau_l'])
        theta = float(np.exp(p['log_theta']))
        c = p['z_c'] * tau_c
        lang = p['z_l'] * tau_l
        gp_latent = {}
        for control in spec.active_controls:
            s = control[0]
            phi = float(np.exp(p[f'log_phi_{s}']))
            sigma = float(np.exp(p[f'log_sigma_{s}']))
            chol = self.kernels[control].factorize(KernelParams(phi, 1.0))
            latent = chol.matmul(p[f'z_{s}'])
            gp_latent[control] = (chol, latent, phi, sigma)
            lang = lang + sigma * latent

        # likelihood
        eta_free = p['alpha'] + c[spec.concept_idx] + lang[spec.lang_idx]
        mu = softmax(full_predictor(eta_free), axis=1)
        a = theta * mu
        rows = gammaln(theta) - gammaln(a).sum(axis=1) + ((a - 1.0) * self.log_y).sum(axis=1)
        terms['likelihood'] = float(np.dot(self.weights, rows))
        bad = np.flatnonzero(~np.isfinite(rows))
        if bad.size and spec.N:
            raise NonFiniteError(f"Non-finite log likelihood at observation {bad[0]}", int(bad[0]))

        if need_grad:
            w = self.weights[:, None]
            dig = self.log_y - digamma(a)
            g_mu = theta * dig
            g_eta = mu * (g_mu - (mu * g_mu).sum(axis=1, keepdims=True))
            g_eta = (w * g_eta)[:, :-1]
            d_theta = float(np.dot(self.weights, digamma(theta) + (mu * dig).sum(axis=1)))

            put('alpha', g_eta.sum(axis=0))
            g_c = np.zeros_like(c)
            np.add.at(g_c, spec.concept_idx, g_eta)
            g_lang = np.zeros_like(lang)
            np.add.at(g_lang, spec.lang_idx, g_eta)

            put('z_c', g_c * tau_c)
            put('log_tau_c', (g_c * p['z_c']).sum(axis=0) * tau_c)
            put('z_l', g_lang * tau_l)
            put('log_tau_l', (g_lang * p['z_l']).sum(axis=0) * tau_l)
            for control, (chol, latent, phi, sigma) in gp_latent.items():
                s = control[0]
                put(f'log_sigma_{s}', float(np.sum(g_lang * latent)) * sigma)
                g_z, g_phi, _ = chol.backward(sigma * g_lang, p[f'z_{s}'])
                put(f'z_{s}', g_z)
                put(f'log_phi_{s}', g_phi * phi)
            put('log_theta', d_theta * theta)

        # priors
        shared = float(np.sum(_normal_logpdf(p['alpha'], priors.intercept_mean, priors.intercept_sd)))
        put('alpha', -(p['alpha'] - priors.intercept_mean) / priors.intercept_sd ** 2)
        for name in ('z_c', 'z_l'):
            shared += float(-0.5 * np.sum(p[name] ** 2) - p[name].size * _HALF_LOG_2PI)
            put(name, -p[name])
        for name in ('log_tau_c', 'log_tau_l'):
            value, g = _half_normal_log_scale(p[name], priors.scale_sd)
            shared += float(np.sum(value))
            put(name, g)
        value, g = _gamma_log_scale(p['log_theta'], priors.theta_shape, priors.theta_rate)
        shared += float(value)
        put('log_theta', g)
        terms['prior_shared'] = shared

        for control in spec.active_controls:
            s = control[0]
            z = p[f'z_{s}']
            total = float(-0.5 * np.sum(z ** 2) - z.size * _HALF_LOG_2PI)
            put(f'z_{s}', -z)
            value, g = _gamma_log_scale(p[f'log_phi_{s}'], priors.phi_shape, priors.phi_rate)
            total += float(value)
            put(f'log_phi_{s}', g)
            value, g = _half_normal_log_scale(p[f'log_sigma_{s}'], priors.scale_sd)
            total += float(value)
            put(f'log_sigma_{s}', g)
            terms[f'prior_{control}'] = total

        return float(sum(terms.values())), grad, terms


# ===== Functional interface =====

def linear_predictor(params: ParameterVector, spec: ModelSpec, row: int) -> np.ndarray:
    """Length-K linear predictor of one observation (reference logit pinned at 0).

    `params` is a constrained ParameterVector as returned by DirichletModel.constrain;
    structured effects default to zero when absent.
    """
    if not 0 <= row < spec.N:
        raise ModelError(f"Row {row} out of range for {spec.N} observations", row)
    li, cj = spec.lang_idx[row], spec.concept_idx[row]
    eta = np.array(params['alpha'], dtype=float) + params['c'][cj] + params['l'][li]
    for control in spec.active_controls:
        effect = params.get(f'{control}_effect')
        if effect is not None:
            eta = eta + effect[li]
    return full_predictor(eta)


def log_likelihood(params: ParameterVector, spec: ModelSpec) -> float:
    """Sum of (weighted) Dirichlet log densities over all observations.

    Raises:
        NonFiniteError: with the offending row index
    """
    lang = np.array(params['l'], dtype=float)
    for control in spec.active_controls:
        effect = params.get(f'{control}_effect')
        if effect is not None:
            lang = lang + effect
    eta_free = np.asarray(params['alpha']) + params['c'][spec.concept_idx] + lang[spec.lang_idx]
    mu = softmax(full_predictor(eta_free), axis=1)
    rows = spec.weights * dirichlet_rows(mu, float(params['theta']), np.log(spec.proportions))
    bad = np.flatnonzero(~np.isfinite(rows))
    if bad.size:
        raise NonFiniteError(f"Non-finite log likelihood at observation {bad[0]}", int(bad[0]))
    return float(rows.sum())


def log_posterior_and_gradient(q: np.ndarray, spec: ModelSpec) -> Tuple[float, np.ndarray]:
    return DirichletModel(spec).log_density_and_gradient(q)


# ===== Prior simulation =====

def prior_simulate(spec: ModelSpec, n_draws: int, seed: int):
    """Draw population-level parameters and hyperparameters from the joint prior.

    Language-level latents are omitted; they sit at their zero mean for every
    population-level quantity reported downstream.
    """
    from soundsym.inference.draws import PosteriorDraws

    priors = spec.priors
    rng = np.random.default_rng(seed)
    k1 = spec.K - 1
    alpha = rng.normal(priors.intercept_mean, priors.intercept_sd, size=(n_draws, k1))
    tau_c = np.abs(rng.normal(0.0, priors.scale_sd, size=(n_draws, k1)))
    tau_l = np.abs(rng.normal(0.0, priors.scale_sd, size=(n_draws, k1)))
    c = rng.standard_normal((n_draws, spec.C, k1)) * tau_c[:, None, :]

    columns = [alpha, tau_c, tau_l, c.reshape(n_draws, -1)]
    blocks = [('alpha', (k1,)), ('tau_c', (k1,)), ('tau_l', (k1,)), ('c', (spec.C, k1))]
    for control in spec.active_controls:
        s = control[0]
        columns.append(rng.gamma(priors.phi_shape, 1.0 / priors.phi_rate, size=(n_draws, 1)))
        columns.append(np.abs(rng.normal(0.0, priors.scale_sd, size=(n_draws, 1))))
        blocks += [(f'phi_{s}', ()), (f'sigma_{s}', ())]
    columns.append(rng.gamma(priors.theta_shape, 1.0 / priors.theta_rate, size=(n_draws, 1)))
    blocks.append(('theta', ()))

    return PosteriorDraws(
        names=_expand_names(blocks),
        values=np.hstack(columns),
        chain_ids=np.zeros(n_draws, dtype=np.int64),
        seed=seed,
        category=spec.category,
        levels=spec.levels,
        concept_ids=spec.concept_ids,
        variant='prior',
    )


def prior_report(draws, spec: ModelSpec, quantiles=(0.05, 0.25, 0.5, 0.75, 0.95)):
    """Quantile table of hyperparameters and implied per-level log-odds ratios.

    The log-odds rows pool every concept's prior effect; `p_abs_gt_1` is the share
    of draws whose implied log-odds ratio exceeds 1 in magnitude.
    """
    import pandas as pd

    rows = []

    def summarize(name, x):
        x = np.asarray(x, dtype=float).ravel()
        row = {'parameter': name, 'mean': float(x.mean()), 'sd': float(x.std(ddof=1)) if x.size > 1 else 0.0}
        row.update({f'q{int(round(q * 100)):02d}': float(np.quantile(x, q)) for q in quantiles})
        row['p_abs_gt_1'] = float(np.mean(np.abs(x) > 1.0))
        rows.append(row)

    for name in draws.names:
        if not name.startswith('c['):
            summarize(name, draws.column(name))

    alpha = draws.block('alpha')
    c = draws.block('c')
    for k, level in enumerate(spec.levels):
        base = level_log_odds(alpha, k)
        pooled = np.concatenate([
            level_log_odds(alpha + c[:, j, :], k) - base for j in range(c.shape[1])
        ]) if c.shape[1] else np.zeros(1)
        summarize(f'log_odds[{level}]', pooled)

    return pd.DataFrame(rows)
