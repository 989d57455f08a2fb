"""
Phylogenetic and areal distance matrices and the exponential-decay kernel.

Masked pairs (different family, different macro-area, beyond the areal cutoff,
missing coordinates) carry no covariance, so both kernels are block diagonal
up to a permutation. Factorization runs per connected block; with indices kept
in ascending order inside each block the assembled factor equals the dense
lower Cholesky factor.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import lapack, solve_triangular
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from soundsym import config

logger = logging.getLogger(__name__)


class CholeskyError(RuntimeError):
    """Kernel factorization failed even at the largest allowed jitter."""

    def __init__(self, minor: int, jitter: float):
        super().__init__(f"Cholesky factorization failed at leading minor {minor} (jitter {jitter:.1e})")
        self.minor = minor
        self.jitter = jitter


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Normalized pairwise distances with a no-covariance mask.

    Masked entries hold 0.0 in `values`; only the mask decides whether a pair covaries.
    """
    labels: Tuple[str, ...]
    values: np.ndarray
    mask: np.ndarray
    kind: str = 'phylo'

    def __post_init__(self):
        n = len(self.labels)
        if self.values.shape != (n, n) or self.mask.shape != (n, n):
            raise ValueError(f"Distance matrix shape {self.values.shape} does not match {n} labels")
        if not np.array_equal(self.values, self.values.T) or not np.array_equal(self.mask, self.mask.T):
            raise ValueError("Distance matrix and mask must be symmetric")
        if np.any(np.diag(self.values) != 0) or np.any(np.diag(self.mask)):
            raise ValueError("Diagonal must be zero and unmasked")
        free = self.values[~self.mask]
        if free.size and (free.min() < 0 or free.max() > 1):
            raise ValueError("Unmasked distances must lie in [0, 1]")

    @property
    def size(self) -> int:
        return len(self.labels)

    def subset(self, labels: Sequence[str]) -> 'DistanceMatrix':
        """Restrict (and reorder) to the given labels."""
        position = {label: i for i, label in enumerate(self.labels)}
        missing = [l for l in labels if l not in position]
        if missing:
            raise KeyError(f"Labels not in {self.kind} matrix: {missing[:5]}")
        idx = np.array([position[l] for l in labels], dtype=int)
        return DistanceMatrix(tuple(labels), self.values[np.ix_(idx, idx)].copy(),
                              self.mask[np.ix_(idx, idx)].copy(), self.kind)

    def blocks(self) -> List[np.ndarray]:
        """Connected components of the unmasked graph, each as ascending indices."""
        n, labels = connected_components(csr_matrix(~self.mask), directed=False)
        groups = [np.flatnonzero(labels == b) for b in range(n)]
        return sorted(groups, key=lambda g: g[0])

    def write_csv(self, path) -> Path:
        """Labeled CSV; masked cells are empty fields."""
        path = Path(path)
        cells = np.where(self.mask, '', np.vectorize(lambda v: repr(float(v)), otypes=[object])(self.values))
        frame = pd.DataFrame(cells, index=list(self.labels), columns=list(self.labels))
        frame.index.name = 'language_id'
        frame.to_csv(path, lineterminator='\n')
        return path

    @classmethod
    def read_csv(cls, path, kind: str = 'phylo') -> 'DistanceMatrix':
        frame = pd.read_csv(path, index_col=0, dtype=str, keep_default_na=False)
        labels = tuple(frame.columns)
        if tuple(frame.index) != labels:
            raise ValueError(f"{path}: row and column labels differ")
        cells = frame.to_numpy()
        mask = cells == ''
        values = np.where(mask, '0', cells).astype(float)
        return cls(labels, values, mask, kind)


@dataclass(frozen=True)
class KernelParams:
    phi: float
    sigma: float
    jitter: float = config.KERNEL_JITTER

    def __post_init__(self):
        if not self.phi > 0:
            raise ValueError(f"phi must be positive, got {self.phi}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if not 1e-12 <= self.jitter <= config.KERNEL_MAX_JITTER:
            raise ValueError(f"jitter must lie in [1e-12, {config.KERNEL_MAX_JITTER}], got {self.jitter}")


# ===== Distances =====

def patristic_distance(languages) -> DistanceMatrix:
    """Path-length distance on the classification tree, normalized per family.

    Unit branch lengths; distance = steps from each language up to their deepest
    shared node. Pairs from different families are masked.
    """
    n = len(languages)
    paths = [tuple(lang.family_path) for lang in languages]
    values = np.zeros((n, n))
    mask = np.ones((n, n), dtype=bool)
    np.fill_diagonal(mask, False)

    families = {}
    for i, path in enumerate(paths):
        families.setdefault(path[0], []).append(i)

    for members in families.values():
        for a_pos, a in enumerate(members):
            for b in members[a_pos + 1:]:
                pa, pb = paths[a], paths[b]
                common = 0
                for x, y in zip(pa, pb):
                    if x != y:
                        break
                    common += 1
                values[a, b] = values[b, a] = (len(pa) - common) + (len(pb) - common)
                mask[a, b] = mask[b, a] = False
        idx = np.array(members)
        block = values[np.ix_(idx, idx)]
        longest = block.max()
        if longest > 0:
            values[np.ix_(idx, idx)] = block / longest

    logger.info(f"Patristic distances: {n} languages in {len(families)} families")
    return DistanceMatrix(tuple(lang.id for lang in languages), values, mask, 'phylo')


def geodesic_km(p: Tuple[float, float], q: Tuple[float, float]) -> float:
    """Great-circle (haversine) distance in km between (lat, lon) points in degrees."""
    return float(pairwise_geodesic_km(np.array([p[0], q[0]]), np.array([p[1], q[1]]))[0, 1])


def pairwise_geodesic_km(latitude: np.ndarray, longitude: np.ndarray) -> np.ndarray:
    lat = np.radians(np.asarray(latitude, dtype=float))
    lon = np.radians(np.asarray(longitude, dtype=float))
    dlat = lat[:, None] - lat[None, :]
    dlon = lon[:, None] - lon[None, :]
    a = np.sin(0.5 * dlat) ** 2 + np.cos(lat[:, None]) * np.cos(lat[None, :]) * np.sin(0.5 * dlon) ** 2
    a = np.clip(a, 0.0, 1.0)
    dist = 2.0 * config.EARTH_RADIUS_KM * np.arctan2(np.sqrt(a), np.sqrt(1.0 - a))
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    return dist


def areal_distance(languages, cutoff_km: float = config.AREAL_CUTOFF_KM) -> DistanceMatrix:
    """Geodesic distance scaled by the cutoff; unmasked only within a macro-area and the cutoff."""
    n = len(languages)
    located = np.array([lang.has_coordinates for lang in languages], dtype=bool)
    lat = np.array([lang.latitude if lang.has_coordinates else 0.0 for lang in languages])
    lon = np.array([lang.longitude if lang.has_coordinates else 0.0 for lang in languages])
    area = np.array([lang.macroarea for lang in languages])

    km = pairwise_geodesic_km(lat, lon)
    linked = (area[:, None] == area[None, :]) & located[:, None] & located[None, :] & (km <= cutoff_km)
    np.fill_diagonal(linked, True)
    mask = ~linked
    values = np.where(mask, 0.0, km / cutoff_km)
    np.fill_diagonal(values, 0.0)

    if not located.all():
        logger.warning(f"{int((~located).sum())} languages without coordinates are areally uncorrelated")
    logger.info(f"Areal distances: {n} languages, {int(linked.sum() - n) // 2} linked pairs within {cutoff_km:g} km")
    return DistanceMatrix(tuple(lang.id for lang in languages), values, mask, 'areal')


# ===== Kernel and factorization =====

@dataclass
class KernelBlock:
    index: np.ndarray
    distances: np.ndarray
    linked: np.ndarray
    decay: np.ndarray = field(default=None)
    factor: np.ndarray = field(default=None)


class BlockCholesky:
    """Cholesky factor of a masked exponential kernel, stored per connected block."""

    def __init__(self, dist: DistanceMatrix, blocks: Optional[List[np.ndarray]] = None):
        self.size = dist.size
        self.blocks = [
            KernelBlock(
                index=idx,
                distances=dist.values[np.ix_(idx, idx)],
                linked=~dist.mask[np.ix_(idx, idx)],
            )
            for idx in (blocks if blocks is not None else dist.blocks())
        ]
        self.params: Optional[KernelParams] = None
        self.jitter = None

    def factorize(self, params: KernelParams) -> 'BlockCholesky':
        """Factor every block, escalating jitter tenfold up to the maximum."""
        jitter = params.jitter
        while True:
            failure = None
            for block in self.blocks:
                block.decay = np.where(block.linked, np.exp(-params.phi * block.distances), 0.0)
                cov = params.sigma ** 2 * block.decay
                cov[np.diag_indices_from(cov)] += jitter
                factor, info = lapack.dpotrf(cov, lower=1, clean=1)
                if info != 0:
                    failure = int(block.index[info - 1]) + 1 if info > 0 else 0
                    break
                block.factor = factor
            if failure is None:
                break
            if jitter * config.KERNEL_JITTER_GROWTH > config.KERNEL_MAX_JITTER * (1 + 1e-9):
                raise CholeskyError(failure, jitter)
            logger.debug(f"Cholesky failed at minor {failure} with jitter {jitter:.1e}; escalating")
            jitter *= config.KERNEL_JITTER_GROWTH
        self.params = params
        self.jitter = jitter
        return self

    def matmul(self, z: np.ndarray) -> np.ndarray:
        """Return L @ z for z of shape (n, m)."""
        out = np.zeros_like(z)
        for block in self.blocks:
            out[block.index] = block.factor @ z[block.index]
        return out

    def dense_factor(self) -> np.ndarray:
        factor = np.zeros((self.size, self.size))
        for block in self.blocks:
            factor[np.ix_(block.index, block.index)] = block.factor
        return factor

    def dense_covariance(self) -> np.ndarray:
        cov = np.zeros((self.size, self.size))
        sigma2 = self.params.sigma ** 2
        for block in self.blocks:
            b = sigma2 * block.decay
            b[np.diag_indices_from(b)] += self.jitter
            cov[np.ix_(block.index, block.index)] = b
        return cov

    def backward(self, grad_out: np.ndarray, z: np.ndarray) -> Tuple[np.ndarray, float, float]:
        """Reverse-mode step through y = L z.

        Args:
            grad_out: d f / d y, shape (n, m)
            z: the standardized latents, shape (n, m)

        Returns:
            (d f / d z, d f / d phi, d f / d sigma)
        """
        phi, sigma = self.params.phi, self.params.sigma
        grad_z = np.zeros_like(z)
        grad_phi = 0.0
        grad_sigma = 0.0
        for block in self.blocks:
            idx = block.index
            factor = block.factor
            g = grad_out[idx]
            grad_z[idx] = factor.T @ g
            factor_bar = np.tril(g @ z[idx].T)
            cov_bar = _cholesky_backward(factor, factor_bar)
            # dK/dphi = -sigma^2 d exp(-phi d); dK/dsigma = 2 sigma exp(-phi d)
            grad_phi += float(np.sum(cov_bar * (-sigma ** 2) * block.distances * block.decay))
            grad_sigma += float(np.sum(cov_bar * 2.0 * sigma * block.decay))
        return grad_z, grad_phi, grad_sigma


def _cholesky_backward(factor: np.ndarray, factor_bar: np.ndarray) -> np.ndarray:
    """Adjoint of A given the adjoint of its lower Cholesky factor."""
    phi = factor.T @ factor_bar
    phi = np.tril(phi)
    phi[np.diag_indices_from(phi)] *= 0.5
    left = solve_triangular(factor, phi, trans='T', lower=True)
    return solve_triangular(factor, left.T, trans='T', lower=True).T


def kernel_matrix(dist: DistanceMatrix, params: KernelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Covariance sigma^2 exp(-phi d) on unmasked pairs, 0 on masked pairs, sigma^2 + jitter on the diagonal.

    Returns:
        (covariance, lower Cholesky factor)

    Raises:
        CholeskyError: when factorization fails at the largest allowed jitter
    """
    chol = BlockCholesky(dist).factorize(params)
    return chol.dense_covariance(), chol.dense_factor()
