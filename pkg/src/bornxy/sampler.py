"""Exact i.i.d. sampling of measurement records from dense states and tensor trains.

Randomness: a dataset of ``n`` samples of an ``N``-site system consumes one
``(n, N)`` block of uniforms from ``Generator(Philox(seed))`` in row-major
order, so sample ``k`` always uses row ``k`` (its own substream) no matter
how the work is split.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .common import Basis, Boundary, NumericalError
from .mps import TensorTrain, build_cache, rotate_dense
from .spin_model import DenseState

NEG_PROB_TOL = 1e-10
NORM_TOL = 1e-9


@dataclass
class Dataset:
    configs: np.ndarray  # (count, N) uint8, site 1 first
    n_sites: int
    boundary: Boundary = Boundary.OPEN
    basis: Basis = Basis.Z
    seed: int = 0
    source: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.configs = np.asarray(self.configs, dtype=np.uint8).reshape(-1, self.n_sites)
        self.boundary = Boundary.parse(self.boundary)
        self.basis = Basis.parse(self.basis)
        if self.configs.size and self.configs.max() > 1:
            raise ValueError("configurations must contain only 0 and 1")

    @property
    def count(self) -> int:
        return len(self.configs)

    def __len__(self) -> int:
        return self.count

    def codes(self) -> np.ndarray:
        """Integer index of each configuration (site 1 most significant)."""
        weights = 1 << np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        return self.configs.astype(np.int64) @ weights


@dataclass
class EmpiricalDistribution:
    """Support codes in increasing order (== lexicographic bit strings) and their frequencies."""

    n_sites: int
    codes: np.ndarray
    freqs: np.ndarray

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)
        self.freqs = np.asarray(self.freqs, dtype=np.float64)
        order = np.argsort(self.codes, kind="stable")
        self.codes, self.freqs = self.codes[order], self.freqs[order]
        if np.any(self.freqs < 0):
            raise ValueError("frequencies must be nonnegative")
        if abs(self.freqs.sum() - 1) > 1e-12:
            raise ValueError(f"frequencies sum to {self.freqs.sum()}, not 1")

    @classmethod
    def from_probabilities(cls, probs: np.ndarray, drop_zeros: bool = True) -> "EmpiricalDistribution":
        probs = np.asarray(probs, dtype=np.float64)
        n = int(probs.size).bit_length() - 1
        codes = np.arange(probs.size)
        if drop_zeros:
            keep = probs > 0
            codes, probs = codes[keep], probs[keep]
        return cls(n, codes, probs / probs.sum())

    def as_dict(self) -> dict[str, float]:
        return {format(int(c), f"0{self.n_sites}b"): float(f) for c, f in zip(self.codes, self.freqs)}

    def dense(self) -> np.ndarray:
        out = np.zeros(2**self.n_sites)
        out[self.codes] = self.freqs
        return out


def empirical_distribution(data: Dataset) -> EmpiricalDistribution:
    if data.count == 0:
        raise ValueError("empty dataset")
    codes, counts = np.unique(data.codes(), return_counts=True)
    return EmpiricalDistribution(data.n_sites, codes, counts / counts.sum())


def _uniforms(seed: int, n: int, n_sites: int) -> np.ndarray:
    return np.random.Generator(np.random.Philox(seed)).random((n, n_sites))


def _clamp(p: np.ndarray) -> np.ndarray:
    if np.any(p < -NEG_PROB_TOL):
        raise NumericalError(f"negative conditional probability {p.min():.3e}")
    return np.clip(p, 0.0, 1.0)


def sample_dense(state: DenseState, n: int, seed: int = 0, boundary=Boundary.OPEN,
                 basis=Basis.Z, source: str = "dense") -> Dataset:
    """Ancestral sampling from |amplitude|^2 using prefix marginals.

    ``basis`` rotates the state before sampling (x or y measurements).
    """
    basis = Basis.parse(basis)
    if basis is not Basis.Z:
        state = rotate_dense(state, basis)
    probs = np.abs(np.asarray(state.amplitudes)) ** 2
    if abs(probs.sum() - 1) > NORM_TOL:
        raise ValueError(f"state is not normalised (norm^2 = {probs.sum():.12g})")
    nsites = state.n_sites
    # marginals[k][prefix] = P(first k bits == prefix)
    marginals = [None] * (nsites + 1)
    marginals[nsites] = probs
    for k in range(nsites - 1, -1, -1):
        marginals[k] = marginals[k + 1].reshape(-1, 2).sum(axis=1)

    u = _uniforms(seed, n, nsites)
    prefix = np.zeros(n, dtype=np.int64)
    configs = np.empty((n, nsites), dtype=np.uint8)
    for k in range(nsites):
        denom = marginals[k][prefix]
        with np.errstate(divide="ignore", invalid="ignore"):
            p0 = np.where(denom > 0, marginals[k + 1][2 * prefix] / denom, 1.0)
        bit = (u[:, k] >= _clamp(p0)).astype(np.int64)
        configs[:, k] = bit
        prefix = 2 * prefix + bit
    return Dataset(configs, nsites, boundary, basis, seed, source)


def _ancestral(tt: TensorTrain, uniforms: np.ndarray | None = None,
               configs: np.ndarray | None = None):
    """Draw (uniforms given) or score (configs given) with exact conditionals.

    Returns (configs, log_prob) where log_prob is the sum of log conditionals.
    """
    cache = build_cache(tt)
    n_sites = tt.n_sites
    b = len(uniforms) if uniforms is not None else len(configs)
    out = np.empty((b, n_sites), dtype=np.uint8) if configs is None else np.asarray(configs, dtype=np.uint8)
    d0 = tt.tensors[0].shape[0]
    dtype = np.result_type(*tt.tensors)
    prefix = np.broadcast_to(np.eye(d0, dtype=dtype), (b, d0, d0)).copy()
    log_prob = np.zeros(b)
    for k, t in enumerate(tt.tensors):
        env = cache.right_envs[k + 1]  # (r, r', p, q): bra, ket, bra-closing, ket-closing
        dr = env.shape[0]
        # rows (ket closing, ket bond), columns (bra closing, bra bond)
        env_m = env.transpose(3, 1, 2, 0).reshape(d0 * dr, d0 * dr)
        weights = []
        cands = []
        for s in range(t.shape[1]):
            q = prefix @ t[:, s, :]  # (B, D0, Dr)
            flat = q.reshape(b, -1)
            weights.append(np.real(np.sum(flat.conj() * (flat @ env_m), axis=1)))
            cands.append(q)
        w = np.stack(weights, axis=1)
        total = w.sum(axis=1)
        if np.any(total <= 0):
            raise NumericalError(f"vanishing marginal at site {k + 1}")
        p0 = _clamp(w[:, 0] / total)
        if configs is None:
            bit = (uniforms[:, k] >= p0).astype(np.intp)
            out[:, k] = bit
        else:
            bit = out[:, k].astype(np.intp)
        p_bit = np.where(bit == 0, p0, 1 - p0)
        with np.errstate(divide="ignore"):
            log_prob += np.log(p_bit)
        prefix = np.where(bit[:, None, None] == 0, cands[0], cands[1])
        scale = np.abs(prefix).reshape(b, -1).max(axis=1)
        scale[scale == 0] = 1.0
        prefix = prefix / scale[:, None, None]
    return out, log_prob


def sample_tensor_train(tt: TensorTrain, n: int, seed: int = 0, boundary=None,
                        source: str = "tensor_train") -> Dataset:
    """Exact ancestral sampling of the Born distribution of ``tt``.

    Conditionals at site k contract the sampled prefix with the cached
    suffix transfer environment, which is the same for open and periodic trains.
    """
    u = _uniforms(seed, n, tt.n_sites)
    configs, _ = _ancestral(tt, uniforms=u)
    return Dataset(configs, tt.n_sites, boundary or tt.boundary, Basis.Z, seed, source)


def conditional_log_probs(tt: TensorTrain, configs) -> np.ndarray:
    """Sum of per-site log conditionals the sampler would use for ``configs``."""
    configs = np.atleast_2d(np.asarray(configs))
    return _ancestral(tt, configs=configs)[1]
