"""Evaluation metrics: fidelity, entropy, distribution distances, sigma^z correlations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .common import Basis, Boundary
from .mps import (
    TO_DENSE_MAX_SITES,
    TensorTrain,
    dense_amplitudes,
    expectation_pauli_string,
    from_dense,
    inner_product,
    norm_squared,
    rotate_basis,
    rotate_dense,
)
from .sampler import Dataset, EmpiricalDistribution, empirical_distribution
from .spin_model import DenseState

FIT_FLOOR = 1e-6


class NoDecayError(ValueError):
    """The fitted log-correlation slope is nonnegative; xi is reported as infinite."""


def _normalized_vector(x) -> np.ndarray:
    if isinstance(x, TensorTrain):
        vec, _ = dense_amplitudes(x)
    else:
        vec = np.asarray(x.amplitudes)
    return vec / np.linalg.norm(vec)


def fidelity(model, reference, method: str = "auto") -> float:
    """|<ref|model>|^2 / (<ref|ref> <model|model>).

    ``method`` is ``"dense"`` (expand both to 2**N vectors), ``"contract"``
    (train-train contraction; dense references are converted exactly by SVD),
    or ``"auto"`` (dense up to N = 14, otherwise contraction where possible).
    """
    n_a = model.n_sites
    n_b = reference.n_sites
    if n_a != n_b:
        raise ValueError(f"size mismatch: {n_a} vs {n_b} sites")
    if method == "auto":
        both_trains = isinstance(model, TensorTrain) and isinstance(reference, TensorTrain)
        method = "contract" if (both_trains and n_a > TO_DENSE_MAX_SITES) else "dense"
    if method == "dense":
        a, b = _normalized_vector(model), _normalized_vector(reference)
        return float(abs(np.vdot(b, a)) ** 2)
    if method != "contract":
        raise ValueError(f"unknown fidelity method {method!r}")
    a = model if isinstance(model, TensorTrain) else from_dense(model)
    b = reference if isinstance(reference, TensorTrain) else from_dense(reference)
    ov = inner_product(b, a)
    if ov.log_abs == -np.inf:
        return 0.0
    return float(np.exp(2 * ov.log_abs - norm_squared(a).log_abs - norm_squared(b).log_abs))


def shannon_entropy(data: Dataset | EmpiricalDistribution) -> float:
    """Entropy of the empirical distribution in nats."""
    dist = data if isinstance(data, EmpiricalDistribution) else empirical_distribution(data)
    p = dist.freqs[dist.freqs > 0]
    return float(-(p * np.log(p)).sum())


def tv_distance(p: EmpiricalDistribution, q: EmpiricalDistribution) -> float:
    if p.n_sites != q.n_sites:
        raise ValueError("distributions over different numbers of sites")
    codes = np.union1d(p.codes, q.codes)
    pa = np.zeros(codes.size)
    qa = np.zeros(codes.size)
    pa[np.searchsorted(codes, p.codes)] = p.freqs
    qa[np.searchsorted(codes, q.codes)] = q.freqs
    return float(min(1.0, 0.5 * np.abs(pa - qa).sum()))


def exact_distribution(source, basis=Basis.Z) -> EmpiricalDistribution:
    """Exact Born distribution of a train or dense state in the given basis."""
    basis = Basis.parse(basis)
    if isinstance(source, TensorTrain):
        src = rotate_basis(source, basis) if basis is not Basis.Z else source
        vec, _ = dense_amplitudes(src)
    else:
        vec = np.asarray((rotate_dense(source, basis) if basis is not Basis.Z else source).amplitudes)
    p = np.abs(vec) ** 2
    return EmpiricalDistribution.from_probabilities(p / p.sum(), drop_zeros=False)


@dataclass
class CorrelationReport:
    r: np.ndarray
    values: np.ndarray
    n_pairs: np.ndarray
    boundary: Boundary
    amplitude: float = float("nan")
    xi: float = float("nan")
    fit_window: tuple = ()
    fit_residual: float = float("nan")
    oscillatory: bool = False
    no_decay: bool = False

    def to_dict(self) -> dict:
        return {
            "r": [int(x) for x in self.r],
            "G": [float(x) for x in self.values],
            "Np": [int(x) for x in self.n_pairs],
            "pair_convention": "ring distance, Np = N" if self.boundary is Boundary.PERIODIC
            else "chain distance, Np = N - r",
            "A": _finite_or_none(self.amplitude),
            "xi": _finite_or_none(self.xi),
            "fit_window": list(self.fit_window),
            "fit_residual": _finite_or_none(self.fit_residual),
            "oscillatory": self.oscillatory,
            "no_decay": self.no_decay,
        }


def _finite_or_none(x):
    return float(x) if np.isfinite(x) else None


def _pairs(n: int, r: int, boundary: Boundary) -> list[tuple[int, int]]:
    if boundary is Boundary.PERIODIC:
        return [(i, (i + r) % n) for i in range(n)]
    return [(i, i + r) for i in range(n - r)]


def _max_distance(n: int, boundary: Boundary) -> int:
    return n // 2 if boundary is Boundary.PERIODIC else n - 1


def _z_moments_dense(probs: np.ndarray, n: int):
    spins = 1 - 2 * ((np.arange(probs.size)[:, None] >> np.arange(n - 1, -1, -1)) & 1)
    mean = probs @ spins
    second = spins.T @ (probs[:, None] * spins)
    return mean, second


def correlation_function(source, boundary=None, r_max: int | None = None) -> CorrelationReport:
    """Pair-averaged connected <Z_i Z_{i+r}> for r = 1..r_max (no fit).

    Trains and dense states give exact expectations; datasets use sample
    means of z = 1 - 2*lambda.
    """
    if boundary is None:
        boundary = getattr(source, "boundary", None)
        if boundary is None:
            boundary = source.metadata.get("boundary", Boundary.OPEN)
    boundary = Boundary.parse(boundary)
    n = source.n_sites
    limit = _max_distance(n, boundary)
    if r_max is None:
        r_max = limit
    if not 1 <= r_max <= limit:
        raise ValueError(f"r_max must be in 1..{limit} for a {boundary.value} chain of {n} sites")

    if isinstance(source, TensorTrain):
        mean = np.array([expectation_pauli_string(source, [(i + 1, "Z")]) for i in range(n)])
        needed = {tuple(sorted(p)) for r in range(1, r_max + 1) for p in _pairs(n, r, boundary)}
        second = np.eye(n)
        for i, j in sorted(needed):
            second[i, j] = second[j, i] = expectation_pauli_string(source, [(i + 1, "Z"), (j + 1, "Z")])
    elif isinstance(source, Dataset):
        spins = 1.0 - 2.0 * np.asarray(source.configs, dtype=np.float64)
        mean = spins.mean(axis=0)
        second = spins.T @ spins / len(spins)
    else:
        probs = np.abs(np.asarray(source.amplitudes)) ** 2
        mean, second = _z_moments_dense(probs / probs.sum(), n)

    rs = np.arange(1, r_max + 1)
    values, counts = [], []
    for r in rs:
        pairs = _pairs(n, r, boundary)
        values.append(np.mean([second[i, j] - mean[i] * mean[j] for i, j in pairs]))
        counts.append(len(pairs))
    return CorrelationReport(rs, np.array(values), np.array(counts), boundary)


def fit_correlation_length(report: CorrelationReport) -> tuple[float, float, float]:
    """Least squares of log|G(r)| on r over r = 1..r_cut; returns (A, xi, rms residual).

    r_cut is the last distance before |G| first falls below 1e-6. Sets
    ``report.oscillatory`` when G changes sign more than once in the window.
    """
    g = np.asarray(report.values, dtype=np.float64)
    r = np.asarray(report.r, dtype=np.float64)
    ok = np.isfinite(g) & (np.abs(g) >= FIT_FLOOR)
    cut = int(np.argmin(ok)) if not ok.all() else len(g)
    if cut < 3:
        raise ValueError(f"need at least 3 usable correlation values, got {cut}")
    rw, gw = r[:cut], g[:cut]
    signs = np.sign(gw)
    report.oscillatory = bool(np.count_nonzero(signs[1:] != signs[:-1]) > 1)
    slope, intercept = np.polyfit(rw, np.log(np.abs(gw)), 1)
    resid = np.log(np.abs(gw)) - (slope * rw + intercept)
    report.fit_window = (int(rw[0]), int(rw[-1]))
    report.fit_residual = float(np.sqrt(np.mean(resid**2)))
    if slope >= 0:
        report.no_decay = True
        report.xi = float("inf")
        report.amplitude = float(np.exp(intercept))
        raise NoDecayError("no decay measurable: nonnegative slope of log|G(r)|")
    report.amplitude = float(np.exp(intercept))
    report.xi = float(-1.0 / slope)
    report.no_decay = False
    return report.amplitude, report.xi, report.fit_residual


def correlation_with_fit(source, boundary=None, r_max=None) -> CorrelationReport:
    """:func:`correlation_function` followed by a fit; fit failures leave flags/NaNs."""
    rep = correlation_function(source, boundary, r_max)
    try:
        fit_correlation_length(rep)
    except NoDecayError:
        pass
    except ValueError:
        rep.fit_window = ()
    return rep


@dataclass
class MetricsReport:
    fidelity: float | None
    entropy: float
    final_loss: float | None
    parameter_count: int
    tv_distance: dict = field(default_factory=dict)
    correlation_model: CorrelationReport | None = None
    correlation_reference: CorrelationReport | None = None
    correlation_data: CorrelationReport | None = None
    flags: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "fidelity": self.fidelity,
            "infidelity": None if self.fidelity is None else 1 - self.fidelity,
            "entropy": self.entropy,
            "final_loss": self.final_loss,
            "loss_minus_entropy": None if self.final_loss is None else self.final_loss - self.entropy,
            "parameter_count": self.parameter_count,
            "tv_distance": dict(self.tv_distance),
            "flags": dict(self.flags),
            "metadata": dict(self.metadata),
        }
        for name in ("correlation_model", "correlation_reference", "correlation_data"):
            rep = getattr(self, name)
            out[name] = None if rep is None else rep.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
