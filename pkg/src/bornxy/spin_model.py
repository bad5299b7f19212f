"""Transverse-field XY chain: Hamiltonian terms, matrix-free action, exact ground states.

Bit conventions used everywhere in the package:

* ``lambda_j = 0`` is spin up, the ``+1`` eigenstate of sigma^z;
* a configuration ``(lambda_1, ..., lambda_N)`` maps to the integer
  ``sum_j lambda_j * 2**(N - j)``, so site 1 is the most significant bit.

With this ordering a dense vector reshaped to ``(2,) * N`` has site ``j`` on
axis ``j - 1``, which is how the Hamiltonian is applied below.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .common import Boundary, ConvergenceError

DENSE_MAX_SITES = 12
LANCZOS_MAX_SITES = 20
DEGENERACY_TOL = 1e-10


@dataclass(frozen=True)
class ModelParameters:
    """Coefficients of H = -J sum (1+g)/4 XX + (1-g)/4 YY - h/2 sum Z."""

    coupling: float = 1.0
    gamma: float = 1.0
    field: float = 1.0
    n_sites: int = 13
    boundary: Boundary = Boundary.OPEN

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary.parse(self.boundary))
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise ValueError(f"chain length N must be an integer >= 2, got {self.n_sites}")
        object.__setattr__(self, "n_sites", int(self.n_sites))
        for name in ("coupling", "gamma", "field"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour bonds as 1-based site pairs."""
        n = self.n_sites
        pairs = [(i, i + 1) for i in range(1, n)]
        if self.boundary is Boundary.PERIODIC:
            pairs.append((n, 1))
        return pairs


class Pauli(str, Enum):
    I = "I"
    X = "X"
    Y = "Y"
    Z = "Z"

    @property
    def matrix(self) -> np.ndarray:
        return _PAULI_MATRICES[self]


_PAULI_MATRICES = {
    Pauli.I: np.eye(2, dtype=complex),
    Pauli.X: np.array([[0, 1], [1, 0]], dtype=complex),
    Pauli.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    Pauli.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}

# sigma_a sigma_b = phase * sigma_c
_PAULI_PRODUCT = {
    (Pauli.X, Pauli.Y): (1j, Pauli.Z),
    (Pauli.Y, Pauli.Z): (1j, Pauli.X),
    (Pauli.Z, Pauli.X): (1j, Pauli.Y),
    (Pauli.Y, Pauli.X): (-1j, Pauli.Z),
    (Pauli.Z, Pauli.Y): (-1j, Pauli.X),
    (Pauli.X, Pauli.Z): (-1j, Pauli.Y),
}


@dataclass(frozen=True)
class PauliOperator:
    kind: Pauli
    site: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Pauli(self.kind))

    @property
    def matrix(self) -> np.ndarray:
        return self.kind.matrix

    def compose(self, other: "PauliOperator") -> tuple[complex, "PauliOperator"]:
        """Product ``self @ other`` on the same site as (phase, operator)."""
        if self.site != other.site:
            raise ValueError("can only compose operators acting on the same site")
        a, b = self.kind, other.kind
        if a is Pauli.I:
            return 1.0 + 0j, other
        if b is Pauli.I:
            return 1.0 + 0j, self
        if a is b:
            return 1.0 + 0j, PauliOperator(Pauli.I, self.site)
        phase, kind = _PAULI_PRODUCT[(a, b)]
        return phase, PauliOperator(kind, self.site)


@dataclass(frozen=True)
class Term:
    weight: float
    ops: tuple[PauliOperator, ...]

    @property
    def label(self) -> str:
        return "".join(op.kind.value for op in self.ops)


def build_terms(params: ModelParameters) -> list[Term]:
    """Weighted Pauli terms of the Hamiltonian: XX and YY per bond, then Z per site."""
    j, g, h = params.coupling, params.gamma, params.field
    terms = []
    for a, b in params.bonds():
        w_xx = -j * (1 + g) / 4
        w_yy = -j * (1 - g) / 4
        if j != 0:
            terms.append(Term(w_xx, (PauliOperator(Pauli.X, a), PauliOperator(Pauli.X, b))))
            terms.append(Term(w_yy, (PauliOperator(Pauli.Y, a), PauliOperator(Pauli.Y, b))))
    for site in range(1, params.n_sites + 1):
        terms.append(Term(-h / 2, (PauliOperator(Pauli.Z, site),)))
    return terms


@dataclass
class DenseState:
    """Amplitudes over the 2**N computational basis states, in index order."""

    amplitudes: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes)
        if amps.ndim != 1 or amps.size < 2 or amps.size & (amps.size - 1):
            raise ValueError(f"amplitude vector length must be a power of two >= 2, got {amps.shape}")
        if not np.iscomplexobj(amps):
            amps = amps.astype(np.float64, copy=False)
        self.amplitudes = amps

    @property
    def n_sites(self) -> int:
        return int(self.amplitudes.size).bit_length() - 1

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "DenseState":
        return DenseState(self.amplitudes / np.sqrt(self.norm_squared()), dict(self.metadata))

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.amplitudes) ** 2
        return p / p.sum()


def _bond_coefficients(w_xx: float, w_yy: float) -> np.ndarray:
    # <flip(v)| w_xx XX + w_yy YY |v>; YY picks up -1 on parallel bits, +1 on antiparallel
    return np.array([[w_xx - w_yy, w_xx + w_yy], [w_xx + w_yy, w_xx - w_yy]])


def _diagonal(params: ModelParameters) -> np.ndarray:
    n = params.n_sites
    z = np.array([1.0, -1.0])
    diag = np.zeros((2,) * n)
    for axis in range(n):
        shape = [1] * n
        shape[axis] = 2
        diag = diag + (-params.field / 2) * z.reshape(shape)
    return diag


def hamiltonian_operator(params: ModelParameters) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``matvec(v)`` computing H v for v of shape (2**N,) or (2**N, k)."""
    n = params.n_sites
    diag = _diagonal(params)
    w_xx = -params.coupling * (1 + params.gamma) / 4
    w_yy = -params.coupling * (1 - params.gamma) / 4
    bond_terms = []
    if params.coupling != 0:
        coeff = _bond_coefficients(w_xx, w_yy)
        for a, b in params.bonds():
            ax, bx = a - 1, b - 1
            shape = [1] * n
            shape[ax] = shape[bx] = 2
            c = coeff if ax < bx else coeff.T
            bond_terms.append(((ax, bx), c.reshape(shape)))

    def matvec(v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        batch = v.shape[1:]
        if v.shape[0] != 2**n:
            raise ValueError(f"state length {v.shape[0]} does not match 2**{n}")
        t = v.reshape((2,) * n + batch)
        pad = (1,) * len(batch)
        out = diag.reshape(diag.shape + pad) * t
        for axes, c in bond_terms:
            out = out + c.reshape(c.shape + pad) * np.flip(t, axis=axes)
        return out.reshape(v.shape)

    return matvec


def apply_hamiltonian(params: ModelParameters, state: DenseState) -> DenseState:
    if state.amplitudes.size != 2**params.n_sites:
        raise ValueError(
            f"state has {state.amplitudes.size} amplitudes, expected 2**{params.n_sites}"
        )
    return DenseState(hamiltonian_operator(params)(state.amplitudes))


def hamiltonian_matrix(params: ModelParameters) -> np.ndarray:
    if params.n_sites > DENSE_MAX_SITES:
        raise ValueError(f"dense Hamiltonian limited to N <= {DENSE_MAX_SITES}, got {params.n_sites}")
    dim = 2**params.n_sites
    return hamiltonian_operator(params)(np.eye(dim))


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(vec)))
    return -vec if vec[k] < 0 else vec


def ground_state_dense(params: ModelParameters) -> tuple[float, DenseState]:
    """Lowest eigenpair by full diagonalisation (N <= 12)."""
    if params.n_sites > DENSE_MAX_SITES:
        raise ValueError(f"dense diagonalisation limited to N <= {DENSE_MAX_SITES}, got {params.n_sites}")
    evals, evecs = np.linalg.eigh(hamiltonian_matrix(params))
    vec = _fix_sign(evecs[:, 0])
    gap = float(evals[1] - evals[0])
    meta = {
        "method": "dense",
        "energy": float(evals[0]),
        "gap": gap,
        "degenerate": bool(gap < DEGENERACY_TOL),
    }
    return float(evals[0]), DenseState(vec, meta)


def ground_state_lanczos(
    params: ModelParameters,
    seed: int = 0,
    max_iter: int = 500,
    tol: float = 1e-12,
    v0: np.ndarray | None = None,
) -> tuple[float, DenseState]:
    """Lowest eigenpair by Lanczos with full reorthogonalisation (N <= 20).

    Stops once the lowest Ritz value moves by less than ``tol`` between
    iterations. Raises ``ConvergenceError`` after ``max_iter`` iterations.
    """
    n = params.n_sites
    if n > LANCZOS_MAX_SITES:
        raise ValueError(f"Lanczos limited to N <= {LANCZOS_MAX_SITES}, got {n}")
    dim = 2**n
    matvec = hamiltonian_operator(params)
    if v0 is None:
        v0 = np.random.default_rng(seed).standard_normal(dim)
    v = np.asarray(v0, dtype=np.float64) / np.linalg.norm(v0)

    max_iter = min(max_iter, dim)
    basis = np.empty((max_iter, dim))
    alphas: list[float] = []
    betas: list[float] = []
    prev = np.inf
    converged = False
    for it in range(max_iter):
        basis[it] = v
        w = matvec(v)
        alpha = float(v @ w)
        alphas.append(alpha)
        # two passes of classical Gram-Schmidt against the whole Krylov basis
        for _ in range(2):
            w -= basis[: it + 1].T @ (basis[: it + 1] @ w)
        beta = float(np.linalg.norm(w))
        theta = eigh_tridiagonal(np.array(alphas), np.array(betas), eigvals_only=True,
                                 select="i", select_range=(0, 0))[0]
        if abs(theta - prev) < tol or beta < 1e-14 or it + 1 == dim:
            converged = True
            break
        prev = theta
        betas.append(beta)
        v = w / beta

    k = len(alphas)
    off = np.array(betas[: k - 1])
    evals, evecs = eigh_tridiagonal(np.array(alphas), off)
    y = evecs[:, 0]
    residual = abs(beta * y[-1])
    if not converged:
        raise ConvergenceError(f"Lanczos did not converge in {max_iter} iterations", residual)
    vec = basis[:k].T @ y
    vec = _fix_sign(vec / np.linalg.norm(vec))
    gap = float(evals[1] - evals[0]) if k > 1 else float("nan")
    meta = {
        "method": "lanczos",
        "energy": float(evals[0]),
        "gap": gap,
        "degenerate": bool(gap < DEGENERACY_TOL),
        "iterations": k,
        "residual": float(residual),
    }
    return float(evals[0]), DenseState(vec, meta)


def ground_state(params: ModelParameters, seed: int = 0) -> tuple[float, DenseState]:
    """Dense diagonalisation for N <= 12, Lanczos above."""
    if params.n_sites <= DENSE_MAX_SITES:
        return ground_state_dense(params)
    return ground_state_lanczos(params, seed=seed)
