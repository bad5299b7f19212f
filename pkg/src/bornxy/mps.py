"""Tensor-train (matrix product state) wavefunctions with open or periodic bonds.

Every site tensor is stored with index order (left bond, physical, right bond).
An open train keeps unit-dimension bonds at its two ends, so internally both
architectures are rings: the open chain is a ring whose closing bond has
dimension 1. All contractions below are written once for that ring form.

Contraction results are returned as :class:`LogScalar` (log-magnitude plus a
sign or complex phase) because products of many unnormalised tensors leave
the double-precision range long before N = 19.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .common import Basis, Boundary, NumericalError
from .spin_model import DenseState, Pauli, PauliOperator

PHYS_DIM = 2
TO_DENSE_MAX_SITES = 14
INIT_NOISE = 0.01
INIT_NOISE_KINDS = ("gaussian", "positive")


class LogScalar(NamedTuple):
    """``phase * exp(log_abs)``; ``phase`` is +-1 for real data, a unit complex otherwise."""

    log_abs: float
    phase: complex | float

    @property
    def value(self):
        # only meaningful while |log_abs| < ~300
        if self.log_abs == -np.inf:
            return 0.0 * self.phase
        return self.phase * np.exp(self.log_abs)


@dataclass(eq=False)
class TensorTrain:
    tensors: list[np.ndarray]
    boundary: Boundary
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.boundary = Boundary.parse(self.boundary)
        self.tensors = [np.asarray(t) for t in self.tensors]
        self._validate()

    def _validate(self):
        ts = self.tensors
        n = len(ts)
        if n < 2:
            raise ValueError(f"a tensor train needs at least 2 sites, got {n}")
        for k, t in enumerate(ts):
            if t.ndim != 3 or t.shape[1] != PHYS_DIM:
                raise ValueError(f"site {k + 1}: expected (left, {PHYS_DIM}, right) tensor, got {t.shape}")
            if not np.all(np.isfinite(t)):
                raise ValueError(f"site {k + 1}: non-finite entries")
        for k in range(n):
            if ts[k].shape[2] != ts[(k + 1) % n].shape[0]:
                raise ValueError(f"bond mismatch between sites {k + 1} and {(k + 1) % n + 1}")
        dims = {t.shape[0] for t in ts[1:]} | {t.shape[2] for t in ts[:-1]}
        if len(dims) != 1:
            raise ValueError(f"all interior bonds must share one dimension, got {sorted(dims)}")
        closing = ts[0].shape[0]
        if self.boundary is Boundary.OPEN and closing != 1:
            raise ValueError("open trains must have unit edge bonds")
        if self.boundary is Boundary.PERIODIC and closing != next(iter(dims)):
            raise ValueError("periodic trains need the closing bond equal to the interior bond")

    @classmethod
    def from_site_tensors(cls, tensors: Sequence[np.ndarray], boundary) -> "TensorTrain":
        """Build from the external shapes: open edges as (d, D) and (D, d)."""
        boundary = Boundary.parse(boundary)
        ts = [np.asarray(t) for t in tensors]
        if boundary is Boundary.OPEN:
            ts[0] = ts[0].reshape((1,) + ts[0].shape)
            ts[-1] = ts[-1].reshape(ts[-1].shape + (1,))
        return cls(ts, boundary)

    def site_tensor(self, k: int) -> np.ndarray:
        """Tensor of 0-based site ``k`` in the external shape convention."""
        t = self.tensors[k]
        if self.boundary is Boundary.OPEN:
            if k == 0:
                t = t[0]
            if k == self.n_sites - 1:
                t = t[..., 0]
        return t

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dim(self) -> int:
        return self.tensors[0].shape[2]

    @property
    def phys_dim(self) -> int:
        return PHYS_DIM

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(t) for t in self.tensors)

    def set_tensors(self, tensors: Sequence[np.ndarray]):
        """Replace all tensors in place; bumps ``version`` so caches go stale."""
        old = self.tensors
        self.tensors = [np.asarray(t) for t in tensors]
        try:
            self._validate()
        except ValueError:
            self.tensors = old
            raise
        self.version += 1

    def copy(self) -> "TensorTrain":
        return TensorTrain([t.copy() for t in self.tensors], self.boundary)

    def scaled(self, factor: float) -> "TensorTrain":
        """Every tensor multiplied by ``factor`` (amplitudes scale by factor**N)."""
        return TensorTrain([t * factor for t in self.tensors], self.boundary)


@dataclass
class EvaluationCache:
    """Right doubled-chain environments of a train, tied to ``version``.

    ``right_envs[k]`` has shape (r, r', p, q): sites k..N-1 contracted, with
    (r, r') the open left bond of site k and (p, q) the closing bond, for ket
    and bra respectively. ``right_logs[k]`` is its log scale factor.
    """

    log_norm_sq: float
    right_envs: list[np.ndarray]
    right_logs: np.ndarray
    version: int

    def valid_for(self, tt: TensorTrain) -> bool:
        return self.version == tt.version


def parameter_count(n_sites: int, bond_dim: int, boundary) -> int:
    boundary = Boundary.parse(boundary)
    if n_sites < 2 or bond_dim < 1:
        raise ValueError("need N >= 2 and D >= 1")
    d, D = PHYS_DIM, bond_dim
    if boundary is Boundary.OPEN:
        return 2 * (d * D) + (n_sites - 2) * (d * D * D)
    return n_sites * d * D * D


def _bond_shapes(n_sites: int, bond_dim: int, boundary: Boundary) -> list[tuple[int, int]]:
    shapes = [(bond_dim, bond_dim)] * n_sites
    if boundary is Boundary.OPEN:
        shapes[0] = (1, bond_dim)
        shapes[-1] = (bond_dim, 1)
    return shapes


def init_tensor_train(n_sites: int, bond_dim: int, boundary, seed: int = 0,
                      noise: float = INIT_NOISE, noise_kind: str = "gaussian") -> TensorTrain:
    """Identity bond slices for every physical value plus i.i.d. noise.

    Open edges take the first row / column of the identity. The noiseless
    train is the uniform superposition (every amplitude 1, or D for periodic).
    ``noise_kind="gaussian"`` adds ``noise`` * N(0, 1); ``"positive"`` adds
    ``noise`` * U[0, 1), which keeps every amplitude strictly positive and
    couples all bond channels from the first step.
    """
    boundary = Boundary.parse(boundary)
    if n_sites < 2 or bond_dim < 1:
        raise ValueError("need N >= 2 and D >= 1")
    if noise_kind not in INIT_NOISE_KINDS:
        raise ValueError(f"noise_kind must be one of {INIT_NOISE_KINDS}, got {noise_kind!r}")
    rng = np.random.default_rng(seed)
    tensors = []
    for dl, dr in _bond_shapes(n_sites, bond_dim, boundary):
        eye = np.eye(dl, dr)
        t = np.repeat(eye[:, None, :], PHYS_DIM, axis=1)
        if noise:
            draw = rng.standard_normal if noise_kind == "gaussian" else rng.random
            t = t + noise * draw(t.shape)
        tensors.append(t)
    return TensorTrain(tensors, boundary)


def _check_config(tt: TensorTrain, configs: np.ndarray) -> np.ndarray:
    configs = np.asarray(configs)
    if configs.ndim == 1:
        configs = configs[None, :]
    if configs.shape[1] != tt.n_sites:
        raise ValueError(f"configuration length {configs.shape[1]} does not match N = {tt.n_sites}")
    if configs.size and (configs.min() < 0 or configs.max() >= PHYS_DIM):
        raise ValueError("configuration entries must be 0 or 1")
    return configs.astype(np.intp, copy=False)


def _normalise_rows(mats: np.ndarray, logs: np.ndarray) -> None:
    """Scale each batch entry of ``mats`` to unit max-abs in place, accumulating logs."""
    scale = np.abs(mats).reshape(len(mats), -1).max(axis=1)
    nz = scale > 0
    mats[nz] /= scale[nz].reshape((-1,) + (1,) * (mats.ndim - 1))
    logs[nz] += np.log(scale[nz])
    logs[~nz] = -np.inf


def _prefix_products(tt: TensorTrain, configs: np.ndarray):
    """Per-sample prefix products P_k = A_1^{v_1} ... A_k^{v_k}, shape (B, D0, D_k).

    Returns lists over k = 0..N (k = 0 is the identity) of rescaled matrices
    and their log scales.
    """
    b = len(configs)
    d0 = tt.tensors[0].shape[0]
    dtype = np.result_type(*tt.tensors)
    cur = np.broadcast_to(np.eye(d0, dtype=dtype), (b, d0, d0)).copy()
    logs = np.zeros(b)
    mats, scales = [cur], [logs.copy()]
    for k, t in enumerate(tt.tensors):
        sl = np.moveaxis(t[:, configs[:, k], :], 1, 0)  # (B, Dl, Dr)
        cur = cur @ sl
        _normalise_rows(cur, logs)
        mats.append(cur)
        scales.append(logs.copy())
    return mats, scales


def _suffix_products(tt: TensorTrain, configs: np.ndarray):
    """Per-sample suffix products S_k = A_k^{v_k} ... A_N^{v_N}, shape (B, D_k, D0).

    Lists over k = 0..N (k = N is the identity).
    """
    b = len(configs)
    n = tt.n_sites
    d0 = tt.tensors[0].shape[0]
    dtype = np.result_type(*tt.tensors)
    cur = np.broadcast_to(np.eye(d0, dtype=dtype), (b, d0, d0)).copy()
    logs = np.zeros(b)
    mats = [None] * (n + 1)
    scales = [None] * (n + 1)
    mats[n], scales[n] = cur, logs.copy()
    for k in range(n - 1, -1, -1):
        sl = np.moveaxis(tt.tensors[k][:, configs[:, k], :], 1, 0)
        cur = sl @ cur
        _normalise_rows(cur, logs)
        mats[k], scales[k] = cur, logs.copy()
    return mats, scales


def _to_log_phase(values: np.ndarray, logs: np.ndarray):
    mag = np.abs(values)
    with np.errstate(divide="ignore"):
        log_abs = np.where(mag > 0, np.log(np.where(mag > 0, mag, 1.0)) + logs, -np.inf)
    phase = np.where(mag > 0, values / np.where(mag > 0, mag, 1.0), 0)
    return log_abs, phase


def log_amplitudes(tt: TensorTrain, configs) -> tuple[np.ndarray, np.ndarray]:
    """Batched amplitudes as (log|psi|, phase) arrays. ``configs`` has shape (B, N)."""
    configs = _check_config(tt, configs)
    b = len(configs)
    d0 = tt.tensors[0].shape[0]
    dtype = np.result_type(*tt.tensors)
    cur = np.broadcast_to(np.eye(d0, dtype=dtype), (b, d0, d0)).copy()
    logs = np.zeros(b)
    for k, t in enumerate(tt.tensors):
        cur = cur @ np.moveaxis(t[:, configs[:, k], :], 1, 0)
        _normalise_rows(cur, logs)
    return _to_log_phase(np.trace(cur, axis1=1, axis2=2), logs)


def amplitude(tt: TensorTrain, config) -> LogScalar:
    log_abs, phase = log_amplitudes(tt, np.asarray(config)[None, :])
    ph = phase[0]
    return LogScalar(float(log_abs[0]), complex(ph) if np.iscomplexobj(ph) else float(ph))


def _doubled_start(d0a: int, d0b: int) -> np.ndarray:
    """Identity environment (p, q, l, l') for an empty prefix."""
    env = np.einsum("pl,qm->pqlm", np.eye(d0a), np.eye(d0b))
    return env


def _env_step_left(env: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # env (p,q,l,m), conj(a) (l,s,r), b (m,s,n) -> (p,q,r,n)
    tmp = np.tensordot(env, a.conj(), axes=([2], [0]))  # p,q,m,s,r
    return np.tensordot(tmp, b, axes=([2, 3], [0, 1]))  # p,q,r,n


def _env_step_right(env: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # conj(a) (l,s,r), b (m,s,n), env (r,n,p,q) -> (l,m,p,q)
    tmp = np.tensordot(b, env, axes=([2], [1]))  # m,s,r,p,q
    return np.tensordot(a.conj(), tmp, axes=([1, 2], [1, 2]))  # l,m,p,q


def _rescale(env: np.ndarray) -> tuple[np.ndarray, float]:
    m = float(np.abs(env).max())
    if m == 0:
        return env, -np.inf
    return env / m, np.log(m)


def _left_envs(a: Sequence[np.ndarray], b: Sequence[np.ndarray]):
    """Doubled-chain prefix environments L_k (sites 0..k-1), k = 0..N."""
    env = _doubled_start(a[0].shape[0], b[0].shape[0])
    log = 0.0
    envs, logs = [env], [log]
    for ta, tb in zip(a, b):
        env, s = _rescale(_env_step_left(env, ta, tb))
        log += s
        envs.append(env)
        logs.append(log)
    return envs, np.array(logs)


def _right_envs(a: Sequence[np.ndarray], b: Sequence[np.ndarray]):
    """Doubled-chain suffix environments R_k (sites k..N-1), k = 0..N."""
    n = len(a)
    d0a, d0b = a[0].shape[0], b[0].shape[0]
    env = np.einsum("rp,nq->rnpq", np.eye(d0a), np.eye(d0b))
    log = 0.0
    envs = [None] * (n + 1)
    logs = np.zeros(n + 1)
    envs[n] = env
    for k in range(n - 1, -1, -1):
        env, s = _rescale(_env_step_right(env, a[k], b[k]))
        log += s
        envs[k], logs[k] = env, log
    return envs, logs


def _close_ring(env: np.ndarray) -> complex:
    # env (p, q, p', q') with the closing bond traced: p = p', q = q'
    return np.einsum("pqpq->", env)


def _overlap(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> LogScalar:
    if len(a) != len(b):
        raise ValueError(f"site count mismatch: {len(a)} vs {len(b)}")
    for k, (ta, tb) in enumerate(zip(a, b)):
        if ta.shape[1] != tb.shape[1]:
            raise ValueError(f"physical dimension mismatch at site {k + 1}")
    env = _doubled_start(a[0].shape[0], b[0].shape[0])
    log = 0.0
    for ta, tb in zip(a, b):
        env, s = _rescale(_env_step_left(env, ta, tb))
        log += s
        if s == -np.inf:
            return LogScalar(-np.inf, 0.0)
    val = _close_ring(env)
    mag = abs(val)
    if mag == 0:
        return LogScalar(-np.inf, 0.0)
    phase = val / mag
    if np.isrealobj(val) or abs(np.imag(phase)) == 0:
        phase = float(np.real(phase))
    else:
        phase = complex(phase)
    return LogScalar(log + float(np.log(mag)), phase)


def norm_squared(tt: TensorTrain) -> LogScalar:
    z = _overlap(tt.tensors, tt.tensors)
    return LogScalar(z.log_abs, 1.0 if z.log_abs > -np.inf else 0.0)


def inner_product(a: TensorTrain, b: TensorTrain) -> LogScalar:
    """<a|b> with ``a`` conjugated. Open and periodic trains may be mixed."""
    return _overlap(a.tensors, b.tensors)


def build_cache(tt: TensorTrain) -> EvaluationCache:
    envs, logs = _right_envs(tt.tensors, tt.tensors)
    z = _close_ring(envs[0])
    if np.real(z) <= 0:
        raise NumericalError("tensor train has zero norm")
    return EvaluationCache(float(logs[0] + np.log(np.real(z))), envs, logs, tt.version)


def dense_amplitudes(tt: TensorTrain) -> tuple[np.ndarray, float]:
    """All 2**N amplitudes as ``(vector, log_scale)``; true amplitudes are vector * exp(log_scale).

    Not size-limited; use with care past N ~ 20.
    """
    first = tt.tensors[0]
    cur = first  # (D0, 2**k, D)
    log = 0.0
    for t in tt.tensors[1:]:
        d0, m, dl = cur.shape
        cur = np.tensordot(cur, t, axes=([2], [0])).reshape(d0, m * PHYS_DIM, t.shape[2])
        cur, s = _rescale(cur)
        log += s
    vec = np.einsum("pmp->m", cur)
    vec, s = _rescale(vec)
    return vec, log + s


def to_dense(tt: TensorTrain) -> DenseState:
    """Unnormalised dense amplitudes (N <= 14)."""
    if tt.n_sites > TO_DENSE_MAX_SITES:
        raise ValueError(f"to_dense limited to N <= {TO_DENSE_MAX_SITES}, got {tt.n_sites}")
    vec, log = dense_amplitudes(tt)
    return DenseState(vec * np.exp(log))


def from_dense(state: DenseState, bond_dim: int | None = None) -> TensorTrain:
    """Exact open train for a dense vector by successive SVDs (optionally truncated)."""
    n = state.n_sites
    rest = np.asarray(state.amplitudes).reshape(1, -1)
    tensors = []
    for _ in range(n - 1):
        dl = rest.shape[0]
        rest = rest.reshape(dl * PHYS_DIM, -1)
        u, s, vh = np.linalg.svd(rest, full_matrices=False)
        keep = int(np.sum(s > 1e-14 * s[0])) or 1
        if bond_dim is not None:
            keep = min(keep, bond_dim)
        tensors.append(u[:, :keep].reshape(dl, PHYS_DIM, keep))
        rest = s[:keep, None] * vh[:keep]
    tensors.append(rest.reshape(rest.shape[0], PHYS_DIM, 1))
    # pad to a uniform bond dimension
    dmax = max(t.shape[2] for t in tensors[:-1])
    padded = []
    for k, t in enumerate(tensors):
        dl = 1 if k == 0 else dmax
        dr = 1 if k == n - 1 else dmax
        p = np.zeros((dl, PHYS_DIM, dr), dtype=t.dtype)
        p[: t.shape[0], :, : t.shape[2]] = t
        padded.append(p)
    return TensorTrain(padded, Boundary.OPEN)


def _as_operators(ops: Iterable) -> list[tuple[int, np.ndarray]]:
    out = []
    for op in ops:
        if isinstance(op, PauliOperator):
            out.append((op.site, op.matrix))
        else:
            site, kind = op
            if isinstance(kind, PauliOperator):
                kind = kind.kind
            out.append((int(site), Pauli(kind).matrix))
    return out


def apply_local_operators(tt: TensorTrain, ops: Iterable) -> TensorTrain:
    """Train for O|psi> where O is a product of single-site 2x2 operators (1-based sites)."""
    tensors = list(tt.tensors)
    seen = set()
    for site, mat in _as_operators(ops):
        if not 1 <= site <= tt.n_sites:
            raise ValueError(f"site {site} out of range 1..{tt.n_sites}")
        if site in seen:
            raise ValueError(f"site {site} appears twice")
        seen.add(site)
        if np.all(mat.imag == 0):
            mat = mat.real
        tensors[site - 1] = np.einsum("ts,lsr->ltr", mat, tensors[site - 1])
    return TensorTrain(tensors, tt.boundary)


def expectation_pauli_string(tt: TensorTrain, ops: Iterable) -> float:
    """Exact <psi|O|psi> / <psi|psi> for a product of Pauli operators on distinct sites."""
    z = norm_squared(tt)
    if z.log_abs == -np.inf:
        raise NumericalError("tensor train has zero norm")
    num = inner_product(tt, apply_local_operators(tt, ops))
    if num.log_abs == -np.inf:
        return 0.0
    return float(np.real(num.phase) * np.exp(num.log_abs - z.log_abs))


SQRT_HALF = 1 / np.sqrt(2)
HADAMARD = SQRT_HALF * np.array([[1, 1], [1, -1]])
BASIS_ROTATIONS = {
    Basis.Z: np.eye(2),
    Basis.X: HADAMARD,
    Basis.Y: HADAMARD @ np.diag([1, -1j]),
}


def rotate_basis(tt: TensorTrain, basis) -> TensorTrain:
    """Train whose computational-basis amplitudes are those of ``tt`` measured in ``basis``."""
    u = BASIS_ROTATIONS[Basis.parse(basis)]
    tensors = [np.einsum("ts,lsr->ltr", u, t) for t in tt.tensors]
    if not np.iscomplexobj(u) and not tt.is_complex:
        tensors = [np.real(t) for t in tensors]
    return TensorTrain(tensors, tt.boundary)


def rotate_dense(state: DenseState, basis) -> DenseState:
    u = BASIS_ROTATIONS[Basis.parse(basis)]
    n = state.n_sites
    t = np.asarray(state.amplitudes).reshape((2,) * n)
    for axis in range(n):
        t = np.moveaxis(np.tensordot(u, t, axes=([1], [axis])), 0, axis)
    return DenseState(t.reshape(-1), dict(state.metadata))
