"""Experiment configuration: presets, flat ``key = value`` files, and CLI overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .common import Basis, Boundary
from .mps import INIT_NOISE_KINDS
from .spin_model import LANCZOS_MAX_SITES, ModelParameters
from .training import TrainConfig

# (gamma, h) points of the phase diagram studied at J = 1
PRESETS = {
    "critical": (1.0, 1.0),
    "ordered": (1.5, 0.5),
    "disordered": (2.0, 2.0),
    "oscillatory": (0.5, 0.5),
}


@dataclass
class ExperimentConfig:
    preset: str = "critical"
    gamma: float | None = None
    field: float | None = None
    coupling: float = 1.0
    n_sites: int = 13
    data_boundary: Boundary = Boundary.OPEN
    model_boundary: Boundary = Boundary.OPEN
    bond_dim: int = 2
    init_noise: float = 0.1
    init_kind: str = "positive"
    samples: int = 10000
    basis: Basis = Basis.Z
    epochs: int = 20
    batch_size: int = 200
    # decays geometrically to final_learning_rate; None keeps the rate constant
    learning_rate: float = 0.02
    final_learning_rate: float | None = 0.001
    seed_state: int = 0
    seed_sample: int = 1
    seed_init: int = 2
    seed_shuffle: int = 3
    out: str = "out"
    eval_bases: tuple[str, ...] = ("z", "x", "y")
    threads: int = 1
    repeats: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.preset not in PRESETS and self.preset != "custom":
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)} or 'custom'")
        g, h = PRESETS.get(self.preset, (None, None))
        if self.gamma is None:
            self.gamma = g
        if self.field is None:
            self.field = h
        if self.gamma is None or self.field is None:
            raise ValueError("preset 'custom' needs both gamma and h")
        self.data_boundary = Boundary.parse(self.data_boundary)
        self.model_boundary = Boundary.parse(self.model_boundary)
        self.basis = Basis.parse(self.basis)
        if isinstance(self.eval_bases, str):
            self.eval_bases = tuple(b.strip() for b in self.eval_bases.split(",") if b.strip())
        self.eval_bases = tuple(Basis.parse(b).value for b in self.eval_bases)
        if "z" not in self.eval_bases:
            self.eval_bases = ("z",) + self.eval_bases
        if self.n_sites < 2:
            raise ValueError(f"n_sites must be >= 2 (chain length N), got {self.n_sites}")
        if self.n_sites > LANCZOS_MAX_SITES:
            raise ValueError(f"n_sites must be <= {LANCZOS_MAX_SITES}, got {self.n_sites}")
        if self.bond_dim < 1:
            raise ValueError(f"bond_dim must be >= 1, got {self.bond_dim}")
        if self.init_kind not in INIT_NOISE_KINDS:
            raise ValueError(f"init_kind must be one of {INIT_NOISE_KINDS}, got {self.init_kind!r}")
        if self.init_noise < 0:
            raise ValueError(f"init_noise must be >= 0, got {self.init_noise}")
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if self.threads < 1 or self.repeats < 1:
            raise ValueError("threads and repeats must be >= 1")
        self.train_config()  # validates the training fields

    def model_parameters(self, boundary=None) -> ModelParameters:
        return ModelParameters(self.coupling, self.gamma, self.field, self.n_sites,
                               boundary or self.data_boundary)

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, epochs=self.epochs,
                           learning_rate=self.learning_rate, final_learning_rate=self.final_learning_rate,
                           shuffle_seed=self.seed_shuffle)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (Boundary, Basis)):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def to_text(self) -> str:
        lines = ["# bornxy experiment config"]
        for k, v in self.to_dict().items():
            if isinstance(v, list):
                v = ",".join(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


_ALIASES = {"h": "field", "sites": "n_sites", "J": "coupling"}


def _convert(name: str, raw: str):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    t = types[name]
    raw = raw.strip()
    if t in ("int",):
        return int(raw)
    if t in ("float",):
        return float(raw)
    if t == "float | None":
        return None if raw.lower() in ("", "none") else float(raw)
    if t == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    return raw


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key.replace("-", "_"))
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: bad value for {key}: {exc}") from None
    return values


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)
