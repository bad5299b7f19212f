"""On-disk formats: state files, model files, dataset files and CSV traces.

State and model files are JSON containers whose numeric payloads are
base64-encoded little-endian arrays (``<f8`` or ``<c16``) in row-major order,
so a save -> load -> save cycle reproduces the bytes exactly.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .common import Basis, Boundary
from .mps import TensorTrain
from .sampler import Dataset
from .spin_model import DenseState

FORMAT_VERSION = 1
INDEX_ORDER = ["left", "physical", "right"]


class FormatError(ValueError):
    """A file could not be parsed as the expected container."""


def fmt(x) -> str:
    """Floats with 17 significant digits, everything else via str."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _encode(arr: np.ndarray) -> tuple[str, str]:
    if np.iscomplexobj(arr):
        dtype = "<c16"
    else:
        dtype = "<f8"
    raw = np.ascontiguousarray(arr, dtype=dtype).tobytes(order="C")
    return dtype, base64.b64encode(raw).decode("ascii")


def _decode(data: str, dtype: str, shape) -> np.ndarray:
    if dtype not in ("<f8", "<c16"):
        raise FormatError(f"unsupported dtype {dtype!r}")
    raw = base64.b64decode(data.encode("ascii"))
    arr = np.frombuffer(raw, dtype=dtype)
    if arr.size != int(np.prod(shape)):
        raise FormatError(f"payload has {arr.size} values, shape {shape} needs {int(np.prod(shape))}")
    native = np.complex128 if dtype == "<c16" else np.float64
    return arr.reshape(shape).astype(native, copy=True)


def _dump(obj: dict) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _load_json(path, kind: str) -> dict:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a valid {kind} file ({exc})") from None
    if obj.get("format") != f"bornxy-{kind}":
        raise FormatError(f"{path}: expected format 'bornxy-{kind}', got {obj.get('format')!r}")
    if obj.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported {kind} file version {obj.get('version')!r}")
    return obj


def state_to_json(state: DenseState, boundary, metadata: dict | None = None) -> str:
    dtype, data = _encode(state.amplitudes)
    return _dump({
        "format": "bornxy-state",
        "version": FORMAT_VERSION,
        "N": state.n_sites,
        "boundary": Boundary.parse(boundary).value,
        "basis": "z",
        "dtype": dtype,
        "amplitudes": data,
        "metadata": metadata if metadata is not None else dict(state.metadata),
    })


def save_state(path, state: DenseState, boundary, metadata: dict | None = None) -> None:
    Path(path).write_text(state_to_json(state, boundary, metadata))


def load_state(path) -> tuple[DenseState, Boundary]:
    obj = _load_json(path, "state")
    try:
        n = int(obj["N"])
        amps = _decode(obj["amplitudes"], obj["dtype"], (2**n,))
        boundary = Boundary.parse(obj["boundary"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed state file ({exc})") from None
    return DenseState(amps, dict(obj.get("metadata", {}))), boundary


def model_to_json(tt: TensorTrain, metadata: dict | None = None) -> str:
    tensors = []
    for k in range(tt.n_sites):
        t = tt.site_tensor(k)
        dtype, data = _encode(t)
        tensors.append({"shape": list(t.shape), "dtype": dtype, "data": data})
    return _dump({
        "format": "bornxy-model",
        "version": FORMAT_VERSION,
        "boundary": tt.boundary.value,
        "N": tt.n_sites,
        "d": tt.phys_dim,
        "D": tt.bond_dim,
        "scalar_kind": "complex" if tt.is_complex else "real",
        "index_order": INDEX_ORDER,
        "tensors": tensors,
        "metadata": metadata or {},
    })


def save_model(path, tt: TensorTrain, metadata: dict | None = None) -> None:
    Path(path).write_text(model_to_json(tt, metadata))


def load_model(path) -> tuple[TensorTrain, dict]:
    obj = _load_json(path, "model")
    try:
        arrays = [_decode(t["data"], t["dtype"], tuple(t["shape"])) for t in obj["tensors"]]
        tt = TensorTrain.from_site_tensors(arrays, obj["boundary"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed model file ({exc})") from None
    if tt.n_sites != obj.get("N") or tt.bond_dim != obj.get("D"):
        raise FormatError(f"{path}: header N/D disagree with tensor shapes")
    return tt, dict(obj.get("metadata", {}))


def dataset_to_text(data: Dataset, extra_header: dict | None = None) -> str:
    lines = [
        f"# n_sites={data.n_sites} boundary={data.boundary.value} basis={data.basis.value} "
        f"seed={int(data.seed)} count={data.count}"
    ]
    if data.source:
        lines.append(f"# source={data.source}")
    if extra_header:
        lines.append("# config=" + json.dumps(extra_header, sort_keys=True))
    digits = (np.asarray(data.configs, dtype=np.uint8) + ord("0")).view("S1")
    body = digits.reshape(data.count, data.n_sites)
    lines.extend(row.tobytes().decode("ascii") for row in body)
    return "\n".join(lines) + "\n"


def save_dataset(path, data: Dataset, extra_header: dict | None = None) -> None:
    Path(path).write_text(dataset_to_text(data, extra_header))


def _parse_header(line: str) -> dict:
    fields = {}
    for tok in line.lstrip("#").split():
        if "=" not in tok:
            raise FormatError(f"bad header token {tok!r}")
        k, v = tok.split("=", 1)
        fields[k] = v
    return fields


def load_dataset(path) -> Dataset:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FormatError(f"{path}: missing dataset header line")
    head = _parse_header(lines[0])
    try:
        n = int(head["n_sites"])
        count = int(head["count"])
        boundary = Boundary.parse(head["boundary"])
        basis = Basis.parse(head["basis"])
        seed = int(head["seed"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad dataset header ({exc})") from None
    source = ""
    extra = {}
    rows = []
    for ln in lines[1:]:
        if ln.startswith("# source="):
            source = ln[len("# source="):]
        elif ln.startswith("# config="):
            extra = json.loads(ln[len("# config="):])
        elif ln.startswith("#") or not ln.strip():
            continue
        else:
            rows.append(ln.strip())
    if len(rows) != count:
        raise FormatError(f"{path}: header count={count} but {len(rows)} configurations")
    if any(len(r) != n or set(r) - {"0", "1"} for r in rows):
        raise FormatError(f"{path}: configurations must be {n} characters of 0/1")
    if rows:
        configs = (np.frombuffer("".join(rows).encode("ascii"), dtype=np.uint8) - ord("0")).reshape(count, n)
    else:
        configs = np.zeros((0, n), dtype=np.uint8)
    return Dataset(configs, n, boundary, basis, seed, source, extra)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], comment: str | None = None) -> None:
    out = []
    if comment:
        out.append("# " + comment)
    out.append(",".join(header))
    for row in rows:
        out.append(",".join(fmt(x) for x in row))
    Path(path).write_text("\n".join(out) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]
