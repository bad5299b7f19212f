"""Command-line experiment driver.

Subcommands: generate, sample, train, evaluate, table1, report.
Exit codes: 0 ok, 2 usage/config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    MetricsReport,
    correlation_with_fit,
    exact_distribution,
    fidelity,
    shannon_entropy,
    tv_distance,
)
from .common import Basis, Boundary, NumericalError
from .config import PRESETS, ExperimentConfig, load_config
from .io import (
    FormatError,
    load_dataset,
    load_model,
    load_state,
    save_dataset,
    save_model,
    save_state,
    write_csv,
)
from .mps import TensorTrain, init_tensor_train, parameter_count
from .sampler import Dataset, empirical_distribution, sample_dense
from .spin_model import ground_state
from .training import dataset_nll, train

SHORTFALL_NATS = 0.1
TABLE1_BOND_DIMS = (2, 3, 4, 6, 8, 10)
TABLE1_PAIRINGS = (("open", "open"), ("open", "periodic"), ("periodic", "open"), ("periodic", "periodic"))


class UsageError(ValueError):
    pass


def _echo(cfg: ExperimentConfig) -> dict:
    return {"artifact": "bornxy", "version": __version__, "config": cfg.to_dict()}


def _comment(cfg: ExperimentConfig) -> str:
    return f"bornxy {__version__} config=" + json.dumps(cfg.to_dict(), sort_keys=True)


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    return out


def _say(msg: str) -> None:
    print(msg, flush=True)


# -- pipeline steps -----------------------------------------------------------

def cmd_generate(cfg: ExperimentConfig) -> Path:
    out = _outdir(cfg)
    params = cfg.model_parameters()
    energy, state = ground_state(params, seed=cfg.seed_state)
    meta = dict(state.metadata)
    meta.update(_echo(cfg))
    meta["hamiltonian"] = {"J": params.coupling, "gamma": params.gamma, "h": params.field,
                           "N": params.n_sites, "boundary": params.boundary.value}
    path = out / "state.json"
    save_state(path, state, params.boundary, meta)
    _write_json(out / "generate.json", meta)
    _say(f"generate: E0 = {energy:.12f}  gap = {meta['gap']:.3e}  degenerate = {meta['degenerate']}  -> {path}")
    return path


def cmd_sample(cfg: ExperimentConfig, state_path=None) -> Path:
    out = _outdir(cfg)
    state, boundary = load_state(state_path or out / "state.json")
    state = state.normalized()
    data = sample_dense(state, cfg.samples, cfg.seed_sample, boundary, cfg.basis,
                        source=f"ground state {cfg.preset} gamma={cfg.gamma} h={cfg.field}")
    path = out / ("data.txt" if cfg.basis is Basis.Z else f"data_{cfg.basis.value}.txt")
    save_dataset(path, data, _echo(cfg))
    _say(f"sample: {data.count} configurations ({cfg.basis.value} basis), S(T) = {shannon_entropy(data):.6f} -> {path}")
    return path


def _train_one(cfg: ExperimentConfig, data: Dataset, reference=None, log=None):
    if data.n_sites != cfg.n_sites:
        raise UsageError(f"dataset has N = {data.n_sites} but config n_sites = {cfg.n_sites}")
    tt = init_tensor_train(cfg.n_sites, cfg.bond_dim, cfg.model_boundary, seed=cfg.seed_init,
                           noise=cfg.init_noise, noise_kind=cfg.init_kind)
    return train(tt, data, cfg.train_config(), reference=reference, log=log)


def cmd_train(cfg: ExperimentConfig, data_path=None, state_path=None) -> Path:
    out = _outdir(cfg)
    data = load_dataset(data_path or out / "data.txt")
    reference = None
    ref_path = Path(state_path) if state_path else out / "state.json"
    if ref_path.exists():
        reference = load_state(ref_path)[0]
    model, hist = _train_one(cfg, data, reference, log=lambda m: _say("train: " + m))
    comment = _comment(cfg)
    write_csv(out / "loss.csv", ["step", "epoch", "nll"],
              ((i, e, l) for i, (e, l) in enumerate(zip(hist.step_epoch, hist.step_loss))), comment)
    write_csv(out / "epoch_loss.csv", ["epoch", "nll"], enumerate(hist.epoch_loss, 1), comment)
    if hist.epoch_fidelity:
        write_csv(out / "fidelity.csv", ["epoch", "fidelity"], enumerate(hist.epoch_fidelity, 1), comment)
    write_csv(out / "timing.csv", ["epoch", "seconds"], enumerate(hist.epoch_seconds, 1), comment)
    meta = _echo(cfg)
    meta["final_loss"] = hist.epoch_loss[-1]
    meta["n_floored"] = hist.n_floored
    path = out / "model.json"
    save_model(path, model, meta)
    s = shannon_entropy(data)
    line = f"train: final NLL = {hist.epoch_loss[-1]:.6f}  S(T) = {s:.6f}"
    if hist.epoch_fidelity:
        line += f"  F = {hist.epoch_fidelity[-1]:.6f}"
    _say(line + f" -> {path}")
    return path


def evaluate(cfg: ExperimentConfig, model: TensorTrain, state, data: Dataset, data_boundary) -> tuple:
    """Build the metrics report and the CSV tables for one trained model."""
    f = fidelity(model, state)
    s = shannon_entropy(data)
    loss = dataset_nll(model, data)
    tvs, hists = {}, {}
    emp = empirical_distribution(data)
    for b in cfg.eval_bases:
        model_dist = exact_distribution(model, b)
        ref_dist = exact_distribution(state, b)
        tvs[b] = tv_distance(model_dist, ref_dist)
        data_dist = emp if b == "z" else ref_dist
        if b == "z":
            tvs["z_data"] = tv_distance(model_dist, emp)
        hists[b] = (data_dist.dense(), model_dist.dense())
    corr_m = correlation_with_fit(model, data_boundary)
    corr_o = correlation_with_fit(state, data_boundary)
    corr_d = correlation_with_fit(data, data_boundary)
    flags = {
        "learning_shortfall": bool(loss - s > SHORTFALL_NATS),
        "oscillatory_reference": corr_o.oscillatory,
        "degenerate_reference": bool(state.metadata.get("degenerate", False)),
    }
    report = MetricsReport(
        fidelity=f, entropy=s, final_loss=loss,
        parameter_count=parameter_count(model.n_sites, model.bond_dim, model.boundary),
        tv_distance=tvs, correlation_model=corr_m, correlation_reference=corr_o,
        correlation_data=corr_d, flags=flags,
        metadata={"fidelity_method": "dense: train expanded to 2**N amplitudes, exact",
                  "histogram_reference": "z: training data; x, y: exact rotated reference state",
                  "model_boundary": model.boundary.value, "data_boundary": Boundary.parse(data_boundary).value,
                  **_echo(cfg)},
    )
    return report, hists


def cmd_evaluate(cfg: ExperimentConfig, model_path=None, state_path=None, data_path=None) -> Path:
    out = _outdir(cfg)
    model, _ = load_model(model_path or out / "model.json")
    state, boundary = load_state(state_path or out / "state.json")
    data = load_dataset(data_path or out / "data.txt")
    if not (model.n_sites == state.n_sites == data.n_sites):
        raise UsageError(f"size mismatch: model N={model.n_sites}, state N={state.n_sites}, data N={data.n_sites}")
    report, hists = evaluate(cfg, model, state, data, boundary)
    path = out / "report.json"
    path.write_text(report.to_json())
    comment = _comment(cfg)
    for name in ("model", "reference", "data"):
        rep = getattr(report, f"correlation_{name}")
        write_csv(out / f"corr_{name}.csv", ["r", "G", "Np"], zip(rep.r, rep.values, rep.n_pairs), comment)
    n = model.n_sites
    for b, (pd, pm) in hists.items():
        rows = ((format(c, f"0{n}b"), pd[c], pm[c]) for c in range(2**n))
        write_csv(out / f"hist_{b}.csv", ["configuration", "freq_data", "freq_model"], rows, comment)
    xi_m, xi_o = report.correlation_model.xi, report.correlation_reference.xi
    _say(f"evaluate: F = {report.fidelity:.6f}  NLL - S = {report.final_loss - report.entropy:.6f}  "
         f"xi_model = {xi_m:.4f}  xi_ref = {xi_o:.4f}  flags = {report.flags} -> {path}")
    return path


def cmd_report(cfg: ExperimentConfig) -> Path:
    """generate -> sample -> train -> evaluate into one output directory."""
    cmd_generate(cfg)
    cmd_sample(cfg.replace(basis=Basis.Z))
    cmd_train(cfg)
    return cmd_evaluate(cfg)


# -- fidelity grid ------------------------------------------------------------

def _row_seed(base: int, *key) -> int:
    return int(np.random.SeedSequence([base, *key]).generate_state(1)[0])


def table1_cell(cfg: ExperimentConfig, model_b, data_b, d: int, rep: int, state, data):
    """Train one grid cell with seeds derived from (pairing, D, repeat); returns (F, status, history)."""
    key = (TABLE1_PAIRINGS.index((Boundary.parse(model_b).value, Boundary.parse(data_b).value)), d, rep)
    row_cfg = cfg.replace(model_boundary=model_b, data_boundary=data_b, bond_dim=d,
                          seed_init=_row_seed(cfg.seed_init, *key),
                          seed_shuffle=_row_seed(cfg.seed_shuffle, *key))
    try:
        model, hist = _train_one(row_cfg, data)
        return fidelity(model, state), "ok", hist
    except (NumericalError, ValueError) as exc:
        return float("nan"), f"failed: {exc}", None


def _table1_row(args):
    return table1_cell(*args)[:2]


def table1_inputs(cfg: ExperimentConfig) -> tuple[dict, dict]:
    """Exact ground states and z-basis datasets for both data boundaries."""
    states, datasets = {}, {}
    for b in ("open", "periodic"):
        _, st = ground_state(cfg.model_parameters(b), seed=cfg.seed_state)
        states[b] = st
        datasets[b] = sample_dense(st, cfg.samples, cfg.seed_sample, b)
    return states, datasets


def cmd_table1(cfg: ExperimentConfig, bond_dims=TABLE1_BOND_DIMS) -> Path:
    out = _outdir(cfg)
    states, datasets = table1_inputs(cfg)
    jobs = [(cfg, mb, db, d, r, states[db], datasets[db])
            for mb, db in TABLE1_PAIRINGS for d in bond_dims for r in range(cfg.repeats)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_table1_row, jobs))
    else:
        results = []
        for job in jobs:
            t0 = time.perf_counter()
            results.append(_table1_row(job))
            _say(f"table1: model={job[1]} data={job[2]} D={job[3]} repeat={job[4]} "
                 f"F={results[-1][0]:.4f} ({time.perf_counter() - t0:.1f}s)")
    rows = []
    for i, (mb, db) in enumerate(TABLE1_PAIRINGS):
        for d in bond_dims:
            cell = [results[j] for j, job in enumerate(jobs) if job[1:4] == (mb, db, d)]
            fs = np.array([c[0] for c in cell])
            status = ";".join(sorted({c[1] for c in cell}))
            ok = fs[np.isfinite(fs)]
            rows.append((mb, db, d, parameter_count(cfg.n_sites, d, mb),
                         float(ok.mean()) if ok.size else float("nan"),
                         float(ok.max()) if ok.size else float("nan"), len(cell), status))
    path = out / "table1.csv"
    write_csv(path, ["model", "data", "D", "Omega", "F", "F_max", "repeats", "status"], rows, _comment(cfg))
    _say(f"table1: {len(rows)} rows -> {path}")
    return path


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", help="flat 'key = value' config file; flags override it")
    common.add_argument("--preset", choices=sorted(PRESETS) + ["custom"])
    common.add_argument("--gamma", type=float)
    common.add_argument("--h", dest="field", type=float)
    common.add_argument("--coupling", type=float)
    common.add_argument("--sites", dest="n_sites", type=int)
    common.add_argument("--data-boundary", choices=["open", "periodic"])
    common.add_argument("--model-boundary", choices=["open", "periodic"])
    common.add_argument("--bond-dim", type=int)
    common.add_argument("--init-noise", type=float)
    common.add_argument("--init-kind", choices=["gaussian", "positive"])
    common.add_argument("--samples", type=int)
    common.add_argument("--basis", choices=["x", "y", "z"])
    common.add_argument("--eval-bases", help="comma-separated bases for histograms (z always included)")
    for name in ("state", "sample", "init", "shuffle"):
        common.add_argument(f"--seed-{name}", dest=f"seed_{name}", type=int)
    common.add_argument("--out")
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--learning-rate", type=float)
    common.add_argument("--final-learning-rate", type=_rate_or_none, help="end of the geometric decay, or 'none'")
    common.add_argument("--threads", type=int)

    parser = argparse.ArgumentParser(prog="bornxy", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"bornxy {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub_kw = {"parents": [common], "allow_abbrev": False}
    sub.add_parser("generate", **sub_kw, help="exact ground state -> state.json")
    p = sub.add_parser("sample", **sub_kw, help="state file -> dataset file")
    p.add_argument("--state-file")
    p = sub.add_parser("train", **sub_kw, help="dataset file -> model + loss traces")
    p.add_argument("--data-file")
    p.add_argument("--state-file", help="reference state for per-epoch fidelity")
    p = sub.add_parser("evaluate", **sub_kw, help="model + state + data -> report")
    p.add_argument("--model-file")
    p.add_argument("--state-file")
    p.add_argument("--data-file")
    p = sub.add_parser("table1", **sub_kw, help="boundary x bond-dimension fidelity grid")
    p.add_argument("--repeats", type=int)
    p.add_argument("--bond-dims", help="comma-separated subset of bond dimensions")
    sub.add_parser("report", **sub_kw, help="generate, sample, train and evaluate in one go")
    return parser


def _rate_or_none(raw: str):
    return "none" if raw.lower() == "none" else float(raw)


_CONFIG_KEYS = ("preset", "gamma", "field", "coupling", "n_sites", "data_boundary", "model_boundary",
                "bond_dim", "init_noise", "init_kind", "samples", "basis", "eval_bases", "seed_state", "seed_sample", "seed_init",
                "seed_shuffle", "out", "epochs", "batch_size", "learning_rate", "final_learning_rate", "threads", "repeats")


def _config_from_args(args) -> ExperimentConfig:
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    constant = overrides["final_learning_rate"] == "none"
    if constant:
        overrides["final_learning_rate"] = None
    cfg = load_config(args.config, **overrides)
    return cfg.replace(final_learning_rate=None) if constant else cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config_from_args(args)
        if args.command == "generate":
            cmd_generate(cfg)
        elif args.command == "sample":
            cmd_sample(cfg, args.state_file)
        elif args.command == "train":
            cmd_train(cfg, args.data_file, args.state_file)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.model_file, args.state_file, args.data_file)
        elif args.command == "table1":
            dims = TABLE1_BOND_DIMS
            if args.bond_dims:
                dims = tuple(int(x) for x in args.bond_dims.split(","))
            cmd_table1(cfg, dims)
        elif args.command == "report":
            cmd_report(cfg)
    except (FormatError, OSError) as exc:
        print(f"bornxy: I/O error: {exc}", file=sys.stderr)
        return 4
    except NumericalError as exc:
        print(f"bornxy: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (UsageError, ValueError, TypeError) as exc:
        print(f"bornxy: configuration error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
