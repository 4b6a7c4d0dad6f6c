"""Command-line entry point: ``tvgraph {synth,learn,metrics,backtest}``.

Parameters come from an INI-style config file with one section per command;
paths and the seed may also be given as flags (flags win).  Exit codes: 0 on
success, 2 for invalid input or configuration, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .admm import HyperParams, FrameObservation, SolverError, frame_slices, solve_sequence
from .graph_ops import adjacency, laplacian
from .io import (
    InputError,
    OutputSet,
    dump_json,
    ingest_data,
    read_edge_list,
    read_labels,
    write_edge_list,
    write_labels,
    write_matrix,
)
from .metrics import (
    EDGE_TOL,
    Partition,
    clustering_report,
    f_score,
    match_trace,
    rel_err,
    spectral_clustering,
)
from .portfolio import BacktestError, Scheme, backtest
from .synth import SynthConfig, generate_dataset

log = logging.getLogger("tvgraph")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(ValueError):
    pass


def load_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive (e.g. T)
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        parser.read(path)
    return parser


def section(cfg: configparser.ConfigParser, name: str) -> dict:
    return dict(cfg[name]) if cfg.has_section(name) else {}


def _coerce(value: str, kind):
    value = value.strip()
    if kind is bool:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"cannot parse {value!r} as {kind.__name__}") from None


HP_KEYS = {
    "k": int, "nu": float, "sigma_n": float, "lam": float, "rho": float, "eta": float,
    "max_iter": int, "tol": float, "frame_length": int, "overlap": int, "temporal": bool,
}


def hyperparams_from(opts: dict, frame_length_default: int | None = None) -> HyperParams:
    """Build HyperParams from config strings.

    ``sigma_eps = auto`` (the default) means ``exp(0.005 * frame_length)``;
    ``gamma`` may be given instead of ``lam``; ``d`` is a scalar or a
    comma-separated vector.
    """
    opts = dict(opts)
    kwargs = {}
    for key, kind in HP_KEYS.items():
        if key in opts:
            kwargs[key] = _coerce(opts.pop(key), kind)
    if "k" not in kwargs:
        raise ConfigError("missing required solver key 'k'")
    if "frame_length" not in kwargs and frame_length_default is not None:
        kwargs["frame_length"] = frame_length_default
    frame_length = kwargs.get("frame_length", 200)
    if "d" in opts:
        parts = [_coerce(v, float) for v in opts.pop("d").split(",")]
        kwargs["d"] = parts[0] if len(parts) == 1 else tuple(parts)
    sigma_eps = opts.pop("sigma_eps", "auto").strip()
    kwargs["sigma_eps"] = float(np.exp(0.005 * frame_length)) if sigma_eps == "auto" else _coerce(sigma_eps, float)
    if "gamma" in opts:
        if "lam" in kwargs:
            raise ConfigError("give either gamma or lam, not both")
        kwargs["lam"] = _coerce(opts.pop("gamma"), float) * frame_length / 2.0
    return HyperParams(**kwargs)


def _require(path, what):
    if path is None:
        raise ConfigError(f"missing {what} path")
    if not Path(path).is_file():
        raise ConfigError(f"{what} file not found: {path}")
    return Path(path)


def _out_dir(path) -> Path:
    if path is None:
        raise ConfigError("missing output directory (--out-dir or out_dir)")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def run_synth(opts: dict, out_dir, seed) -> int:
    names = {f.name: f.type for f in fields(SynthConfig)}
    kwargs = {}
    for key, value in opts.items():
        if key == "out_dir":
            continue
        if key not in names:
            raise ConfigError(f"unknown synth key {key!r}")
        if key == "var_cap":
            kwargs[key] = None if value.strip().lower() == "none" else _coerce(value, float)
        elif key in ("innovation", "innovation_support"):
            kwargs[key] = value.strip()
        else:
            kwargs[key] = _coerce(value, int if names[key] in ("int", int) else float)
    if seed is None:
        raise ConfigError("synth needs a seed (--seed or seed = ...)")
    kwargs["seed"] = int(seed)
    cfg = SynthConfig(**kwargs)
    ds = generate_dataset(cfg)
    outputs = OutputSet(_out_dir(out_dir))
    try:
        node_names = [f"node{i}" for i in range(cfg.p)]
        write_matrix(outputs.path("data.csv"), node_names, ds.obs.Y)
        write_matrix(outputs.path("mask.csv"), node_names, ds.obs.M.astype(int))
        write_edge_list(outputs.path("truth_edges.csv"), ds.weights, 0.0)
        write_labels(outputs.path("labels.csv"), ds.labels)
        dump_json(outputs.path("synth.json"), {f.name: getattr(cfg, f.name) for f in fields(cfg)})
    except Exception:
        outputs.discard()
        raise
    return EXIT_OK


def run_learn(opts: dict, data, mask, out_dir) -> int:
    opts = dict(opts)
    edge_tol = _coerce(opts.pop("edge_tol", str(EDGE_TOL)), float)
    data = _require(data or opts.pop("data", None), "data")
    mask = mask or opts.pop("mask", None)
    mask = _require(mask, "mask") if mask else None
    out_dir = out_dir or opts.pop("out_dir", None)
    opts.pop("seed", None)
    hp = hyperparams_from(opts)
    names, X, M = ingest_data(data, mask)
    p, T = X.shape
    slices = frame_slices(T, hp.frame_length, hp.overlap)
    if not slices:
        raise ConfigError(f"{T} samples are fewer than one frame of {hp.frame_length}")
    frames = [FrameObservation(X[:, s], M[:, s]) for s in slices]
    results = solve_sequence(frames, hp)
    outputs = OutputSet(_out_dir(out_dir))
    try:
        write_edge_list(outputs.path("edges.csv"), [r.w_hat for r in results], edge_tol)
        diagnostics = {
            "p": p,
            "nodes": names,
            "frame_length": hp.frame_length,
            "overlap": hp.overlap,
            "frames": [
                {
                    "frame": n,
                    "start": s.start,
                    "iterations": r.iters_used,
                    "converged": r.converged,
                    "residuals": {
                        "laplacian": r.residuals[:, 0].tolist(),
                        "temporal": r.residuals[:, 1].tolist(),
                        "degree": r.residuals[:, 2].tolist(),
                    },
                    "lagrangian": r.lagrangian_trace.tolist(),
                }
                for n, (s, r) in enumerate(zip(slices, results))
            ],
        }
        dump_json(outputs.path("diagnostics.json"), diagnostics)
    except Exception:
        outputs.discard()
        raise
    return EXIT_OK


def run_metrics(opts: dict, estimate, truth, out_dir, seed) -> int:
    opts = dict(opts)
    estimate = _require(estimate or opts.pop("estimate", None), "estimated edge list")
    truth = _require(truth or opts.pop("truth", None), "ground-truth edge list")
    labels_path = opts.pop("labels", None) or (truth.parent / "labels.csv")
    labels = read_labels(_require(labels_path, "labels")) if Path(labels_path).is_file() else None
    if "p" in opts:
        p = _coerce(opts.pop("p"), int)
    elif labels is not None:
        p = labels.size
    else:
        raise ConfigError("metrics needs the node count: set p or provide labels")
    edge_tol = _coerce(opts.pop("edge_tol", str(EDGE_TOL)), float)
    scaling = opts.pop("rel_err_scaling", "trace").strip()
    if scaling not in ("trace", "none"):
        raise ConfigError("rel_err_scaling must be 'trace' or 'none'")
    settings_file = truth.parent / "synth.json"
    synth_settings = json.loads(settings_file.read_text()) if settings_file.is_file() else {}
    sampling_rate = float(opts.pop("sampling_rate", synth_settings.get("sampling_rate", 1.0)))
    noise_std = float(opts.pop("noise_std", synth_settings.get("noise_std", 0.0)))
    seed = int(seed if seed is not None else opts.pop("seed", 0))

    est = read_edge_list(estimate, p)
    ref = read_edge_list(truth, p)
    if len(ref) < len(est):
        raise InputError(f"estimate has {len(est)} frames but ground truth only {len(ref)}")
    recovery, clustering = [], []
    for n, w_est in enumerate(est):
        L_est, L_true = laplacian(w_est), laplacian(ref[n])
        recovery.append({
            "frame": n,
            "rel_err": rel_err(match_trace(L_true, L_est) if scaling == "trace" else L_true, L_est),
            "f_score": f_score(L_true, L_est, edge_tol),
        })
        if labels is not None:
            truth_part = Partition(labels)
            k = int(opts.get("k", truth_part.k))
            pred = spectral_clustering(L_est, k, seed=seed)
            clustering.append({"frame": n, **clustering_report(truth_part, pred, adjacency(w_est))})
    report = {
        "settings": {
            "sampling_rate": sampling_rate,
            "noise_std": noise_std,
            "edge_tol": edge_tol,
            "rel_err_scaling": scaling,
            "modularity_graph": "learned adjacency, ground-truth labels",
        },
        "recovery": recovery,
        "final": recovery[-1],
        "clustering": clustering,
    }
    outputs = OutputSet(_out_dir(out_dir or opts.pop("out_dir", None)))
    try:
        dump_json(outputs.path("metrics.json"), report)
    except Exception:
        outputs.discard()
        raise
    return EXIT_OK


def run_backtest(opts: dict, data, out_dir) -> int:
    opts = dict(opts)
    data = _require(data or opts.pop("data", None), "returns")
    out_dir = out_dir or opts.pop("out_dir", None)
    opts.pop("seed", None)
    schemes = [Scheme(s.strip().upper()) for s in opts.pop("schemes", "MTVGRP,MSRP,EWP").split(",")]
    rebalance = _coerce(opts.pop("rebalance_every", "20"), int)
    nu_window = opts.pop("nu_window", "frame").strip()
    hp = hyperparams_from(opts)
    _, R, M = ingest_data(data)
    reports = [backtest(R, hp, s, rebalance_every=rebalance, nu_window=nu_window) for s in schemes]
    outputs = OutputSet(_out_dir(out_dir))
    try:
        for rep in reports:
            dump_json(outputs.path(f"backtest_{rep.scheme}.json"), rep.to_dict())
    except Exception:
        outputs.discard()
        raise
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvgraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("synth", "generate a synthetic time-varying graph dataset"),
        ("learn", "learn per-frame graphs from a data CSV"),
        ("metrics", "score learned graphs against ground truth"),
        ("backtest", "run portfolio backtests on a returns CSV"),
    ]:
        cmd = sub.add_parser(name, help=helptext)
        cmd.add_argument("--config", help="INI config file with a [%s] section" % name)
        cmd.add_argument("--data", help="data CSV (learn, backtest) or estimated edge list (metrics)")
        cmd.add_argument("--mask", help="sampling-mask CSV")
        cmd.add_argument("--truth", help="ground-truth edge list CSV")
        cmd.add_argument("--out-dir", help="output directory")
        cmd.add_argument("--seed", type=int, help="master seed")
        cmd.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        opts = section(cfg, args.command)
        seed = args.seed if args.seed is not None else opts.pop("seed", None)
        if args.command == "synth":
            out_dir = args.out_dir or opts.pop("out_dir", None)
            return run_synth(opts, out_dir, seed)
        if args.command == "learn":
            return run_learn(opts, args.data, args.mask, args.out_dir)
        if args.command == "metrics":
            return run_metrics(opts, args.data, args.truth, args.out_dir, seed)
        return run_backtest(opts, args.data, args.out_dir)
    except (SolverError, BacktestError, np.linalg.LinAlgError, FloatingPointError) as err:
        log.error("numerical failure: %s", err)
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, InputError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
