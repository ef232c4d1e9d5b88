"""Command-line front end: ``maat <command> [options]``.

Commands: generate, reconstruct, baseline, discover, experiment, aggregate.

Options can also come from a JSON document passed with ``--config``;
explicit flags win over the document, which wins over built-in defaults.
``MAAT_SEED`` supplies the seed when neither sets one.  Every command writes
``manifest.json`` next to its outputs.  Failures print one line
``error code=<name> exit=<n> message=<text>`` on stderr.
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import BASELINES
from .discovery import discover
from .dynamics import generate_dataset, load_dataset, read_table, save_dataset
from .errors import ConfigurationError, InvalidInputError, MaatError, NumericError
from .experiments import (
    EXPERIMENTS,
    MAAT_METHODS,
    aggregate,
    prior_preset,
    read_rows,
    reconstruct,
    run_experiment,
    write_rows,
)
from .reconstruction import LossWeights, OptimizerConfig, evaluate, fit, save_model

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_INPUT = 5
EXIT_NUMERIC = 6

# per-command defaults; also the set of keys a config document may contain
DEFAULTS = {
    "generate": {
        "system": "seir", "seed": None, "noise": "isotropic-gaussian", "noise_scale": None,
        "operator": "identity", "dims": None, "n_train": 500, "n_val": 200, "n_test": 200,
        "param_jitter": 0.05, "ic_jitter": 0.1, "clean_snapshots": False, "out": "dataset",
    },
    "reconstruct": {
        "dataset": None, "method": "maat", "split": "train", "seed": None, "out": "reconstruction",
        "w_s": 1.0, "w_i": 1.0, "lam": 1e-6, "gamma": 1e-3, "w_nonneg": None, "w_conserve": None,
        "w_monotone": None, "lr": 1.0, "max_iter": 20000, "patience": 2000,
    },
    "baseline": {"dataset": None, "method": "spline", "split": "train", "seed": None, "out": "baseline"},
    "discover": {
        "estimate": None, "threshold": 0.1, "decay": 0.9, "max_iter": 20, "degree": 2, "seed": None,
        "out": "discovery",
    },
    "experiment": {"name": None, "seeds": "0-9", "seed": None, "workers": 1, "discovery": False, "out": "results"},
    "aggregate": {"input": None, "group": "system,noise,method", "metric": "state_mse", "seed": None,
                  "out": "aggregate"},
}


class CliError(Exception):
    def __init__(self, code, name, message):
        super().__init__(message)
        self.code = code
        self.name = name


class _Parser(argparse.ArgumentParser):
    """Report usage errors on the single machine-readable error line."""

    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", f"{self.prog}: {message}")


def _build_parser():
    p = _Parser(prog="maat", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"maat {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, help_text):
        sp = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="JSON document with option values")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        return sp

    g = cmd("generate", "simulate a benchmark dataset")
    g.add_argument("--system")
    g.add_argument("--noise")
    g.add_argument("--noise-scale", dest="noise_scale", type=float, help="absolute noise std; 0 = noiseless")
    g.add_argument("--operator", choices=["identity", "select", "sum-all"])
    g.add_argument("--dims", help="comma-separated state indices for --operator select")
    g.add_argument("--n-train", dest="n_train", type=int)
    g.add_argument("--n-val", dest="n_val", type=int)
    g.add_argument("--n-test", dest="n_test", type=int)
    g.add_argument("--param-jitter", dest="param_jitter", type=float)
    g.add_argument("--ic-jitter", dest="ic_jitter", type=float)
    g.add_argument("--clean-snapshots", dest="clean_snapshots", action="store_true")

    r = cmd("reconstruct", "kernel state reconstruction of one split")
    r.add_argument("--dataset")
    r.add_argument("--method", choices=list(MAAT_METHODS))
    r.add_argument("--split", choices=["train", "val", "test"])
    for flag in ("w_s", "w_i", "lam", "gamma", "w_nonneg", "w_conserve", "w_monotone", "lr"):
        r.add_argument("--" + flag.replace("_", "-"), dest=flag, type=float)
    r.add_argument("--max-iter", dest="max_iter", type=int)
    r.add_argument("--patience", type=int)

    b = cmd("baseline", "run a classical estimator on one split")
    b.add_argument("--dataset")
    b.add_argument("--method", choices=sorted(BASELINES))
    b.add_argument("--split", choices=["train", "val", "test"])

    d = cmd("discover", "sparse regression on a reconstruction estimate")
    d.add_argument("--estimate", nargs="+", help="one or more estimate_<method>.csv files (rows are stacked)")
    d.add_argument("--threshold", type=float)
    d.add_argument("--decay", type=float)
    d.add_argument("--max-iter", dest="max_iter", type=int)
    d.add_argument("--degree", type=int)

    e = cmd("experiment", "run a named experiment")
    e.add_argument("--name", choices=list(EXPERIMENTS))
    e.add_argument("--seeds", help="e.g. 0-9 or 1,4,7")
    e.add_argument("--workers", type=int)
    e.add_argument("--discovery", action="store_true", help="also discover and roll out (noise-matrix only)")

    a = cmd("aggregate", "geometric-mean summary of a results table")
    a.add_argument("--input")
    a.add_argument("--group", help="comma-separated grouping columns")
    a.add_argument("--metric")
    return p


def resolve_config(command, flags, environ=None):
    """Merge defaults < config document < flags; fill the seed from ``MAAT_SEED``."""
    environ = os.environ if environ is None else environ
    cfg = dict(DEFAULTS[command])
    path = flags.pop("config", None)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise CliError(EXIT_MISSING, "missing-file", f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_CONFIG, "bad-config", f"config is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise CliError(EXIT_CONFIG, "bad-config", "config document must be a JSON object")
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise CliError(EXIT_CONFIG, "bad-config", f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(doc)
    cfg.update(flags)
    if cfg.get("seed") is None:
        env = environ.get("MAAT_SEED")
        if env is not None:
            try:
                cfg["seed"] = int(env)
            except ValueError:
                raise CliError(EXIT_CONFIG, "bad-config", f"MAAT_SEED must be an integer, got {env!r}") from None
        else:
            cfg["seed"] = 0
    return cfg


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise CliError(EXIT_USAGE, "usage", f"--{k.replace('_', '-')} is required")


def _existing(path, what):
    p = Path(path)
    if not p.exists():
        raise CliError(EXIT_MISSING, "missing-file", f"{what} not found: {p}")
    return p


def _write_manifest(out, command, cfg, outputs):
    doc = {
        "tool": "maat",
        "version": __version__,
        "command": command,
        "seed": cfg.get("seed"),
        "config": {k: v for k, v in sorted(cfg.items()) if k != "out"},
        "outputs": sorted(str(o) for o in outputs),
    }
    (Path(out) / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_estimate(path, t, states, derivs, names):
    header = ["t", *(f"{n}_hat" for n in names), *(f"d{n}_hat" for n in names)]
    np.savetxt(path, np.column_stack([t, states, derivs]), fmt="%.17g", delimiter=",",
               header=",".join(header), comments="")


def cmd_generate(cfg):
    dims = cfg["dims"]
    if isinstance(dims, str):
        dims = tuple(int(x) for x in dims.split(",") if x.strip())
    ds = generate_dataset(
        cfg["system"],
        seed=cfg["seed"],
        noise=cfg["noise"],
        noise_scale=cfg["noise_scale"],
        operator_kind=cfg["operator"],
        operator_dims=tuple(dims) if dims else None,
        n_train=cfg["n_train"],
        n_val=cfg["n_val"],
        n_test=cfg["n_test"],
        param_jitter=cfg["param_jitter"],
        ic_jitter=cfg["ic_jitter"],
        snapshot_noise=not cfg["clean_snapshots"],
    )
    out = save_dataset(ds, cfg["out"])
    files = [f"{s}/{f}" for s in ("train", "val", "test") for f in ("signals.csv", "snapshots.csv", "truth.csv")]
    return out, files + ["meta.json"]


def _load(cfg):
    _require(cfg, "dataset")
    return load_dataset(_existing(cfg["dataset"], "dataset directory"))


def cmd_reconstruct(cfg):
    ds = _load(cfg)
    base = prior_preset(ds.system, {"maat": "plain", "maat+nonneg": "nonneg", "maat+priors": "priors"}[cfg["method"]])
    overrides = {"gamma": cfg["gamma"]}
    for key in ("w_nonneg", "w_conserve", "w_monotone"):
        if cfg[key] is not None:
            overrides[key] = cfg[key]
    priors = replace(base, **overrides)
    weights = LossWeights(cfg["w_s"], cfg["w_i"], cfg["lam"])
    opt = OptimizerConfig(lr=cfg["lr"], max_iter=cfg["max_iter"], patience=cfg["patience"])
    model = fit(ds, weights=weights, priors=priors, config=opt, split=cfg["split"])
    sp = ds.split(cfg["split"])
    states, derivs = evaluate(model, sp.t)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    est = f"estimate_{cfg['method']}.csv"
    _write_estimate(out / est, sp.t, states, derivs, ds.state_names)
    save_model(model, out / "model.json")
    return out, [est, "model.json"]


def cmd_baseline(cfg):
    ds = _load(cfg)
    sp = ds.split(cfg["split"])
    states, derivs, _ = reconstruct(ds, cfg["method"], cfg["split"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    name = f"estimate_{cfg['method']}.csv"
    _write_estimate(out / name, sp.t, states, derivs, ds.state_names)
    return out, [name]


def cmd_discover(cfg):
    _require(cfg, "estimate")
    paths = cfg["estimate"] if isinstance(cfg["estimate"], (list, tuple)) else [cfg["estimate"]]
    tables = [read_table(_existing(p, "estimate file")) for p in paths]
    header = tables[0][0]
    if any(h != header for h, _ in tables):
        raise CliError(EXIT_INPUT, "invalid-input", "estimate files have different columns")
    data = np.vstack([d for _, d in tables])
    if (len(header) - 1) % 2 or len(header) < 3:
        raise CliError(EXIT_INPUT, "invalid-input", "estimate must have columns t, x_hat..., dx_hat...")
    D = (len(header) - 1) // 2
    names = [h[:-4] if h.endswith("_hat") else h for h in header[1 : D + 1]]
    model = discover(data[:, 1 : D + 1], data[:, D + 1 :], names, max_degree=cfg["degree"],
                     threshold=cfg["threshold"], decay=cfg["decay"], max_iter=cfg["max_iter"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    eqs = model.equations()
    (out / "equations.txt").write_text("\n".join(eqs) + "\n")
    (out / "sparse_model.json").write_text(model.to_text())
    print("\n".join(eqs))
    return out, ["equations.txt", "sparse_model.json"]


def parse_seeds(spec):
    if isinstance(spec, (list, tuple)):
        return [int(s) for s in spec]
    spec = str(spec).strip()
    seeds = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise CliError(EXIT_CONFIG, "bad-config", f"empty seed list {spec!r}")
    return seeds


def cmd_experiment(cfg):
    _require(cfg, "name")
    seeds = parse_seeds(cfg["seeds"])
    tables = run_experiment(cfg["name"], seeds=seeds, workers=cfg["workers"], with_discovery=cfg["discovery"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for label, rows in tables.items():
        name = f"{label}.csv"
        write_rows(out / name, rows)
        files.append(name)
    return out, files


def cmd_aggregate(cfg):
    _require(cfg, "input")
    rows = read_rows(_existing(cfg["input"], "results table"))
    keys = tuple(k.strip() for k in cfg["group"].split(",") if k.strip())
    if rows:
        missing = [k for k in (*keys, cfg["metric"]) if k not in rows[0]]
        if missing:
            raise CliError(EXIT_INPUT, "invalid-input", f"columns not in table: {', '.join(missing)}")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "summary.csv", aggregate(rows, keys, cfg["metric"]))
    return out, ["summary.csv"]


COMMANDS = {
    "generate": cmd_generate,
    "reconstruct": cmd_reconstruct,
    "baseline": cmd_baseline,
    "discover": cmd_discover,
    "experiment": cmd_experiment,
    "aggregate": cmd_aggregate,
}


def _fail(err):
    msg = " ".join(str(err).split())
    print(f"error code={err.name} exit={err.code} message={msg}", file=sys.stderr)
    return err.code


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except CliError as err:
        return _fail(err)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    flags = vars(args)
    command = flags.pop("command")
    try:
        cfg = resolve_config(command, flags)
        out, files = COMMANDS[command](cfg)
        _write_manifest(out, command, cfg, files)
    except CliError as err:
        return _fail(err)
    except FileNotFoundError as exc:
        return _fail(CliError(EXIT_MISSING, "missing-file", str(exc)))
    except ConfigurationError as exc:
        return _fail(CliError(EXIT_CONFIG, "bad-config", str(exc)))
    except NumericError as exc:
        return _fail(CliError(EXIT_NUMERIC, "numeric", str(exc)))
    except (InvalidInputError, MaatError, TypeError, ValueError) as exc:
        return _fail(CliError(EXIT_INPUT, "invalid-input", str(exc)))
    except Exception as exc:  # noqa: BLE001 - last resort keeps the one-line contract
        return _fail(CliError(EXIT_INTERNAL, "internal", f"{type(exc).__name__}: {exc}"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
