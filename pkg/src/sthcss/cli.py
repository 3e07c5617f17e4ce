"""Command-line front end.

Subcommands: gen-data, train, eval, inspect-graph, sweep. Every option can
also come from a ``key=value`` file passed with ``--config``; explicit flags
win over the file, the file wins over built-in defaults. Each command prints
its resolved configuration before doing any work.

Exit codes: 0 ok, 1 configuration/validation, 2 I/O or file format,
3 numerical/runtime.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import hypergraph as hgm
from .data import Standardizer, SynthConfig, load_csv, parse_groups, synth_generate, write_csv
from .exceptions import ConfigError, FormatError, InvalidArgumentError, STHCSSError
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .training import (TrainConfig, evaluate, hyperparameter_sweep, prepare, run_experiment,
                       write_sweep_csv)


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> list[int]:
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    return [int(p) for p in parts]


def _opt_int(text: str):
    return None if str(text).strip().lower() in ("", "none") else int(text)


# name -> (parser, default, help). Defaults follow the reference setup.
OPTIONS: dict[str, tuple] = {
    "seed": (int, 42, "seed for data generation, initialization, shuffling and dropout"),
    "out": (str, ".", "output directory"),
    # synthetic data
    "sensors": (int, 12, "number of synthetic sensors D"),
    "length": (int, 6000, "number of synthetic timesteps T"),
    "groups": (str, "4,4,4", "comma-separated sensor group sizes"),
    "noise": (float, 0.1, "sensor noise standard deviation"),
    "segments": (int, 1, "number of independent operating segments"),
    "lag": (int, 5, "target lag behind its driver"),
    # model
    "window": (int, 85, "sliding window length W"),
    "mixers": (int, 2, "mixer blocks"),
    "kernel": (int, 7, "temporal convolution kernel size"),
    "dilation": (int, 1, "temporal convolution dilation"),
    "st_blocks": (int, 2, "spatio-temporal blocks"),
    "channels": (int, 16, "hidden channels C"),
    "dropout": (float, 0.2, "dropout probability"),
    "hidden": (int, 64, "readout hidden width"),
    # training
    "epochs": (int, 200, "training epochs"),
    "batch": (int, 64, "minibatch size"),
    "lr": (float, 0.001, "Adam learning rate"),
    "patience": (_opt_int, None, "early-stopping patience in epochs (none = off)"),
    "k": (int, 4, "neighbours per hyperedge"),
    "weighted_degree": (_bool, False, "use weighted vertex degrees"),
    "target": (str, "", "target column (default: last column)"),
    "ridge": (_bool, False, "also fit and report the ridge baseline"),
    "ridge_lambda": (float, 1.0, "ridge penalty"),
    "jobs": (int, 1, "sweep worker processes"),
}

SYNTH_KEYS = ("sensors", "length", "groups", "noise", "segments", "lag")
MODEL_KEYS = ("window", "mixers", "kernel", "dilation", "st_blocks", "channels", "dropout", "hidden")
TRAIN_KEYS = ("epochs", "batch", "lr", "patience", "k", "weighted_degree", "target")
COMMAND_KEYS = {
    "gen-data": ("seed", "out") + SYNTH_KEYS,
    "train": ("seed", "out") + MODEL_KEYS + TRAIN_KEYS + ("ridge", "ridge_lambda"),
    "eval": ("seed", "out", "target"),
    "inspect-graph": ("seed", "out", "k", "weighted_degree", "target"),
    "sweep": ("seed", "out") + MODEL_KEYS + TRAIN_KEYS + ("jobs",),
}
LIST_KEYS = {"sweep": ("kernel", "mixers")}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def read_config(path) -> dict[str, str]:
    """Parse a ``key=value`` file (``#`` comments, blank lines allowed)."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = val
    return out


def write_config(conf: dict, path) -> None:
    with open(path, "w") as fh:
        for k, v in conf.items():
            if isinstance(v, list):
                v = ",".join(map(str, v))
            fh.write(f"{k}={'none' if v is None else v}\n")


def resolve(command: str, ns: argparse.Namespace) -> dict:
    """defaults < config file < flags, restricted to the command's keys."""
    from_file = read_config(ns.config) if ns.config else {}
    conf = {}
    for key in COMMAND_KEYS[command]:
        parse, default, _ = OPTIONS[key]
        if key in LIST_KEYS.get(command, ()):
            parse = _int_list
            default = [default]
        flag = getattr(ns, key, None)
        if flag is not None:
            conf[key] = flag
        elif key in from_file:
            try:
                conf[key] = parse(from_file[key])
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from exc
        else:
            conf[key] = default
    return conf


def _checked(value_parser):
    def parse(text):
        try:
            return value_parser(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sthcss", description="hypergraph soft-sensor pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "gen-data": "write a synthetic grouped-sensor CSV",
        "train": "train on a CSV and write checkpoint, history and test metrics",
        "eval": "recompute test metrics from a checkpoint",
        "inspect-graph": "export the sensor adjacency and correlation matrices",
        "sweep": "grid over kernel size and mixer depth",
    }
    for name, keys in COMMAND_KEYS.items():
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--save-config", help="write the resolved configuration here")
        for key in keys:
            parse, default, text = OPTIONS[key]
            if key in LIST_KEYS.get(name, ()):
                parse, text = _int_list, text + " (comma-separated grid)"
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=_checked(parse),
                           default=None, help=f"{text} [default: {default}]")
        if name == "gen-data":
            p.add_argument("path", nargs="?", help="output CSV (default: OUT/synthetic.csv)")
        elif name == "eval":
            p.add_argument("checkpoint")
            p.add_argument("data")
        elif name == "inspect-graph":
            p.add_argument("data")
            p.add_argument("--checkpoint", help="take the adjacency from this checkpoint")
        else:
            p.add_argument("data")
    return parser


def _echo(command: str, conf: dict) -> None:
    print(f"# sthcss {command}")
    for k, v in conf.items():
        if isinstance(v, list):
            v = ",".join(map(str, v))
        print(f"config {k}={'none' if v is None else v}")
    sys.stdout.flush()


def _outdir(conf) -> Path:
    out = Path(conf["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FormatError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _model_config(conf, D) -> ModelConfig:
    return ModelConfig(D=D, W=conf["window"], mixer_blocks=conf["mixers"],
                       kernel_size=conf["kernel"], dilation=conf["dilation"],
                       st_blocks=conf["st_blocks"], channels=conf["channels"],
                       dropout_p=conf["dropout"], readout_hidden=conf["hidden"])


def _train_config(conf) -> TrainConfig:
    return TrainConfig(epochs=conf["epochs"], batch_size=conf["batch"], lr=conf["lr"],
                       seed=conf["seed"], patience=conf["patience"])


def _print_metrics(label, m) -> None:
    mape = "undefined" if m.mape is None else f"{m.mape:.4f}"
    print(f"{label}: nmae={m.nmae:.4f} nrmse={m.nrmse:.4f} mape={mape} r2={m.r2:.4f} (n={m.n})")


def cmd_gen_data(conf, ns) -> int:
    groups = parse_groups(conf["groups"], conf["sensors"])
    cfg = SynthConfig(D=conf["sensors"], groups=groups, T=conf["length"],
                      noise_std=conf["noise"], segments=conf["segments"],
                      target_lag=conf["lag"], seed=conf["seed"])
    path = Path(ns.path) if ns.path else _outdir(conf) / "synthetic.csv"
    series = synth_generate(cfg)
    write_csv(series, path)
    print(f"wrote {path}: D={series.D} T={series.T} groups={','.join(map(str, groups))}")
    return 0


def cmd_train(conf, ns) -> int:
    series = load_csv(ns.data, conf["target"] or None)
    cfg = _model_config(conf, series.D)
    res = run_experiment(series, cfg, _train_config(conf), k=conf["k"],
                         weighted_degree=conf["weighted_degree"], with_ridge=conf["ridge"],
                         ridge_lambda=conf["ridge_lambda"])
    out = _outdir(conf)
    buffers = {"hypergraph.N": res.N, **res.stats.as_buffers()}
    meta = {"k": conf["k"], "weighted_degree": int(conf["weighted_degree"]),
            "target_name": series.target_name, "seed": conf["seed"],
            "best_epoch": res.history.best_epoch}
    save_checkpoint(out / "model.ckpt", cfg, res.params, buffers, meta)
    res.history.write_csv(out / "history.csv")
    (out / "metrics.txt").write_text(res.test.to_text())
    print(f"best epoch {res.history.best_epoch} of {len(res.history.epoch) - 1}")
    _print_metrics("test", res.test)
    if res.ridge is not None:
        (out / "ridge_metrics.txt").write_text(res.ridge.to_text())
        _print_metrics("ridge", res.ridge)
    print(f"wrote {out / 'model.ckpt'}, {out / 'history.csv'}, {out / 'metrics.txt'}")
    return 0


def cmd_eval(conf, ns) -> int:
    cfg, params, buffers, meta = load_checkpoint(ns.checkpoint)
    target = conf["target"] or meta.get("target_name") or None
    series = load_csv(ns.data, target)
    if series.D != cfg.D:
        raise ConfigError(f"checkpoint expects {cfg.D} sensors, {ns.data} has {series.D}")
    stats = Standardizer.from_buffers(buffers)
    prep = prepare(series, cfg.W, stats=stats)
    m = evaluate(prep.test, buffers["hypergraph.N"], params, cfg, stats, series.target_name)
    out = _outdir(conf)
    (out / "eval_metrics.txt").write_text(m.to_text())
    _print_metrics("test", m)
    print(f"wrote {out / 'eval_metrics.txt'}")
    return 0


def cmd_inspect_graph(conf, ns) -> int:
    series = load_csv(ns.data, conf["target"] or None)
    prep = prepare(series, 1)
    if ns.checkpoint:
        cfg, _, buffers, _ = load_checkpoint(ns.checkpoint)
        if cfg.D != series.D:
            raise ConfigError(f"checkpoint expects {cfg.D} sensors, {ns.data} has {series.D}")
        N = buffers["hypergraph.N"]
        ops = hgm.SpectralOperators(N=N, L=np.eye(len(N)) - N)
    else:
        ops = hgm.normalized_adjacency(hgm.build_hypergraph(prep.nodes, conf["k"]),
                                       weighted_degree=conf["weighted_degree"])
    C = hgm.abs_correlation(prep.nodes)
    out = _outdir(conf)
    paths = hgm.export_adjacency(ops, out / "adjacency", correlation=C)
    score = hgm.alignment_score(ops.N, C)
    text = "undefined (N off-diagonal constant)" if score is None else repr(score)
    (out / "report.txt").write_text(f"sensors={series.D}\nalignment_score={text}\n")
    for p in paths:
        print(f"wrote {p}")
    print(f"alignment score: {text}")
    return 0


def cmd_sweep(conf, ns) -> int:
    if not conf["kernel"] or not conf["mixers"]:
        raise InvalidArgumentError("--kernel and --mixers grids must not be empty")
    series = load_csv(ns.data, conf["target"] or None)
    base = dict(D=series.D, W=conf["window"], dilation=conf["dilation"],
                st_blocks=conf["st_blocks"], channels=conf["channels"],
                dropout_p=conf["dropout"], readout_hidden=conf["hidden"])
    rows = hyperparameter_sweep(series, base, _train_config(conf), kernels=conf["kernel"],
                                mixers=conf["mixers"], k=conf["k"],
                                weighted_degree=conf["weighted_degree"], n_jobs=conf["jobs"])
    out = _outdir(conf)
    write_sweep_csv(rows, out / "sweep.csv")
    for r in rows:
        if r["status"] == "ok":
            print(f"kernel={r['kernel_size']} mixers={r['mixer_blocks']} r2={r['r2']:.4f} "
                  f"nmae={r['nmae']:.4f}")
        else:
            print(f"kernel={r['kernel_size']} mixers={r['mixer_blocks']} failed: {r['error']}")
    print(f"wrote {out / 'sweep.csv'}")
    if all(r["status"] != "ok" for r in rows):
        print("error: every grid point failed", file=sys.stderr)
        return 3
    return 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "inspect-graph": cmd_inspect_graph, "sweep": cmd_sweep}


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        conf = resolve(ns.command, ns)
        _echo(ns.command, conf)
        if ns.save_config:
            write_config(conf, ns.save_config)
        return COMMANDS[ns.command](conf, ns)
    except STHCSSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
