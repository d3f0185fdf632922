"""Command-line entry point: ``chlsim <subcommand> [flags]``.

Exit status is 0 on success, 2 on a usage or parameter error, 1 when a run
fails, and 130 when interrupted (partial records are kept).
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import chain, marked, montecarlo, process
from ._io import atomic_write_text
from .geometry import ParameterError, make_params, make_params_from_delta

DEFAULTS = {
    "replicates": 1000,
    "seed": 0,
    "eta": marked.DEFAULT_ETA,
    "cap": marked.DEFAULT_CAP,
    "format": "csv",
    "workers": 1,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    try:
        value = int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {text!r}")
    return value


def _float_list(text):
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _common(p, replicates=True):
    g = p.add_argument_group("geometry")
    g.add_argument("--lambda", dest="lambda_", type=float, help="slit length on the cylinder")
    g.add_argument("--n-width", dest="n_width", type=float, help="cylinder width parameter N")
    g.add_argument("--delta", type=float, help="rescaled slit parameter (excludes --lambda/--n-width)")
    g.add_argument("--config", help="flat key = value file; flags override it")
    if not replicates:
        return
    r = p.add_argument_group("experiment")
    r.add_argument("--replicates", type=_positive_int)
    r.add_argument("--seed", type=int)
    r.add_argument("--eta", type=float, help="certification tolerance (default 1e-3)")
    r.add_argument("--cap", type=_positive_int, help="step cap per replicate (default 1e8)")
    r.add_argument("--out", help="record file (CSV or JSON lines); summary goes next to it")
    r.add_argument("--format", choices=("csv", "json"))
    r.add_argument("--workers", type=_positive_int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chlsim", description="Cylindrical Hastings-Levitov(0) laboratory.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("params", help="print delta, a_delta and slit height")
    _common(p, replicates=False)

    p = sub.add_parser("chain", help="interval-chain hitting times")
    _common(p)
    p.add_argument("--mode", choices=("hitting", "sigma-star", "moments"))
    p.add_argument("--x0", type=float, help="initial length (default pi)")
    p.add_argument("--low", type=float, help="lower barrier (default pi/3)")
    p.add_argument("--high", type=float, help="upper barrier (default 5pi/3)")
    p.add_argument("--length", type=float, help="sigma-star initial length (default delta/10)")
    p.add_argument("--steps", type=_positive_int, help="moments mode: chain steps (default 1000)")

    p = sub.add_parser("oracle", help="quadrature oracles")
    p.add_argument("kind", choices=("drift", "m2", "l2", "halving"))
    _common(p, replicates=False)
    p.add_argument("--a", type=float, help="arc length (default pi; delta/10 for halving)")
    p.add_argument("--tol", type=float)

    p = sub.add_parser("simulate", help="certified CHL runs")
    _common(p)
    p.add_argument("--metric", choices=("t_r", "t_tree", "n_trees", "upsilon", "omega"))

    p = sub.add_parser("sweep", help="scaling exponent over a delta grid")
    _common(p)
    p.add_argument("--deltas", type=_float_list, help="grid, e.g. 0.05,0.1,0.2")
    p.add_argument("--metric", choices=("t_r", "t_tree", "hitting", "sigma_star"))

    p = sub.add_parser("tail", help="survival fit of T_r * delta^3")
    _common(p)

    p = sub.add_parser("trees", help="tree counts, or zero-mass decay with --decay")
    _common(p)
    p.add_argument("--decay", type=_positive_int, metavar="K",
                   help="report mean zero mass for k = 0..K instead")

    p = sub.add_parser("degree", help="attachments to one particle")
    _common(p)
    p.add_argument("--width", type=float, help="tracked arc in units of 2 a_delta (default 1)")

    p = sub.add_parser("render", help="SVG picture of one run")
    _common(p, replicates=False)
    p.add_argument("--seed", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--cap", type=_positive_int)
    p.add_argument("--particles", type=_positive_int, help="particles drawn (default 500)")
    p.add_argument("--out", help="SVG path (required)")
    return parser


_FLOATS = {"lambda", "n_width", "delta", "eta", "x0", "low", "high", "length", "a", "tol",
           "width"}
_INTS = {"replicates", "seed", "cap", "workers", "steps", "decay", "particles"}


def load_config(path) -> dict:
    """Read a flat ``key = value`` file whose keys mirror the flag names."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        cp.read_string("[config]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {str(exc).splitlines()[0]}") from None
    out = {}
    for key, raw in cp["config"].items():
        key = key.replace("-", "_")
        try:
            if key in _FLOATS:
                value = float(raw)
            elif key in _INTS:
                value = int(float(raw))
            elif key == "deltas":
                value = _float_list(raw)
            else:
                value = raw
        except (ValueError, argparse.ArgumentTypeError):
            raise UsageError(f"malformed config {path}: bad value for {key}: {raw!r}") from None
        out["lambda_" if key == "lambda" else key] = value
    return out


def resolve(args) -> dict:
    """Merge flags over config-file values over defaults."""
    flags = {k: v for k, v in vars(args).items() if v is not None}
    conf = load_config(args.config) if args.config else {}
    known = set(vars(args)) - {"command", "kind", "config"}
    unknown = set(conf) - known
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(sorted(unknown))}")
    if "delta" in flags and ("lambda_" in flags or "n_width" in flags):
        raise UsageError("--delta cannot be combined with --lambda/--n-width")
    if "delta" in flags:
        conf.pop("lambda_", None)
        conf.pop("n_width", None)
    if "lambda_" in flags or "n_width" in flags:
        conf.pop("delta", None)
    merged = {k: v for k, v in DEFAULTS.items() if k in known}
    merged.update(conf)
    merged.update(flags)
    merged.pop("config", None)
    if "delta" in merged and ("lambda_" in merged or "n_width" in merged):
        raise UsageError("config gives delta together with lambda/n_width")
    return merged


def params_from(opts):
    if "delta" in opts:
        return make_params_from_delta(opts["delta"])
    if "lambda_" in opts or "n_width" in opts:
        if "lambda_" not in opts or "n_width" not in opts:
            raise UsageError("--lambda and --n-width must be given together")
        return make_params(opts["lambda_"], opts["n_width"])
    raise UsageError("give --delta or --lambda with --n-width")


def _experiment(opts, p, metric, options=None):
    cfg = montecarlo.ExperimentConfig(
        params=p, replicates=opts["replicates"], seed=opts["seed"], eta=opts["eta"],
        cap=opts["cap"], metric=metric, options=options or {}, out=opts.get("out"),
        fmt=opts["format"], workers=opts["workers"])
    return cfg.validate()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _emit(obj):
    print(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


def cmd_params(opts):
    _emit(params_from(opts).as_dict())


def cmd_oracle(opts, kind):
    p = params_from(opts)
    d = p.delta
    if kind == "l2":
        tol = opts.get("tol", 1e-8)
        value = chain.l_squared_integral(p, tol)
        _emit({"kind": "l2", "delta": d, "value": value, "tol_rel": tol,
               "ratio_to_32_3_delta3": value / (32.0 / 3.0 * d ** 3)})
    elif kind == "drift":
        a = opts.get("a", math.pi)
        tol = opts.get("tol", 1e-10)
        _emit({"kind": "drift", "delta": d, "a": a, "value": chain.drift_quadrature(a, p, tol),
               "tol_abs": tol})
    elif kind == "m2":
        a = opts.get("a", math.pi)
        tol = opts.get("tol", 1e-8)
        value = chain.second_moment_quadrature(a, p, tol)
        _emit({"kind": "m2", "delta": d, "a": a, "value": value, "tol_rel": tol,
               "ratio_to_delta3": value / d ** 3})
    else:
        a = opts.get("a", d / 10.0)
        value = chain.halving_measure(a, p)
        _emit({"kind": "halving", "delta": d, "a": a, "value": value,
               "lower_bound": (d - a) / (2.0 * math.pi)})


def _summary(res, **extra):
    out = res.summary()
    out.update(extra)
    return out


def cmd_chain(opts):
    p = params_from(opts)
    mode = opts.get("mode", "hitting")
    if mode == "hitting":
        x0 = opts.get("x0", math.pi)
        low, high = opts.get("low", math.pi / 3), opts.get("high", 5 * math.pi / 3)
        cfg = _experiment(opts, p, "hitting", {"x0": x0, "low": low, "high": high})
        grid = np.linspace(low, high, 33)
        m2 = [chain.second_moment_quadrature(a, p) for a in grid]
        span = (x0 - low) * (high - x0)
        res = montecarlo.run_experiment(cfg)
        _emit(_summary(res, predicted_low=span / max(m2), predicted_high=span / min(m2)))
    elif mode == "sigma-star":
        cfg = _experiment(opts, p, "sigma_star", {"length": opts.get("length", p.delta / 10)})
        _emit(_summary(montecarlo.run_experiment(cfg), bound=p.delta ** -2))
    else:
        cfg = _experiment(opts, p, "chain_moments",
                          {"x0": opts.get("x0", math.pi), "k": opts.get("steps", 1000)})
        _emit(_summary(montecarlo.run_experiment(cfg)))


def cmd_simulate(opts):
    p = params_from(opts)
    cfg = _experiment(opts, p, opts.get("metric", "t_r"))
    _emit(_summary(montecarlo.run_experiment(cfg)))


def cmd_sweep(opts):
    deltas = opts.get("deltas", [0.05, 0.1, 0.2])
    metric = opts.get("metric", "t_r")
    placeholder = make_params_from_delta(deltas[0])
    cfg = _experiment(opts, placeholder, metric)
    fit = montecarlo.sweep_scaling(cfg, deltas, min_certified=min(200, cfg.replicates))
    _emit({"metric": metric, "slope": fit.slope, "intercept": fit.intercept,
           "deltas": fit.deltas, "means": fit.means, "residuals": fit.residuals,
           "stats": [asdict(s) for s in fit.stats]})


def cmd_tail(opts):
    p = params_from(opts)
    cfg = _experiment(opts, p, "t_r")
    fit = montecarlo.tail_estimate(cfg, min_certified=min(5000, cfg.replicates))
    _emit({"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
           "quantiles": fit.quantiles, "grid": fit.grid, "survival": fit.survival})


def cmd_trees(opts):
    p = params_from(opts)
    if "decay" in opts:
        cfg = _experiment(opts, p, "n_trees")
        dec = montecarlo.zero_mass_decay(cfg, opts["decay"])
        out = {"k": dec.k, "mean": dec.mean, "stderr": dec.stderr, "expected": dec.expected,
               "rate": dec.rate, "rate_stderr": dec.rate_stderr,
               "expected_rate": dec.expected_rate}
        if opts.get("out"):
            atomic_write_text(opts["out"], json.dumps(_jsonable(out), indent=2) + "\n")
        _emit(out)
        return
    cfg = _experiment(opts, p, "n_trees")
    _emit(_summary(montecarlo.run_experiment(cfg), expected=math.pi / p.a_delta))


def cmd_degree(opts):
    p = params_from(opts)
    width = opts.get("width", 1.0)
    cfg = _experiment(opts, p, "degree", {"width": width})
    _emit(_summary(montecarlo.run_experiment(cfg), expected=width))


def cmd_render(opts):
    p = params_from(opts)
    if not opts.get("out"):
        raise UsageError("render needs --out")
    rec = process.simulate(p, opts.get("eta", marked.DEFAULT_ETA), opts.get("seed", 0),
                           render=True, cap=opts.get("cap", marked.DEFAULT_CAP),
                           render_limit=opts.get("particles", 500))
    process.render_svg(rec, opts["out"])
    _emit({"out": opts["out"], "spines": len(rec.spines), "t_r": rec.t_r,
           "t_tree": rec.t_tree, "n_trees": rec.n_trees, "upsilon": rec.upsilon,
           "omega": rec.omega, "certified": rec.certified})


COMMANDS = {
    "params": cmd_params, "chain": cmd_chain, "simulate": cmd_simulate, "sweep": cmd_sweep,
    "tail": cmd_tail, "trees": cmd_trees, "degree": cmd_degree, "render": cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = resolve(args)
        echo = {k if k != "lambda_" else "lambda": v for k, v in sorted(opts.items())}
        print(json.dumps({"command": args.command, **_jsonable(echo)}, sort_keys=True),
              file=sys.stderr)
        if args.command == "oracle":
            cmd_oracle(opts, args.kind)
        else:
            COMMANDS[args.command](opts)
    except (UsageError, ParameterError) as exc:
        print(f"chlsim: error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("chlsim: interrupted; partial records kept", file=sys.stderr)
        return 130
    except (montecarlo.ExperimentError, chain.QuadratureError, OSError) as exc:
        print(f"chlsim: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
