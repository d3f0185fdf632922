"""Replicated experiments, summaries, and the standard analyses.

Replicate ``i`` of an experiment with master seed ``s`` runs on
``replicate_seed(s, i)``, so output does not depend on scheduling.  Results
are consumed in replicate order and streamed to a temporary file that is
renamed into place when the experiment ends (or is interrupted, in which case
the summary is marked partial).
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import _kernels as K
from ._io import atomic_write_text
from .chain import run_until_exit, sigma_star
from .geometry import TWO_PI, ParameterError, SlitParams, TorusInterval
from .marked import DEFAULT_CAP, DEFAULT_ETA, track_degree, track_run, zero_mass_path
from .process import simulate
from .seeding import replicate_seed

METRICS = ("t_r", "t_tree", "n_trees", "degree", "upsilon", "omega",
           "hitting", "sigma_star", "chain_moments")
COLUMNS = ("replicate", "seed", "delta", "lambda", "n_width", "metric", "value",
           "certified", "residual", "steps", "wall_ms")
MAX_UNCERTIFIED = 0.01


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment at fixed parameters.

    ``options`` carries metric arguments: ``low``, ``high``, ``x0`` for
    ``hitting``; ``length`` for ``sigma_star``; ``x0`` and ``k`` for
    ``chain_moments``; ``width`` for ``degree``.
    """

    params: SlitParams
    replicates: int
    seed: int = 0
    eta: float = DEFAULT_ETA
    cap: int = DEFAULT_CAP
    metric: str = "n_trees"
    options: dict = field(default_factory=dict)
    out: str | None = None
    fmt: str = "csv"
    workers: int = 1
    timing: bool = False

    def validate(self):
        if self.metric not in METRICS:
            raise ParameterError(f"unknown metric {self.metric!r}; choose from {', '.join(METRICS)}")
        if self.replicates < 1:
            raise ParameterError("replicates must be at least 1")
        if not 0.0 < self.eta < 1.0:
            raise ParameterError(f"eta must lie in (0, 1), got {self.eta!r}")
        if self.cap < 1:
            raise ParameterError("cap must be at least 1")
        if self.workers < 1:
            raise ParameterError("workers must be at least 1")
        if self.fmt not in ("csv", "json"):
            raise ParameterError(f"format must be csv or json, got {self.fmt!r}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        return self

    def echo(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "replicates": self.replicates,
            "seed": self.seed,
            "eta": self.eta,
            "cap": self.cap,
            "metric": self.metric,
            "options": dict(self.options),
            "out": self.out,
            "format": self.fmt,
            "workers": self.workers,
        }


@dataclass(frozen=True)
class Record:
    replicate: int
    seed: int
    delta: float
    lambda_: float
    n_width: float
    metric: str
    value: float
    certified: bool
    residual: float
    steps: int
    wall_ms: float | None = None

    def row(self) -> list:
        return [self.replicate, self.seed, repr(self.delta), repr(self.lambda_),
                repr(self.n_width), self.metric, repr(self.value), int(self.certified),
                repr(self.residual), self.steps,
                "" if self.wall_ms is None else f"{self.wall_ms:.3f}"]

    def as_json(self) -> dict:
        return dict(zip(COLUMNS, [self.replicate, self.seed, self.delta, self.lambda_,
                                  self.n_width, self.metric, self.value, self.certified,
                                  self.residual, self.steps, self.wall_ms]))


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    variance: float
    stderr: float
    count: int
    ci95_low: float
    ci95_high: float
    cap_hits: int
    residual_eta: float

    @classmethod
    def of(cls, values, cap_hits=0, residual_eta=0.0) -> "SummaryStats":
        v = np.asarray(values, dtype=float)
        n = v.size
        mean = float(v.mean()) if n else math.nan
        var = float(v.var(ddof=1)) if n > 1 else math.nan
        se = math.sqrt(var / n) if n > 1 else math.nan
        return cls(mean, var, se, n, mean - 1.96 * se, mean + 1.96 * se, cap_hits, residual_eta)

    def covers(self, value: float) -> bool:
        return self.ci95_low <= value <= self.ci95_high


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    stats: SummaryStats
    records: list
    partial: bool = False

    def values(self, certified_only=True) -> np.ndarray:
        return np.array([r.value for r in self.records if r.certified or not certified_only])

    def summary(self) -> dict:
        out = asdict(self.stats)
        out["requested"] = self.config.replicates
        out["partial"] = self.partial
        out["config"] = self.config.echo()
        return out


# ---------------------------------------------------------------------------
# replicates


def run_replicate(cfg: ExperimentConfig, index: int) -> Record:
    p = cfg.params
    seed = replicate_seed(cfg.seed, index)
    opts = cfg.options
    started = time.perf_counter()
    metric = cfg.metric
    if metric in ("t_r", "t_tree", "n_trees"):
        rec = track_run(p, cfg.eta, seed, cfg.cap)
        value = {"t_r": rec.t_r, "t_tree": rec.t_tree, "n_trees": rec.n_trees}[metric]
        certified, residual, steps = rec.certified, rec.residual, rec.steps
    elif metric in ("upsilon", "omega"):
        rec = simulate(p, cfg.eta, seed, cap=cfg.cap)
        value = rec.upsilon if metric == "upsilon" else rec.omega
        certified, residual, steps = rec.certified, rec.residual, rec.steps
    elif metric == "degree":
        s = track_degree(p, cfg.eta, seed, cfg.cap, opts.get("width", 1.0))
        value, certified, residual, steps = s.value, s.certified, s.residual, s.steps
    elif metric == "hitting":
        low = opts.get("low", math.pi / 3)
        high = opts.get("high", 5 * math.pi / 3)
        x0 = opts.get("x0", math.pi)
        h = run_until_exit(TorusInterval(0.0, x0), low, high, p, seed, cfg.cap)
        value, certified, residual, steps = h.steps, not h.capped, 0.0, h.steps
    elif metric == "sigma_star":
        length = opts.get("length", p.delta / 10.0)
        h = sigma_star(TorusInterval(0.0, length), p, seed, cfg.cap)
        value, certified, residual, steps = h.steps, not h.capped, 0.0, h.steps
    else:  # chain_moments: length after k steps
        x0 = opts.get("x0", math.pi)
        k = int(opts.get("k", 1000))
        xs = np.random.default_rng(seed).uniform(0.0, TWO_PI, k)
        lengths = np.empty(k)
        K.chain_lengths(0.0, x0, xs, p.delta, lengths)
        value, certified, residual, steps = float(lengths[-1]), True, 0.0, k
    wall = (time.perf_counter() - started) * 1e3 if cfg.timing else None
    return Record(index, seed, p.delta, p.lambda_, p.n_width, metric, value,
                  bool(certified), float(residual), int(steps), wall)


class _Sink:
    """Streams records in replicate order to a temp file renamed on close."""

    def __init__(self, path, fmt):
        self.path = Path(path) if path else None
        self.fmt = fmt
        self.fh = None
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, self.tmp = tempfile.mkstemp(dir=self.path.parent, prefix=f".{self.path.name}.",
                                        suffix=".tmp")
        self.fh = os.fdopen(fd, "w", encoding="utf-8", newline="")
        if fmt == "csv":
            self.writer = csv.writer(self.fh, lineterminator="\n")
            self.writer.writerow(COLUMNS)

    def write(self, rec: Record):
        if self.fh is None:
            return
        if self.fmt == "csv":
            self.writer.writerow(rec.row())
        else:
            self.fh.write(json.dumps(rec.as_json(), sort_keys=True) + "\n")
        self.fh.flush()

    def close(self):
        if self.fh is None:
            return
        self.fh.close()
        os.replace(self.tmp, self.path)


def summary_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".summary.json")


def format_records(records, fmt="csv") -> str:
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow(r.row())
    else:
        for r in records:
            buf.write(json.dumps(r.as_json(), sort_keys=True) + "\n")
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, strict: bool = True) -> ExperimentResult:
    """Run all replicates, persist records and summary when ``cfg.out`` is set.

    Raises ExperimentError (after writing) if more than 1% of replicates
    ended uncertified and ``strict`` is set.
    """
    cfg.validate()
    sink = _Sink(cfg.out, cfg.fmt)
    records = []
    partial = False
    pool = ThreadPoolExecutor(max_workers=cfg.workers)
    try:
        for rec in pool.map(lambda i: run_replicate(cfg, i), range(cfg.replicates)):
            records.append(rec)
            sink.write(rec)
    except KeyboardInterrupt:
        partial = True
    finally:
        pool.shutdown(wait=not partial, cancel_futures=partial)
        sink.close()
    good = [r.value for r in records if r.certified]
    failures = len(records) - len(good)
    stats_ = SummaryStats.of(good, failures, cfg.eta)
    result = ExperimentResult(cfg, stats_, records, partial)
    if cfg.out:
        atomic_write_text(summary_path(cfg.out), json.dumps(result.summary(), indent=2,
                                                             sort_keys=True) + "\n")
    if partial:
        raise KeyboardInterrupt
    if strict and failures > MAX_UNCERTIFIED * cfg.replicates:
        raise ExperimentError(f"{failures} of {cfg.replicates} replicates ended uncertified "
                              f"(cap {cfg.cap})")
    return result


# ---------------------------------------------------------------------------
# analyses


@dataclass
class ScalingFit:
    deltas: np.ndarray
    means: np.ndarray
    slope: float
    intercept: float
    residuals: np.ndarray
    stats: list


def sweep_scaling(cfg: ExperimentConfig, deltas, make=None, min_certified: int = 200) -> ScalingFit:
    """Least-squares slope of log(mean metric) against log(delta)."""
    from .geometry import make_params_from_delta
    deltas = np.asarray(sorted(deltas), dtype=float)
    if deltas.size < 3:
        raise ParameterError("a scaling sweep needs at least 3 grid points")
    make = make or make_params_from_delta
    per = []
    for k, d in enumerate(deltas):
        out = None
        if cfg.out:
            base = Path(cfg.out)
            out = str(base.with_name(f"{base.stem}.delta{d:g}{base.suffix}"))
        res = run_experiment(replace(cfg, params=make(d), out=out))
        if res.stats.count < min_certified:
            raise ExperimentError(f"only {res.stats.count} certified replicates at delta={d:g}")
        per.append(res.stats)
    means = np.array([s.mean for s in per])
    x, y = np.log(deltas), np.log(means)
    slope, intercept = np.polyfit(x, y, 1)
    return ScalingFit(deltas, means, float(slope), float(intercept),
                      y - (slope * x + intercept), per)


@dataclass
class TailFit:
    grid: np.ndarray
    survival: np.ndarray
    slope: float
    intercept: float
    r2: float
    quantiles: tuple


def survival_table(values, grid) -> np.ndarray:
    v = np.sort(np.asarray(values, dtype=float))
    return 1.0 - np.searchsorted(v, grid, side="left") / v.size


def fit_tail(values, quantiles=(0.5, 0.95), grid_points: int = 64) -> TailFit:
    """Log-linear fit of the empirical survival function over a quantile window."""
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    grid = np.linspace(0.0, v[-1], grid_points)
    surv = survival_table(v, grid)
    lo, hi = np.quantile(v, quantiles)
    ranks = np.arange(n)
    sel = (v >= lo) & (v <= hi)
    xs = v[sel]
    ys = np.log(1.0 - ranks[sel] / n)
    fit = stats.linregress(xs, ys)
    return TailFit(grid, surv, float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2),
                   tuple(quantiles))


def tail_estimate(cfg: ExperimentConfig, min_certified: int = 5000) -> TailFit:
    """Tail of metric * delta^3 (particle-count units)."""
    res = run_experiment(cfg)
    if res.stats.count < min_certified:
        raise ExperimentError(f"tail fit needs {min_certified} certified replicates, "
                              f"got {res.stats.count}")
    return fit_tail(res.values() * cfg.params.delta ** 3)


@dataclass
class ZeroMassDecay:
    k: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    expected: np.ndarray
    rate: float
    rate_stderr: float

    @property
    def expected_rate(self) -> float:
        return float(np.log(self.expected[1] / self.expected[0]))


def expected_zero_mass(p: SlitParams, k) -> np.ndarray:
    return TWO_PI * (1.0 - p.a_delta / math.pi) ** np.asarray(k, dtype=float)


def zero_mass_decay(cfg: ExperimentConfig, steps: int = 50) -> ZeroMassDecay:
    """Mean zero mass after k = 0..steps particles, against the closed form."""
    if cfg.replicates < 2:
        raise ParameterError("zero-mass decay needs at least 2 replicates")
    p = cfg.params
    paths = np.array([zero_mass_path(p, steps, replicate_seed(cfg.seed, i))
                      for i in range(cfg.replicates)])
    k = np.arange(steps + 1)
    mean = paths.mean(axis=0)
    se = paths.std(axis=0, ddof=1) / math.sqrt(cfg.replicates)
    # per-step decay factor as a ratio of sums over independent replicates,
    # with a delta-method standard error
    num = paths[:, 1:].sum(axis=1)
    den = paths[:, :-1].sum(axis=1)
    ratio = num.sum() / den.sum()
    resid = num - ratio * den
    ratio_se = math.sqrt(resid.var(ddof=1) / cfg.replicates) / den.mean()
    rate = float(math.log(ratio))
    rate_se = float(ratio_se / ratio)
    return ZeroMassDecay(k, mean, se, expected_zero_mass(p, k), rate, rate_se)
