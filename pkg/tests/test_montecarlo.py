import json
import math

import numpy as np
import pytest

from chlsim import montecarlo as mc
from chlsim.geometry import ParameterError, make_params_from_delta
from chlsim.seeding import replicate_seed


def _cfg(**kw):
    base = dict(params=make_params_from_delta(0.3), replicates=40, seed=17, metric="n_trees")
    base.update(kw)
    return mc.ExperimentConfig(**base)


def test_replicate_seeds_are_distinct_and_stable():
    seeds = [replicate_seed(5, i) for i in range(1000)]
    assert len(set(seeds)) == 1000
    assert seeds == [replicate_seed(5, i) for i in range(1000)]
    assert replicate_seed(6, 0) != seeds[0]


def test_config_validation():
    with pytest.raises(ParameterError):
        _cfg(metric="nope").validate()
    with pytest.raises(ParameterError):
        _cfg(replicates=0).validate()
    with pytest.raises(ParameterError):
        _cfg(fmt="xml").validate()
    assert _cfg().echo()["params"]["delta"] == 0.3


@pytest.mark.parametrize("metric", mc.METRICS)
def test_every_metric_runs(metric):
    opts = {"k": 20} if metric == "chain_moments" else {}
    if metric == "hitting":
        opts = {"low": 2.5, "high": 3.8, "x0": math.pi}
    res = mc.run_experiment(_cfg(metric=metric, replicates=4, options=opts))
    assert len(res.records) == 4 and res.stats.count == 4
    assert all(math.isfinite(r.value) for r in res.records)


def test_outputs_and_summary(tmp_path):
    out = tmp_path / "runs" / "trees.csv"
    res = mc.run_experiment(_cfg(out=str(out)))
    text = out.read_text()
    lines = text.splitlines()
    assert lines[0] == ",".join(mc.COLUMNS) and len(lines) == 41
    assert text == mc.format_records(res.records)
    summary = json.loads(mc.summary_path(out).read_text())
    for key in ("mean", "variance", "stderr", "count", "ci95_low", "ci95_high", "cap_hits",
                "residual_eta", "requested", "partial"):
        assert key in summary
    assert summary["count"] == 40 and summary["partial"] is False
    assert not [p for p in out.parent.iterdir() if p.name.endswith(".tmp")]


def test_json_lines_output(tmp_path):
    out = tmp_path / "trees.jsonl"
    mc.run_experiment(_cfg(out=str(out), fmt="json", replicates=5))
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["replicate"] for r in rows] == list(range(5))
    assert set(rows[0]) == set(mc.COLUMNS)


def test_worker_count_does_not_change_records():
    a = mc.run_experiment(_cfg(workers=1))
    b = mc.run_experiment(_cfg(workers=3))
    assert mc.format_records(a.records) == mc.format_records(b.records)


def test_uncertified_runs_fail_loudly(tmp_path):
    cfg = _cfg(params=make_params_from_delta(0.05), cap=20, replicates=5,
               out=str(tmp_path / "x.csv"))
    with pytest.raises(mc.ExperimentError):
        mc.run_experiment(cfg)
    summary = json.loads(mc.summary_path(tmp_path / "x.csv").read_text())
    assert summary["cap_hits"] == 5 and summary["count"] == 0
    res = mc.run_experiment(cfg, strict=False)
    assert res.stats.cap_hits == 5


def test_interrupt_keeps_partial_records(tmp_path, monkeypatch):
    real = mc.run_replicate

    def flaky(cfg, i):
        if i == 3:
            raise KeyboardInterrupt
        return real(cfg, i)

    monkeypatch.setattr(mc, "run_replicate", flaky)
    out = tmp_path / "part.csv"
    with pytest.raises(KeyboardInterrupt):
        mc.run_experiment(_cfg(out=str(out), replicates=10))
    assert len(out.read_text().splitlines()) == 4
    assert json.loads(mc.summary_path(out).read_text())["partial"] is True


def test_summary_stats_coverage():
    rng = np.random.default_rng(0)
    hits = sum(mc.SummaryStats.of(rng.normal(2.0, 1.0, 400)).covers(2.0) for _ in range(1000))
    assert 930 <= hits <= 970


def test_fit_tail_recovers_exponential_rate():
    v = np.random.default_rng(1).exponential(2.0, 20_000)
    fit = mc.fit_tail(v)
    assert fit.slope == pytest.approx(-0.5, rel=0.05)
    assert fit.r2 > 0.99
    assert fit.survival[0] == 1.0 and np.all(np.diff(fit.survival) <= 0)


def test_sweep_needs_a_grid():
    with pytest.raises(ParameterError):
        mc.sweep_scaling(_cfg(), [0.1, 0.2])


def test_sweep_recovers_tree_count_scaling(tmp_path):
    cfg = _cfg(replicates=200, out=str(tmp_path / "s.csv"))
    fit = mc.sweep_scaling(cfg, [0.2, 0.3, 0.45])
    # mean tree count is pi / a_delta ~ pi / (2 delta)
    assert fit.slope == pytest.approx(-1.0, abs=0.15)
    assert len(list(tmp_path.glob("s.delta*.csv"))) == 3


def test_zero_mass_decay_small():
    dec = mc.zero_mass_decay(_cfg(params=make_params_from_delta(0.2), replicates=200), steps=10)
    assert dec.k.shape == (11,) and dec.mean[0] == pytest.approx(2 * math.pi)
    assert abs(dec.rate - dec.expected_rate) < 4 * dec.rate_stderr
