import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from chlsim.geometry import TWO_PI, ParameterError, forward_map, make_params, make_params_from_delta
from chlsim.marked import RunRecord, track_run
from chlsim.process import (
    arrival_times,
    forward_map_array,
    grow_spines,
    render_svg,
    sample_event_stream,
    simulate,
)


def test_event_stream_shape_and_order():
    p = make_params(1.0, 4.0)
    ev = sample_event_stream(p, 100, seed=3)
    assert [e.index for e in ev] == list(range(1, 101))
    assert all(0 <= e.position < TWO_PI for e in ev)
    assert all(a.time < b.time for a, b in zip(ev, ev[1:]))
    with pytest.raises(ParameterError):
        sample_event_stream(p, 0)


def test_arrival_time_mean():
    p = make_params(1.0, 4.0)
    k = 50
    ts = np.array([arrival_times(p, k, seed=s)[-1] for s in range(4000)])
    expected = k / (TWO_PI * p.n_width)
    assert abs(ts.mean() - expected) < 4 * ts.std(ddof=1) / math.sqrt(ts.size)


def test_positions_are_uniform():
    ev = sample_event_stream(make_params_from_delta(0.1), 20_000, seed=1)
    counts, _ = np.histogram([e.position for e in ev], bins=20, range=(0, TWO_PI))
    assert stats.chisquare(counts).pvalue > 1e-4


@settings(max_examples=100, deadline=None)
@given(st.floats(-7, 7), st.floats(0, 4), st.floats(0, TWO_PI), st.floats(1e-3, 0.9))
def test_vectorized_map_matches_scalar(re, im, x, d):
    p = make_params_from_delta(d)
    z = complex(re, im)
    w = forward_map_array(np.array([z]), x, p)[0]
    assert w == pytest.approx(forward_map(z, x, p), abs=1e-9)
    assert w.imag >= 0


def test_single_slit_spine():
    p = make_params_from_delta(0.2)
    (spine,) = grow_spines(p, [1.5], samples=8)
    assert spine.color == 1
    assert np.allclose(spine.samples.real, 1.5)
    assert spine.samples[-1].imag == pytest.approx(p.slit_height)


def test_spines_stay_in_upper_half_plane():
    p = make_params_from_delta(0.3)
    xs = np.random.default_rng(4).uniform(0, TWO_PI, 200)
    spines = grow_spines(p, xs)
    assert len(spines) == 200
    assert min(float(s.samples.imag.min()) for s in spines) >= 0


def test_simulate_couples_counts_and_times():
    p = make_params_from_delta(0.3)
    rec = simulate(p, seed=12)
    base = track_run(p, seed=12)
    assert (rec.t_r, rec.t_tree, rec.steps) == (base.t_r, base.t_tree, base.steps)
    ts = arrival_times(p, max(rec.t_r, rec.t_tree), seed=12)
    assert rec.upsilon == ts[rec.t_r - 1] and rec.omega == ts[rec.t_tree - 1]
    assert not rec.spines


def test_render_writes_one_polyline_per_particle(tmp_path):
    p = make_params_from_delta(0.4)
    rec = simulate(p, seed=2, render=True, render_limit=50)
    out = tmp_path / "pic.svg"
    text = render_svg(rec, out)
    assert out.read_text() == text
    assert text.count("<polyline") == min(rec.steps, 50)
    assert render_svg(rec, tmp_path / "again.svg") == text


def test_render_empty_record(tmp_path):
    rec = RunRecord(1, 1, 0, 0, np.zeros(1, dtype=np.int64), 0, False, 0.0, 0.0)
    text = render_svg(rec, tmp_path / "empty.svg")
    assert text.startswith("<?xml") and "<polyline" not in text
