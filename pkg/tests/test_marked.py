import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chlsim.geometry import TWO_PI, ParameterError, make_params_from_delta
from chlsim.marked import (
    apply_particle,
    certify_domination,
    certify_tree_completion,
    color_length,
    domination_residual,
    new_config,
    num_colors,
    replay_steps,
    track_degree,
    track_run,
    zero_mass,
    zero_mass_path,
)


def _grow(p, xs):
    m = new_config()
    events = []
    for x in xs:
        m, ev = apply_particle(m, x, p)
        events.append(ev)
    return m, events


def test_empty_configuration():
    m = new_config()
    assert zero_mass(m) == TWO_PI and num_colors(m) == 0
    assert color_length(m, 1) == 0.0
    assert m.label_at(1.0) == 0


def test_first_particle_founds_color_one():
    p = make_params_from_delta(0.1)
    m, ev = apply_particle(new_config(), 2.0, p)
    assert ev.kind == "new_color" and ev.color == 1 and ev.step_index == 1
    assert color_length(m, 1) == pytest.approx(2 * p.a_delta, rel=1e-14)
    assert zero_mass(m) == pytest.approx(TWO_PI - 2 * p.a_delta, rel=1e-14)
    assert m.label_at(2.0) == 1 and m.label_at(2.0 + math.pi) == 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, TWO_PI, exclude_max=True), min_size=1, max_size=60),
       st.sampled_from([0.05, 0.2, 0.5]))
def test_configuration_invariants(xs, d):
    p = make_params_from_delta(d)
    m = new_config()
    rho = math.sqrt(1 - d * d)
    for x in xs:
        before_zero = zero_mass(m)
        label_before = m.label_at(x)
        m, ev = apply_particle(m, x, p)
        assert np.all(np.diff(m.pos) >= 0)
        assert m.masses().sum() == pytest.approx(TWO_PI, abs=1e-9)
        assert zero_mass(m) <= rho * before_zero + 1e-12
        if label_before == 0:
            assert ev.kind == "new_color" and ev.color == m.next_color - 1
        else:
            assert ev.kind == "hit_color" and ev.color == label_before
        # the particle's own slit arc carries the color it reported
        assert m.label_at(x) == ev.color


def test_hit_color_grows_only_that_color():
    p = make_params_from_delta(0.2)
    m, _ = _grow(p, [0.5, 3.5])
    before = m.masses()
    m2, ev = apply_particle(m, 0.5, p)
    after = m2.masses()
    assert ev.kind == "hit_color"
    grew = np.nonzero(after - before > 1e-12)[0]
    assert list(grew) == [ev.color]


def test_zero_mass_one_step_expectation():
    d = 0.2
    p = make_params_from_delta(d)
    m, _ = _grow(p, [0.4, 2.2, 4.9, 1.1])
    grid = (np.arange(20_000) + 0.5) * TWO_PI / 20_000
    mean = np.mean([zero_mass(apply_particle(m, x, p)[0]) for x in grid])
    assert mean == pytest.approx((1 - p.a_delta / math.pi) * zero_mass(m), rel=1e-6)


def test_zero_mass_path_matches_updates():
    p = make_params_from_delta(0.2)
    path = zero_mass_path(p, 30, seed=7)
    assert path[0] == TWO_PI and path.shape == (31,)
    assert np.all(np.diff(path) <= 1e-12)


def test_residuals():
    d = 0.1
    p = make_params_from_delta(d)
    assert domination_residual(TWO_PI - d ** 3, p) == pytest.approx(d / math.pi)
    assert domination_residual(TWO_PI, p) == 0.0
    m, _ = _grow(p, [1.0])
    assert certify_domination(m, 1, 1e-3, p) is None
    assert certify_tree_completion(m, 1e-3, p) is None
    with pytest.raises(ParameterError):
        certify_domination(m, 1, 0.0, p)


def test_certificates_stay_valid():
    p = make_params_from_delta(0.5)
    rec = track_run(p, seed=11)
    xs = np.random.default_rng(0).uniform(0, TWO_PI, 5)
    m, _ = _grow(p, np.random.default_rng(3).uniform(0, TWO_PI, 400))
    c = int(np.argmax(m.masses()[1:]) + 1)
    first = certify_domination(m, c, 1e-3, p)
    assert first is not None
    for x in xs:
        m, _ = apply_particle(m, x, p)
        later = certify_domination(m, c, 1e-3, p)
        assert later is not None and later.residual <= first.residual + 1e-15
    assert rec.certified


def test_track_run_record():
    p = make_params_from_delta(0.2)
    rec = track_run(p, seed=5)
    assert rec.certified and rec.status == "certified"
    assert rec.residual <= 1e-3
    assert 1 <= rec.t_r <= rec.steps and 1 <= rec.t_tree <= rec.steps
    assert rec.n_trees == rec.hits.shape[0] - 1 and rec.hits[1:].sum() + rec.n_trees == rec.steps
    assert 1 <= rec.dominant <= rec.n_trees
    again = track_run(p, seed=5)
    assert (again.t_r, again.t_tree, again.steps) == (rec.t_r, rec.t_tree, rec.steps)


def test_track_run_cap():
    rec = track_run(make_params_from_delta(0.05), seed=1, cap=50)
    assert not rec.certified and rec.status == "cap" and rec.steps == 50
    with pytest.raises(ParameterError):
        track_run(make_params_from_delta(0.05), cap=0)


def test_track_run_agrees_with_manual_updates():
    p = make_params_from_delta(0.3)
    rec = track_run(p, seed=9)
    from chlsim.seeding import POSITIONS, stream
    xs = stream(9, POSITIONS).uniform(0, TWO_PI, rec.steps)
    m, events = _grow(p, xs)
    assert num_colors(m) == rec.n_trees
    new = [e.step_index for e in events if e.kind == "new_color"]
    assert new[-1] == rec.t_tree
    others = [e.step_index for e in events if e.color != rec.dominant]
    assert max(others, default=1) == rec.t_r


def test_degree_sample():
    p = make_params_from_delta(0.2)
    s = track_degree(p, seed=2)
    assert s.certified and s.value >= 0 and s.residual <= 1e-3
    with pytest.raises(ParameterError):
        track_degree(p, width=100.0)


def test_replay_bound_dominates_t_r():
    p = make_params_from_delta(0.1)
    for seed in range(10):
        rep = replay_steps(p, seed=seed)
        rec = track_run(p, seed=seed)
        assert rep.certified
        assert rep.t_r == rec.t_r and rep.dominant == rec.dominant
        assert rep.bound >= rep.t_r
        assert rep.bound == 1 + sum(rep.hat) + sum(rep.tilde)
