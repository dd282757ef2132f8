import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridts.calculus import Signal, restrict_signal
from hybridts.hybrid import (
    GapPolicy,
    HybridSystem,
    SolverConfig,
    SolverError,
    is_extension,
    solve,
    validate,
)
from hybridts.scenarios import ball_closed_form, bouncing_ball_system
from hybridts.timescale import GeneralizedTimeScale as G


def ball(theta=0.5, g=2.0, zeno=False):
    return bouncing_ball_system(g=g, theta=theta, zeno_passage=zeno)


def ball_cfg(**kw):
    base = dict(step=1e-3, event_tol=1e-10, horizon=2.5, max_jumps=10)
    base.update(kw)
    return SolverConfig(**base)


@pytest.fixture(scope="module")
def ball_sig():
    return solve(ball(), [0.0, 1.0], ball_cfg())


# ---- config ---------------------------------------------------------------------------

def test_config_json_roundtrip():
    cfg = SolverConfig(step=1e-4, gap_policy=GapPolicy("geometric", r=0.25), max_jumps=7)
    back = SolverConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        SolverConfig.from_dict({"stepp": 1e-3})


@pytest.mark.parametrize("kw", [{"step": 0.0}, {"zeno_run": 1}, {"event_tol": -1.0}])
def test_config_invariants(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


@pytest.mark.parametrize("r", [0.0, 1.0, 1.5])
def test_geometric_ratio_bounds(r):
    with pytest.raises(ValueError):
        GapPolicy("geometric", r=r)


def test_gap_policy_budget():
    p = GapPolicy("geometric", r=0.5)
    for n in range(0, 30):
        assert p.used(n) + p.remaining(n) == pytest.approx(1.0, abs=1e-15)


# ---- solve -------------------------------------------------------------------------------

def test_ball_first_impact(ball_sig):
    assert ball_sig.meta["jump_times"][0] == pytest.approx(1.0, abs=1e-9)


def test_ball_velocity_ratio(ball_sig):
    times = ball_sig.meta["jump_times"]
    v_plus = [ball_sig.sample(t + 1.0)[1] for t in times]  # constant-1 gaps
    for a, b in zip(v_plus, v_plus[1:]):
        assert b / a == pytest.approx(0.5, abs=1e-6)


def test_ball_impacts_match_closed_form(ball_sig):
    cf = ball_closed_form(0.0, 1.0, 2.0, 0.5, 10)
    # scale time of the n-th impact = flow time + (n - 1) unit gaps
    flow_times = [t - k for k, t in enumerate(ball_sig.meta["jump_times"])]
    assert np.max(np.abs(np.array(flow_times) - cf["t"][: len(flow_times)])) <= 1e-10 + 1e-6


def test_constant_gap_policy_is_unit_spacing(ball_sig):
    dom = ball_sig.dom
    for t in dom.gap_points(dom.ini(), dom.fin()):
        assert dom.sigma(t) == pytest.approx(t + 1.0, abs=1e-15)


def test_geometric_gap_policy():
    cfg = ball_cfg(gap_policy=GapPolicy("geometric", r=0.5))
    sig = solve(ball(), [0.0, 1.0], cfg)
    dom = sig.dom
    gaps = [dom.sigma(t) - t for t in dom.gap_points(dom.ini(), dom.fin())]
    assert len(gaps) == 10
    for n, g in enumerate(gaps, start=1):
        assert g == pytest.approx(0.5 ** n, rel=1e-12)
        assert g <= 0.5  # sigma(t) <= t + M with M = r


def test_flow_only_constant():
    sys = HybridSystem(lambda x: True, lambda x: False, lambda x: np.zeros_like(x), lambda x: x)
    sig = solve(sys, [1.5, -2.0], SolverConfig(step=0.1, horizon=3.0))
    assert len(sig.dom.segments) == 1
    assert sig.dom.fin() == pytest.approx(3.0)
    assert np.all(sig.x == np.array([1.5, -2.0]))
    assert sig.meta["reason"] == "horizon"


def test_rk4_accuracy_on_exponential():
    sys = HybridSystem(lambda x: True, lambda x: False, lambda x: -x, lambda x: x)
    sig = solve(sys, [1.0], SolverConfig(step=1e-2, horizon=2.0))
    assert np.max(np.abs(sig.x[:, 0] - np.exp(-sig.t))) < 1e-9


def test_initial_state_outside_raises():
    sys = HybridSystem(lambda x: x[0] >= 0, lambda x: False, lambda x: x, lambda x: x)
    with pytest.raises(SolverError):
        solve(sys, [-1.0])


def test_exit_terminates():
    # drifts out of C = {x <= 1} with an empty jump set
    sys = HybridSystem(lambda x: x[0] <= 1.0, lambda x: False, lambda x: np.ones(1), lambda x: x)
    sig = solve(sys, [0.0], SolverConfig(step=0.3, horizon=5.0))
    assert sig.meta["reason"] == "exit"
    assert sig.x[-1, 0] <= 1.0 and sig.x[-1, 0] == pytest.approx(1.0, abs=1e-9)


def test_max_jumps_terminates():
    sig = solve(ball(), [0.0, 1.0], ball_cfg(max_jumps=3, horizon=10.0))
    assert sig.meta["reason"] == "max_jumps" and sig.meta["jumps"] == 3


def test_zeno_detected_without_passage():
    cfg = SolverConfig(step=1e-3, horizon=5.0, gap_policy=GapPolicy("geometric", r=0.5))
    sig = solve(ball(), [0.0, 1.0], cfg)
    assert sig.meta["reason"] == "zeno"
    assert sig.meta["zeno_closure"] is None


def test_zeno_passage_reaches_rest():
    cfg = SolverConfig(step=1e-3, horizon=3.0, gap_policy=GapPolicy("geometric", r=0.5))
    sig = solve(ball(zeno=True), [0.0, 1.0], cfg)
    closure = sig.meta["zeno_closure"]
    assert closure is not None and closure <= sig.dom.fin()
    after = sig.t >= closure
    assert np.all(sig.x[after] == 0.0)
    assert sig.meta["reason"] == "horizon"


def test_determinism():
    a = solve(ball(), [0.0, 1.0], ball_cfg())
    b = solve(ball(), [0.0, 1.0], ball_cfg())
    assert np.array_equal(a.t, b.t) and np.array_equal(a.x, b.x)
    assert a.dom == b.dom


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(-1.0, 2.0), st.floats(0.1, 0.9))
def test_ball_event_accuracy(h0, v0, theta):
    if h0 == 0.0 and v0 <= 0.0:
        return  # starts in D with nothing to fall from
    g = 2.0
    sig = solve(ball(theta, g), [h0, v0], ball_cfg(horizon=12.0, max_jumps=4))
    cf = ball_closed_form(h0, v0, g, theta, 4)
    flow_times = [t - k for k, t in enumerate(sig.meta["jump_times"])]
    n = len(flow_times)
    assert n >= 1
    assert np.max(np.abs(np.array(flow_times) - cf["t"][:n])) <= 1e-10 + 1e-6


# ---- validate --------------------------------------------------------------------------------

def test_validate_ball_output(ball_sig):
    step, lipschitz = 1e-3, 2.0
    rep = validate(ball(), ball_sig, tol=10 * step * lipschitz)
    assert rep.ok, (rep.flow_violations[:3], rep.jump_violations[:3])


def test_validate_flags_jump_outside_d():
    dom = G.from_pairs([[0, 1], [2, 3]])
    sig = Signal(dom, [[0.0, 1.0], [2.0, 3.0]], [[[1.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [1.0, 0.0]]])
    sys = HybridSystem(lambda x: True, lambda x: x[0] <= 0.0, lambda x: np.zeros(2), lambda x: x)
    rep = validate(sys, sig, tol=1e-9)
    assert len(rep.jump_violations) == 1 and not rep.flow_violations


def test_validate_constant_signal_against_unit_flow():
    g = np.linspace(0, 1, 11)
    sig = Signal(G.from_pairs([[0, 1]]), [g], [np.zeros_like(g)])
    sys = HybridSystem(lambda x: True, lambda x: False, lambda x: np.ones(1), lambda x: x)
    rep = validate(sys, sig, tol=0.5)
    assert len(rep.flow_violations) == 10  # every flow point but Fin
    assert all(r == pytest.approx(1.0) for _, r in rep.flow_violations)
    assert rep.max_flow_residual == pytest.approx(1.0)


def test_validate_initial_condition():
    sig = Signal(G.points([0.0]), [[0.0]], [[-1.0]])
    sys = HybridSystem(lambda x: x[0] >= 0, lambda x: False, lambda x: x, lambda x: x)
    assert not validate(sys, sig, 1e-9).initial_ok


# ---- is_extension -------------------------------------------------------------------------------

def test_extension_of_itself(ball_sig):
    assert is_extension(ball_sig, ball_sig, 1e-12)


def test_zeno_prefix_is_extension():
    cfg = SolverConfig(step=1e-3, horizon=3.0, gap_policy=GapPolicy("geometric", r=0.5))
    full = solve(ball(zeno=True), [0.0, 1.0], cfg)
    t1 = full.meta["jump_times"][0]
    assert t1 == pytest.approx(1.0, abs=1e-9)
    assert is_extension(restrict_signal(full, 0.0, t1), full, 1e-9)


def test_extension_rejects_value_mismatch():
    g = np.linspace(0, 1, 5)
    a = Signal(G.from_pairs([[0, 1]]), [g], [np.zeros(5)])
    vals = np.zeros(5)
    vals[2] = 2e-6
    b = a.with_values(vals)
    assert not is_extension(a, b, 1e-6)
    assert is_extension(a, b, 3e-6)


def test_extension_rejects_non_subinterval():
    a = Signal(G.points([0.0, 2.0]), [[0.0], [2.0]], [[0.0], [0.0]])
    b = Signal(G.from_pairs([[0, 3]]), [[0.0, 3.0]], [[0.0, 0.0]])
    assert not is_extension(a, b, math.inf)
