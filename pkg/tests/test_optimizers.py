import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forecastbench.errors import ConfigError, DimensionError, NumericError
from forecastbench.optimizers import (OptimizerConfig, OptimizerState, adam_step, init_state,
                                      rmsprop_step, sgd_step, step)


def run(kind, theta0, n=10, **kw):
    cfg = OptimizerConfig(kind, **kw)
    params = [np.array([theta0])]
    state = init_state(params, cfg)
    for _ in range(n):
        params, state = step(params, [2.0 * params[0]], state, cfg)
    return params[0][0], state


# plain-float oracles of the update rules on f(theta) = theta**2

def sgd_oracle(theta, lr, n):
    for _ in range(n):
        theta = theta - lr * (2.0 * theta)
    return theta


def rmsprop_oracle(theta, lr, rho, eps, n):
    v = 0.0
    for _ in range(n):
        g = 2.0 * theta
        v = rho * v + (1 - rho) * g * g
        theta = theta - lr * g / (math.sqrt(v) + eps)
    return theta


def adam_oracle(theta, lr, b1, b2, eps, n):
    m = v = 0.0
    for t in range(1, n + 1):
        g = 2.0 * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        theta = theta - lr * mh / (math.sqrt(vh) + eps)
    return theta


def test_defaults():
    assert OptimizerConfig("sgd").lr == 0.01
    r = OptimizerConfig("rmsprop")
    assert (r.lr, r.rho, r.eps) == (0.001, 0.9, 1e-7)
    a = OptimizerConfig("adam")
    assert (a.lr, a.beta1, a.beta2, a.eps) == (0.001, 0.9, 0.999, 1e-7)


def test_bad_config():
    with pytest.raises(ConfigError):
        OptimizerConfig("adagrad")
    with pytest.raises(ConfigError):
        OptimizerConfig("sgd", lr=0)
    with pytest.raises(ConfigError):
        OptimizerConfig("rmsprop", rho=1.0)


def test_sgd_single_step():
    out = sgd_step([np.array([1.0])], [np.array([0.5])], OptimizerConfig("sgd", lr=0.01))
    assert out[0][0] == pytest.approx(0.995, abs=1e-15)
    assert sgd_step([np.array([1.0])], [np.array([0.0])], OptimizerConfig("sgd"))[0][0] == 1.0


def test_sgd_ten_steps_geometric():
    theta, state = run("sgd", 1.0, lr=0.1)
    assert theta == sgd_oracle(1.0, 0.1, 10)
    assert abs(theta - 0.8 ** 10) <= 4 * math.ulp(0.8 ** 10)
    assert theta == pytest.approx(0.1073741824, abs=1e-15)
    assert state.t == 10


def test_rmsprop_first_step():
    cfg = OptimizerConfig("rmsprop", lr=0.001, rho=0.9)
    p0 = [np.array([0.3])]
    p1, s1 = rmsprop_step(p0, [np.array([1.0])], init_state(p0, cfg), cfg)
    assert s1.v[0][0] == pytest.approx(0.1, abs=1e-15)
    assert p1[0][0] - 0.3 == pytest.approx(-0.001 / (math.sqrt(0.1) + 1e-7), abs=1e-15)
    assert p1[0][0] - 0.3 == pytest.approx(-0.0031623, abs=1e-7)
    p2, _ = rmsprop_step(p0, [np.array([0.0])], init_state(p0, cfg), cfg)
    assert p2[0][0] == 0.3


def test_rmsprop_ten_steps_oracle():
    theta, state = run("rmsprop", 1.0)
    assert abs(theta - rmsprop_oracle(1.0, 0.001, 0.9, 1e-7, 10)) < 1e-12
    assert state.t == 10


def test_adam_first_step():
    cfg = OptimizerConfig("adam")
    for g in (1e-3, 0.5, 7.0):
        p0 = [np.array([0.0])]
        p1, s1 = adam_step(p0, [np.array([g])], init_state(p0, cfg), cfg)
        assert s1.t == 1
        delta = p1[0][0]
        assert delta == pytest.approx(-cfg.lr * g / (g + cfg.eps), rel=1e-12)
        assert abs(abs(delta) - cfg.lr) <= cfg.lr * cfg.eps / g * 1.0001
    p0 = [np.array([0.2])]
    p1, _ = adam_step(p0, [np.array([0.0])], init_state(p0, cfg), cfg)
    assert p1[0][0] == 0.2


def test_adam_ten_steps_oracle():
    theta, _ = run("adam", 0.5)
    assert abs(theta - adam_oracle(0.5, 0.001, 0.9, 0.999, 1e-7, 10)) < 1e-12


def test_steps_do_not_mutate_inputs():
    cfg = OptimizerConfig("adam")
    params = [np.ones((2, 2)), np.zeros(3)]
    grads = [np.full((2, 2), 0.5), np.ones(3)]
    state = init_state(params, cfg)
    before = [p.copy() for p in params]
    step(params, grads, state, cfg)
    assert all(np.array_equal(a, b) for a, b in zip(params, before))
    assert state.t == 0 and not state.m[0].any()


def test_shape_and_finiteness_errors():
    cfg = OptimizerConfig("sgd")
    with pytest.raises(DimensionError):
        sgd_step([np.zeros(2)], [np.zeros(3)], cfg)
    with pytest.raises(DimensionError):
        sgd_step([np.zeros(2)], [], cfg)
    with pytest.raises(NumericError):
        sgd_step([np.zeros(1)], [np.array([np.nan])], cfg)
    cfg = OptimizerConfig("rmsprop")
    bad = OptimizerState(v=[np.array([np.inf])])
    with pytest.raises(NumericError):
        rmsprop_step([np.zeros(1)], [np.ones(1)], bad, cfg)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e6, 1e6).filter(lambda g: g != 0))
def test_first_step_bounds(g):
    grads = [np.array([g])]
    p0 = [np.array([0.0])]
    adam = OptimizerConfig("adam")
    (d,), _ = adam_step(p0, grads, init_state(p0, adam), adam)
    assert abs(d[0]) <= adam.lr * abs(g) / (abs(g) + adam.eps) * (1 + 1e-12)
    assert abs(d[0]) < adam.lr
    sgd = OptimizerConfig("sgd")
    (s,) = sgd_step(p0, grads, sgd)
    assert abs(s[0]) == sgd.lr * abs(g)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40), st.sampled_from(["rmsprop", "adam"]))
def test_slots_stay_finite_and_nonnegative(stream, kind):
    cfg = OptimizerConfig(kind)
    params = [np.array([0.1])]
    state = init_state(params, cfg)
    for g in stream:
        params, state = step(params, [np.array([g])], state, cfg)
        assert all(np.all(np.isfinite(s)) for s in state.v + state.m)
        assert all(np.all(v >= 0) for v in state.v)


@pytest.mark.parametrize("kind", ["sgd", "rmsprop", "adam"])
def test_replay_is_bitwise(kind):
    rng = np.random.default_rng(0)
    stream = [[rng.normal(size=(3, 2)), rng.normal(size=4)] for _ in range(25)]
    cfg = OptimizerConfig(kind)

    def replay():
        params = [np.ones((3, 2)), np.zeros(4)]
        state = init_state(params, cfg)
        for grads in stream:
            params, state = step(params, grads, state, cfg)
        return b"".join(p.tobytes() for p in params)

    assert replay() == replay()


def test_sgd_contracts_quadratic():
    theta = 1.7
    cfg = OptimizerConfig("sgd", lr=0.3)
    params = [np.array([theta])]
    for _ in range(30):
        new = sgd_step(params, [2 * params[0]], cfg)
        assert abs(new[0][0]) < abs(params[0][0])
        params = new
