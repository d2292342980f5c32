import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from frecency_fl.frecency import DEFAULT_PARAMS, ModelParams
from frecency_fl.rprop import (
    ConstraintSpec,
    NonFiniteGradientError,
    RpropConfig,
    RpropState,
    project,
    rprop_delta,
    rprop_step,
    sign_vote,
)

HYPER = RpropConfig(eta0=0.1, alpha=1.2, beta=0.5, eta_min=1e-3, eta_max=5.0)


def state_with(prev_sign, eta=0.1, hyper=HYPER):
    signs = np.zeros(8)
    signs[0] = prev_sign
    return RpropState(np.full(8, eta), signs, hyper)


def test_same_sign_grows_step_then_steps_with_it():
    grad = np.zeros(8)
    grad[0] = 3.7
    params, state = rprop_step(state_with(+1), grad, DEFAULT_PARAMS, ConstraintSpec(max_step=5.0))
    assert state.step_sizes[0] == pytest.approx(0.12)
    assert params.recency_weights[0] == pytest.approx(100 - 0.12)


def test_sign_flip_shrinks_step():
    grad = np.zeros(8)
    grad[0] = -3.7
    delta, state = rprop_delta(state_with(+1), grad)
    assert state.step_sizes[0] == pytest.approx(0.05)
    assert delta[0] == pytest.approx(0.05)


def test_zero_gradient_changes_nothing():
    state = state_with(+1)
    params, new = rprop_step(state, np.zeros(8), DEFAULT_PARAMS)
    assert params == DEFAULT_PARAMS
    np.testing.assert_array_equal(new.step_sizes, state.step_sizes)


def test_first_step_uses_eta0():
    state = RpropState.initial(RpropConfig())
    delta, new = rprop_delta(state, np.ones(8))
    np.testing.assert_array_equal(delta, -0.5)
    np.testing.assert_array_equal(new.prev_grad_signs, 1.0)


def test_step_sizes_clipped():
    state = RpropState(np.full(8, 4.9), np.ones(8), HYPER)
    _, new = rprop_delta(state, np.ones(8))
    np.testing.assert_array_equal(new.step_sizes, 5.0)
    state = RpropState(np.full(8, 0.0015), np.ones(8), HYPER)
    _, new = rprop_delta(state, -np.ones(8))
    np.testing.assert_array_equal(new.step_sizes, 1e-3)


def test_non_finite_gradient_rejected():
    grad = np.zeros(8)
    grad[2] = np.nan
    with pytest.raises(NonFiniteGradientError):
        rprop_delta(RpropState.initial(), grad)


def test_hyper_validation():
    with pytest.raises(ValueError):
        RpropConfig(alpha=0.9)
    with pytest.raises(ValueError):
        RpropConfig(eta0=3.0, eta_max=2.0)


def test_state_round_trip():
    state = RpropState(np.linspace(0.01, 1, 8), np.array([1, -1, 0, 1, 1, 0, -1, 1.0]), HYPER)
    assert RpropState.from_dict(state.to_dict()) == state


@pytest.mark.parametrize("c", [0.001, 1.0, 1000.0])
def test_gradient_scale_invariance_bit_exact(c):
    rng = np.random.default_rng(11)
    state = RpropState(rng.uniform(0.01, 2, 8), rng.choice([-1.0, 0.0, 1.0], 8))
    grad = rng.normal(size=8)
    grad[3] = 0.0
    params = ModelParams.from_array(rng.uniform(10, 100, 8))
    a_params, a_state = rprop_step(state, grad, params)
    b_params, b_state = rprop_step(state, c * grad, params)
    np.testing.assert_array_equal(a_params.to_array(), b_params.to_array())
    assert a_state == b_state


def test_projection_examples():
    p = ModelParams((50, 80, 40, 45, -3), (-0.2, 2, 1))
    assert project(p) == ModelParams((50, 50, 40, 40, 0), (0, 2, 1))
    assert project(p, ConstraintSpec(nonneg=False, monotone_recency=False)) == p


def test_max_step_clips_raw_change():
    state = RpropState(np.full(8, 1.5), np.ones(8))
    params, _ = rprop_step(state, np.ones(8), DEFAULT_PARAMS, ConstraintSpec(max_step=0.25, monotone_recency=False))
    np.testing.assert_allclose(DEFAULT_PARAMS.to_array() - params.to_array(), 0.25)


weights = st.lists(st.floats(-200, 200, allow_nan=False), min_size=8, max_size=8)


@given(weights)
def test_projection_idempotent_and_feasible(w):
    once = project(ModelParams.from_array(w))
    assert project(once) == once
    theta = once.to_array()
    assert np.all(theta >= 0)
    assert np.all(np.diff(theta[:5]) <= 0)


@given(weights, st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=8, max_size=8))
def test_step_bounded_before_projection(w, grad):
    state = RpropState.initial()
    delta, new = rprop_delta(state, grad)
    hyper = state.hyper
    nz = np.sign(grad) != 0
    assert np.all((np.abs(delta[nz]) >= hyper.eta_min) & (np.abs(delta[nz]) <= hyper.eta_max))
    assert np.all(delta[~nz] == 0)
    assert np.all((new.step_sizes >= hyper.eta_min) & (new.step_sizes <= hyper.eta_max))


def test_sign_vote_examples():
    votes = [[1, -1, 0, 1], [1, -1, 1, -1], [-1, 1, 0, 0]]
    np.testing.assert_array_equal(sign_vote(votes), [1, -1, 0, 0])
    # 1/1/1 three-way tie
    np.testing.assert_array_equal(sign_vote([[1], [-1], [0]]), [0])
    np.testing.assert_array_equal(sign_vote([[2.5, -0.1]]), [1, -1])
    with pytest.raises(ValueError):
        sign_vote([])


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=8, max_size=8), st.integers(1, 9))
def test_unanimous_sign_vote_equals_plain_step(grad, n):
    # When every client agrees, voting and averaging take the same Rprop step.
    vote = sign_vote([grad] * n)
    a, _ = rprop_step(RpropState.initial(), vote, DEFAULT_PARAMS)
    b, _ = rprop_step(RpropState.initial(), grad, DEFAULT_PARAMS)
    assert a == b
