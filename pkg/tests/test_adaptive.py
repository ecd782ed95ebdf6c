import math

import numpy as np
import pytest

from gneseek.adaptive import (ARMED, INCREASING, MINUS, PLUS, STOPPED, ZERO, AdaptiveParams, AdaptiveState,
                              audit_gains, build_adaptive_system, gain_rate, hysteresis_gap_bound,
                              jump_candidates, jump_count_bound)
from gneseek.errors import EmptyLevelSet
from gneseek.full_info import GneState
from gneseek.game import Constraint, Game, affine_constraint
from gneseek.games import oil_extraction, two_player_monotone
from gneseek.hybrid import IntegrationOptions, integrate, resolve_jump
from gneseek.verify import adaptive_reduction_error

AP = AdaptiveParams(1.0, 100.0, 2.0, 0.1)


@pytest.fixture(scope="module")
def game():
    return two_player_monotone()


def state_at(u, k, s, lam=(0.1, 0.1)):
    return AdaptiveState(GneState(u, u, lam, [0.0, 0.0]), k, s)


def test_gain_rate():
    assert np.allclose(gain_rate(np.array([INCREASING, ARMED, STOPPED]), 3.0), [3.0, 0.0, 0.0])


def test_plus_toggle(game):
    # g1 = u2 + 1 - u1 = 2 eps + 0.01, g2 < eps
    xi = state_at([0.0, -0.79], [1.0, 1.0], [ARMED, ARMED])
    assert jump_candidates(xi, game, AP) == [(0, PLUS)]
    sys = build_adaptive_system(game, AP)
    x = xi.to_vector()
    y = resolve_jump(sys, x, np.random.default_rng(0))
    assert y[-2] == INCREASING
    assert np.array_equal(np.delete(y, -2), np.delete(x, -2))


def test_toggle_and_stop_both_offered(game):
    xi = state_at([0.0, -1.0], [100.0, 1.0], [INCREASING, ARMED])
    cands = jump_candidates(xi, game, AP)
    assert set(cands) == {(0, MINUS), (0, ZERO)}
    succ = build_adaptive_system(game, AP).jump_options(xi.to_vector())
    assert len(succ) == 2
    stopped = [y for tag, y in succ if tag == (0, ZERO)][0]
    assert stopped[-2] == STOPPED and stopped[-4] == 100.0


def test_simultaneous_plus_events_random_order():
    g = Game(dims=(1, 1), costs=(lambda u: 0.0, lambda u: 0.0),
             constraints=(affine_constraint([1.0, 0.0], 0.0), affine_constraint([0.0, 1.0], 0.0)))
    xi = state_at([0.21, 0.21], [1.0, 1.0], [ARMED, ARMED])
    assert set(jump_candidates(xi, g, AP)) == {(0, PLUS), (1, PLUS)}
    sys = build_adaptive_system(g, AP)
    firsts = {int(np.argmax(resolve_jump(sys, xi.to_vector(), np.random.default_rng(s))[-2:]))
              for s in range(30)}
    assert firsts == {0, 1}
    arc = integrate(sys, xi.to_vector(), IntegrationOptions(0.01, 0.02))
    assert arc.jump_count == 2 and np.all(arc.final_state[-2:] == INCREASING)


def test_no_candidates_when_slack(game):
    xi = state_at([3.0, -3.0], [1.0, 1.0], [ARMED, ARMED])
    assert jump_candidates(xi, game, AP) == []


def test_gap_bounds(game):
    assert hysteresis_gap_bound(game, 0, AP) == 0.1 / math.sqrt(2)
    assert hysteresis_gap_bound(game, 1, AP) == 0.1
    oil = oil_extraction()
    assert hysteresis_gap_bound(oil, 0, AdaptiveParams(10, 10, 2, 10)) == pytest.approx(10 / math.sqrt(30), rel=1e-15)
    with pytest.raises(EmptyLevelSet):
        hysteresis_gap_bound(Game(dims=(1,), costs=(lambda u: 0.0,),
                                  constraints=(affine_constraint([0.0], -1.0),)), 0, AP)


def test_gap_bound_nonlinear_circle():
    circle = Constraint(lambda u: float(u @ u - 1.0), lambda u: 2 * u)
    g = Game(dims=(2,), costs=(lambda u: 0.0,), constraints=(circle,))
    # on |u|^2 = 1.2 the gradient norm is 2 sqrt(1.2)
    b = hysteresis_gap_bound(g, 0, AP, box=[(-2, 2), (-2, 2)], n_samples=200)
    assert b == pytest.approx(0.1 / (2 * math.sqrt(1.2)), rel=1e-6)


def test_jump_count_bound():
    assert jump_count_bound(2, AP, t_min=1.0) == 2 * 2 * math.ceil(99 / 2 + 1)
    with pytest.raises(ValueError):
        jump_count_bound(2, AP, 0.0)


def test_params_validation():
    for args in ((0, 1, 1, 1), (2, 1, 1, 1), (1, 2, 0, 1), (1, 2, 1, 0)):
        with pytest.raises(ValueError):
            AdaptiveParams(*args)


def test_gain_audit_on_run(game):
    sys = build_adaptive_system(game, AP)
    x0 = AdaptiveState.initial(GneState.initial([0.0, 0.0], 2), AP).to_vector()
    arc = integrate(sys, x0, IntegrationOptions(0.01, 100.0))
    audit = audit_gains(sys, arc, game, AP, step_size=0.01)
    assert audit.passed and arc.jump_count > 0
    k = arc.block("k")
    assert np.all(np.diff(k, axis=0) >= 0) and k.max() <= 100.0


def test_reduction_to_full_information():
    assert adaptive_reduction_error(k=1.0, T=30.0) <= 1e-6
    assert adaptive_reduction_error(k=3.0, T=30.0) <= 1e-6
