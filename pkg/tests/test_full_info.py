import math

import numpy as np
import pytest

from gneseek.errors import InvalidReference, NotStationary
from gneseek.full_info import (IN_A, IN_L, IN_M_NOT_A, NOT_STATIONARY, GneState, build_full_info_system,
                               classify_stationary_point, linearize, lyapunov_value, spectral_abscissa)
from gneseek.game import KktPoint
from gneseek.games import rotation_game, two_player_monotone
from gneseek.hybrid import IntegrationOptions, integrate

REF = KktPoint([2.0, -3.0], [0.0, 0.0])


@pytest.fixture(scope="module")
def game():
    return two_player_monotone()


def test_dual_rates_at_start(game):
    flow = build_full_info_system(game).flow_map
    dx = flow(GneState.initial([0.0, 0.0], 2).to_vector())
    assert np.allclose(dx[4:6], [0.09, -0.31])
    assert np.allclose(dx[6:8], [0.1, 0.1])


def test_kkt_points_are_equilibria(game):
    flow = build_full_info_system(game).flow_map
    assert np.allclose(flow(GneState.at_kkt(REF).to_vector()), 0.0)


def test_zero_duals_stay_zero(game):
    flow = build_full_info_system(game).flow_map
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.normal(size=8)
        x[4] = 0.0
        assert flow(x)[4] == 0.0


def test_state_roundtrip():
    s = GneState([1, 2, 3], [4, 5, 6], [7], [8])
    assert np.array_equal(GneState.from_vector(s.to_vector(), 3, 1).to_vector(), s.to_vector())


def test_lyapunov_zero_at_reference(game):
    assert lyapunov_value(GneState.at_kkt(REF), REF, game) == 0.0


def test_lyapunov_with_zero_reference_duals(game):
    om = GneState([1.0, -2.0], [3.0, -3.0], [0.5, 0.0], [0.2, -0.1])
    expected = 0.5 * (1 + 1) + 0.5 * (1 + 0) + 0.5 * (0.04 + 0.01) + 0.5
    assert lyapunov_value(om, REF, game) == pytest.approx(expected)
    # gains divide the dual terms
    assert lyapunov_value(om, REF, game, k=[2.0, 1.0]) == pytest.approx(expected - 0.25)


def test_lyapunov_zero_reference_dual_is_linear():
    g = rotation_game(-1.0)
    ref = KktPoint([0.0, 0.0], [0.0])
    om = GneState([0.0, 0.0], [0.0, 0.0], [0.3], [0.0])
    assert lyapunov_value(om, ref, g) == pytest.approx(0.3)


def test_lyapunov_infinite_when_dual_vanishes_but_reference_positive():
    from gneseek.game import Game, affine_constraint
    g = Game(dims=(1,), costs=(lambda u: u[0],), cost_gradients=(lambda u: np.ones(1),),
             constraints=(affine_constraint([-1.0], 0.0),))
    ref = KktPoint([0.0], [1.0])
    om = GneState([0.0], [0.0], [0.0], [1.0])
    assert lyapunov_value(om, ref, g) == math.inf
    om2 = GneState([0.0], [0.0], [math.e], [1.0])
    assert lyapunov_value(om2, ref, g) == pytest.approx(math.e - 1 - 1)


def test_invalid_reference(game):
    with pytest.raises(InvalidReference):
        lyapunov_value(GneState.at_kkt(REF), KktPoint([4.0, 3.0], [6.0, 0.0]), game)


def test_lyapunov_decreases_along_full_run(game):
    arc = integrate(build_full_info_system(game), GneState.initial([0.0, 0.0], 2).to_vector(),
                    IntegrationOptions(0.01, 50.0))
    from gneseek.full_info import lyapunov_along, lyapunov_nonincreasing
    v = lyapunov_along(arc, REF, game)
    assert lyapunov_nonincreasing(v) and v[-1] < v[0]
    assert arc.block("lam").min() >= 0


def test_classification(game):
    assert classify_stationary_point(game, GneState.at_kkt(REF)).tag == IN_A
    rot = rotation_game(1.0)
    assert classify_stationary_point(rot, GneState([0, 0], [0, 0], [0.0], [0.0])).tag == IN_M_NOT_A
    assert classify_stationary_point(game, GneState([1, 1], [0, 0], [0.5, 0.5], [0, 0])).tag == NOT_STATIONARY
    assert classify_stationary_point(game, GneState([1, 1], [0, 0], [0.0, 0.5], [0, 0])).tag == IN_L


def test_linearization(game):
    om = GneState.at_kkt(REF)
    fd = linearize(game, om)
    an = linearize(game, om, method="analytic")
    assert np.abs(fd - an).max() <= 1e-5
    assert np.allclose(an[2:4, 2:4], -np.eye(2)) and np.allclose(an[6:8, 6:8], -np.eye(2))
    with pytest.raises(NotStationary):
        linearize(game, GneState.initial([0.0, 0.0], 2))


def test_instability_witness():
    for offset in (0.5, 1.0, 2.0):
        rot = rotation_game(offset)
        sa = spectral_abscissa(linearize(rot, GneState([0, 0], [0, 0], [0.0], [0.0])))
        assert sa >= offset - 1e-6
