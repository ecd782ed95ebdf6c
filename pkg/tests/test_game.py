import numpy as np
import pytest

from gneseek.errors import NegativeLambda, NonFiniteCost, OracleScaleExceeded
from gneseek.game import (Game, KktPoint, Polynomial, constraint_jacobian, constraint_values, kkt_residual,
                          monotonicity_probe, polynomial_game, pseudogradient, pseudogradient_fd,
                          solve_kkt_oracle)
from gneseek.games import two_player_monotone


@pytest.fixture(scope="module")
def g51():
    return two_player_monotone()


def test_pseudogradient_values(g51):
    assert np.allclose(pseudogradient(g51, [4.0, 3.0]), [6.0, -2.0])
    assert np.allclose(pseudogradient_fd(g51, [4.0, 3.0]), [6.0, -2.0], atol=1e-6)
    assert np.allclose(pseudogradient(g51, [2.0, -3.0]), [0.0, 0.0])


def test_constant_costs_have_zero_pseudogradient():
    g = Game(dims=(1, 2), costs=(lambda u: 3.0, lambda u: -1.0))
    assert np.allclose(pseudogradient(g, [1.0, 2.0, 3.0]), 0.0)


def test_non_finite_cost():
    g = Game(dims=(1,), costs=(lambda u: float("nan"),))
    with pytest.raises(NonFiniteCost):
        pseudogradient(g, [0.0])


def test_constraints(g51):
    assert np.allclose(constraint_values(g51, [4.0, 3.0]), [0.0, 0.0])
    assert np.allclose(constraint_jacobian(g51, [1.0, 7.0]), [[-1, 1], [0, 1]])
    g = Game(dims=(1,), costs=(lambda u: u[0] ** 2,))
    assert constraint_values(g, [1.0]).shape == (0,)
    assert constraint_jacobian(g, [1.0]).shape == (0, 1)


def test_kkt_residual(g51):
    assert kkt_residual(g51, KktPoint([2.0, -3.0], [0.0, 0.0])) <= 1e-12
    assert kkt_residual(g51, KktPoint([4.0, 3.0], [6.0, 0.0])) >= 4.0
    with pytest.raises(NegativeLambda):
        KktPoint([0.0, 0.0], [-1.0, 0.0])
    free = Game(dims=(1,), costs=(lambda u: (u[0] - 2) ** 2,), cost_gradients=(lambda u: 2 * (u - 2),))
    assert kkt_residual(free, KktPoint([2.0], [])) == 0.0


def test_residual_soundness(g51):
    p = KktPoint([2.0, -3.0], [0.0, 0.0])
    F = pseudogradient(g51, p.u)
    g = constraint_values(g51, p.u)
    assert np.linalg.norm(F + constraint_jacobian(g51, p.u).T @ p.lam) <= 1e-10
    assert np.all(g <= 0) and np.all(np.abs(p.lam * g) <= 1e-10)


def test_monotonicity_probe():
    rep = monotonicity_probe(two_player_monotone(), [(-5, 5), (-5, 5)], 500, 3)
    assert abs(rep.min_inner_product) <= 1e-9 and rep.passed
    ident = Game(dims=(2,), costs=(lambda u: 0.5 * u @ u,), cost_gradients=(lambda u: u.copy(),))
    assert monotonicity_probe(ident, [(-1, 1)] * 2, 200, 0).min_inner_product > 0
    neg = Game(dims=(2,), costs=(lambda u: -0.5 * u @ u,), cost_gradients=(lambda u: -u,))
    assert not monotonicity_probe(neg, [(-1, 1)] * 2, 200, 0).passed


def test_oracle_on_two_player_game(g51):
    pts = solve_kkt_oracle(g51, [(-5, 6), (-5, 6)], lambda_max=10)
    assert any(np.linalg.norm(p.u - [2, -3]) < 1e-3 and np.linalg.norm(p.lam) < 1e-3 for p in pts)
    assert all(kkt_residual(g51, p) <= 1e-6 for p in pts)
    # the point (4, 3) needs lambda = (6, -4), so it never appears
    assert not any(np.linalg.norm(p.u - [4, 3]) < 0.1 for p in pts)


def test_oracle_trivial_cases():
    quad = Game(dims=(1,), costs=(lambda u: (u[0] - 2) ** 2,), cost_gradients=(lambda u: 2 * (u - 2),))
    pts = solve_kkt_oracle(quad, [(-5, 5)])
    assert len(pts) == 1 and abs(pts[0].u[0] - 2) < 1e-6
    slope = Game(dims=(1,), costs=(lambda u: u[0],), cost_gradients=(lambda u: np.ones(1),))
    assert solve_kkt_oracle(slope, [(-5, 5)]) == []
    big = Game(dims=(7,), costs=(lambda u: 0.0,))
    with pytest.raises(OracleScaleExceeded):
        solve_kkt_oracle(big, [(-1, 1)] * 7)


def test_polynomial_records():
    p = Polynomial.from_terms([{"coef": 2.0, "powers": [2, 1]}, {"coef": -1.0, "powers": [0, 0]}], 2)
    u = np.array([1.5, -2.0])
    assert p(u) == pytest.approx(2 * 1.5 ** 2 * -2 - 1)
    assert np.allclose(p.gradient(u), [4 * 1.5 * -2, 2 * 1.5 ** 2])
    assert np.allclose(p.hessian(u), [[4 * -2, 4 * 1.5], [4 * 1.5, 0]])


def test_polynomial_game_matches_builtin():
    J1 = Polynomial.from_terms([{"coef": 1, "powers": [1, 1]}, {"coef": 3, "powers": [1, 0]},
                                {"coef": -2, "powers": [0, 1]}, {"coef": -6, "powers": [0, 0]}], 2)
    J2 = Polynomial(-J1.coefs, J1.powers)
    g1 = Polynomial.from_terms([{"coef": 1, "powers": [0, 1]}, {"coef": 1, "powers": [0, 0]},
                                {"coef": -1, "powers": [1, 0]}], 2)
    g2 = Polynomial.from_terms([{"coef": 1, "powers": [0, 1]}, {"coef": -3, "powers": [0, 0]}], 2)
    pg = polynomial_game((1, 1), [J1, J2], [g1, g2])
    ref = two_player_monotone()
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = rng.uniform(-5, 5, 2)
        assert np.allclose(pseudogradient(pg, u), pseudogradient(ref, u))
        assert np.allclose(constraint_values(pg, u), constraint_values(ref, u))
    assert all(c.affine for c in pg.constraints)


def test_gradient_consistency_random_points(g51):
    from gneseek.verify import gradient_check
    assert gradient_check(g51, [(-10, 10)] * 2) <= 1e-5
