import math

import numpy as np
import pytest

from gneseek.errors import EmptyJumpMap, NonFiniteState, ZenoGuardTripped
from gneseek.hybrid import (HALT_MAX_JUMPS, HALT_OUTSIDE, HybridSystem, IntegrationOptions, arc_metrics,
                            integrate, read_arc_csv, resolve_jump)
from gneseek.verify import rk4_observed_order


def decay():
    return HybridSystem(1, lambda x: -x)


def test_exponential_decay_matches_closed_form():
    arc = integrate(decay(), [1.0], IntegrationOptions(1e-3, 1.0))
    assert arc.final_state[0] == pytest.approx(math.exp(-1), abs=1e-5)
    assert arc.final_time.t == 1.0 and arc.final_time.j == 0


def test_forced_jump_then_flow():
    sys = HybridSystem(1, lambda x: np.zeros(1), jump_set=lambda x: x[0] >= 1, jump_map=lambda x: [x - 2])
    arc = integrate(sys, [1.0], IntegrationOptions(0.1, 2.0))
    assert arc.jump_count == 1
    rec = arc.jumps[0]
    assert (rec.time.t, rec.time.j) == (0.0, 0)
    assert rec.post[0] == -1.0
    assert np.all(arc.x[1:, 0] == -1.0) and arc.j[-1] == 1


def test_rk4_order_at_least_three_and_a_half():
    assert rk4_observed_order() >= 3.5


def test_final_partial_step_lands_on_horizon():
    arc = integrate(decay(), [1.0], IntegrationOptions(0.3, 1.0))
    assert arc.t[-1] == 1.0
    assert arc.final_state[0] == pytest.approx(math.exp(-1), abs=1e-3)


def test_resolve_jump_singleton_and_determinism():
    sys = HybridSystem(1, lambda x: 0 * x, jump_set=lambda x: True,
                       jump_map=lambda x: [("a", x + 1), ("b", x + 2)])
    single = HybridSystem(1, lambda x: 0 * x, jump_set=lambda x: True, jump_map=lambda x: [x * 3])
    assert resolve_jump(single, np.array([2.0]), np.random.default_rng(0))[0] == 6.0
    picks = {float(resolve_jump(sys, np.zeros(1), np.random.default_rng(5))[0]) for _ in range(5)}
    assert len(picks) == 1
    seen = {float(resolve_jump(sys, np.zeros(1), np.random.default_rng(s))[0]) for s in range(40)}
    assert seen == {1.0, 2.0}


def test_empty_jump_map_raises():
    sys = HybridSystem(1, lambda x: 0 * x, jump_set=lambda x: True, jump_map=lambda x: [])
    with pytest.raises(EmptyJumpMap):
        resolve_jump(sys, np.zeros(1), np.random.default_rng(0))
    with pytest.raises(EmptyJumpMap):
        integrate(sys, [0.0], IntegrationOptions(0.1, 1.0))


def test_zeno_guard():
    sys = HybridSystem(1, lambda x: 0 * x, jump_set=lambda x: True, jump_map=lambda x: [x], jump_arity=2)
    with pytest.raises(ZenoGuardTripped):
        integrate(sys, [0.0], IntegrationOptions(0.1, 1.0))
    with pytest.raises(ZenoGuardTripped):
        integrate(sys, [0.0], IntegrationOptions(0.1, 1.0, max_consecutive_jumps=3))


def test_max_jumps_halt():
    sys = HybridSystem(1, lambda x: np.ones(1), jump_set=lambda x: x[0] >= 1, jump_map=lambda x: [x - 1])
    arc = integrate(sys, [0.0], IntegrationOptions(0.01, 100.0, max_jumps=3))
    assert arc.halt_reason == HALT_MAX_JUMPS and arc.jump_count == 3


def test_outside_both_sets_halts():
    sys = HybridSystem(1, lambda x: np.ones(1), flow_set=lambda x: x[0] <= 0.5)
    arc = integrate(sys, [0.0], IntegrationOptions(0.1, 10.0))
    assert arc.halt_reason == HALT_OUTSIDE
    assert arc.final_state[0] > 0.5


@pytest.mark.filterwarnings("ignore:overflow")
def test_non_finite_state_raises():
    sys = HybridSystem(1, lambda x: x * x)
    with pytest.raises(NonFiniteState):
        integrate(sys, [1.0], IntegrationOptions(0.5, 100.0))


def test_flow_priority_switch():
    sys = HybridSystem(1, lambda x: np.ones(1), flow_set=lambda x: True, jump_set=lambda x: x[0] >= 0.5,
                       jump_map=lambda x: [x * 0 - 5])
    assert integrate(sys, [0.0], IntegrationOptions(0.1, 1.0)).jump_count == 1
    assert integrate(sys, [0.0], IntegrationOptions(0.1, 1.0, jump_priority=False)).jump_count == 0


def test_invalid_options():
    for kw in ({"step_size": 0, "max_time": 1}, {"step_size": 2, "max_time": 1},
               {"step_size": 0.1, "max_time": 1, "max_consecutive_jumps": 0}):
        with pytest.raises(ValueError):
            IntegrationOptions(**kw)
    with pytest.raises(ValueError):
        integrate(HybridSystem(2, lambda x: x), [1.0], IntegrationOptions(0.1, 1.0))


def test_arc_metrics():
    const = integrate(HybridSystem(2, lambda x: 0 * x), [1.0, 2.0], IntegrationOptions(0.1, 1.0))
    rep = arc_metrics(const, [1.0, 2.0])
    assert rep.final_distance == 0 and rep.tail_mean_distance == 0
    assert np.all(rep.tail_peak_to_peak == 0)
    arc = integrate(decay(), [1.0], IntegrationOptions(1e-3, 3.0))
    rep = arc_metrics(arc, [0.0], tail_fraction=1.0)
    assert rep.final_distance == pytest.approx(math.exp(-3), abs=1e-8)
    assert rep.tail_mean_distance == pytest.approx((1 - math.exp(-3)) / 3, abs=1e-6)


def test_csv_roundtrip(tmp_path):
    sys = HybridSystem(2, lambda x: -x, jump_set=lambda x: x[0] >= 1.5, jump_map=lambda x: [x / 2],
                       labels=("a", "b"))
    arc = integrate(sys, [2.0, 1.0], IntegrationOptions(0.1, 1.0))
    arc.to_csv(tmp_path / "t.csv")
    arc.jumps_to_csv(tmp_path / "j.csv")
    header, data = read_arc_csv(tmp_path / "t.csv")
    assert header == ["t", "j", "a", "b"]
    assert np.array_equal(data[:, 2:], arc.x) and np.array_equal(data[:, 0], arc.t)
    lines = (tmp_path / "j.csv").read_text().splitlines()
    assert lines[0].startswith("t,j,indices,chosen,pre_a,pre_b,post_a,post_b")
    assert len(lines) == 1 + arc.jump_count


def test_sampling_thins_but_keeps_end_and_jumps():
    sys = HybridSystem(1, lambda x: np.ones(1), jump_set=lambda x: x[0] >= 1, jump_map=lambda x: [x - 1])
    arc = integrate(sys, [0.0], IntegrationOptions(0.01, 2.5, sample_every=50))
    assert arc.t[-1] == 2.5
    assert arc.jump_count == 2
    assert np.count_nonzero(np.diff(arc.j)) == 2
