"""Invariant suites run by ``gneseek verify <suite>``.

Each check returns ``(passed, detail)``.  Suites are kept to a few seconds
each; the long reproduction runs live in the acceptance tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .adaptive import (AdaptiveParams, AdaptiveState, ZERO, audit_gains, build_adaptive_system,
                       hysteresis_gap_bound)
from .errors import UnknownSuite
from .full_info import (IN_A, IN_M_NOT_A, GneState, build_full_info_system, classify_stationary_point,
                        linearize, lyapunov_along, lyapunov_nonincreasing, spectral_abscissa)
from .game import (Game, KktPoint, monotonicity_probe, pseudogradient, pseudogradient_fd, solve_kkt_oracle)
from .games import (OilParams, oil_extraction, oil_initial_decision, psd_probe, rotation_game,
                    two_player_monotone)
from .hybrid import HybridSystem, IntegrationOptions, integrate
from .zeroth_order import (DriftMonitor, EsParams, EsState, build_es_system, empirical_order,
                           estimator_bias_probe, oscillator_closed_form, PairedDither)

Check = Callable[[], tuple[bool, str]]


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str


# ---------------------------------------------------------------- core


def _decay_error(h: float) -> float:
    sys = HybridSystem(1, lambda x: -x)
    arc = integrate(sys, [1.0], IntegrationOptions(h, 1.0))
    return abs(arc.final_state[0] - math.exp(-1.0))


def rk4_observed_order(steps=(0.1, 0.05, 0.025, 0.0125)) -> float:
    errs = [_decay_error(h) for h in steps]
    return float(min(math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)))


def _core_checks() -> dict[str, Check]:
    def decay():
        err = _decay_error(1e-3)
        return err <= 1e-5, f"|x(1) - e^-1| = {err:.2e}"

    def forced_jump():
        sys = HybridSystem(1, lambda x: np.zeros(1), jump_set=lambda x: x[0] >= 1,
                           jump_map=lambda x: [x - 2.0])
        arc = integrate(sys, [1.0], IntegrationOptions(0.1, 1.0))
        ok = arc.jump_count == 1 and arc.jumps[0].time.t == 0 and arc.final_state[0] == -1.0
        return ok, f"jumps={arc.jump_count}, final={arc.final_state[0]}"

    def order():
        p = rk4_observed_order()
        return p >= 3.5, f"observed order {p:.3f}"

    def arcs_well_formed():
        arc, sys = _short_adaptive_arc()
        t, j = arc.t, arc.j
        ok = bool(np.all(np.diff(j) >= 0) and np.all(np.diff(j) <= 1))
        ok &= bool(np.all(np.diff(t)[np.diff(j) == 0] > 0) and np.all(np.diff(t)[np.diff(j) == 1] == 0))
        for rec in arc.jumps:
            ok &= any(np.array_equal(rec.post, y) for _, y in sys.jump_options(rec.pre))
        return ok, f"{len(arc)} samples, {arc.jump_count} jumps replayed"

    def determinism():
        a1, _ = _short_adaptive_arc(seed=7)
        a2, _ = _short_adaptive_arc(seed=7)
        same = np.array_equal(a1.x, a2.x) and np.array_equal(a1.t, a2.t)
        return same, "bit-identical" if same else "arcs differ"

    return {"exp_decay": decay, "forced_jump": forced_jump, "rk4_order": order,
            "hybrid_time_and_jump_replay": arcs_well_formed, "seed_determinism": determinism}


def _short_adaptive_arc(seed: int = 0, k_max: float = 100.0, T: float = 60.0):
    game = two_player_monotone()
    ap = AdaptiveParams(1.0, k_max, 2.0, 0.1)
    sys = build_adaptive_system(game, ap)
    x0 = AdaptiveState.initial(GneState.initial([0.0, 0.0], 2), ap).to_vector()
    return integrate(sys, x0, IntegrationOptions(0.01, T, rng_seed=seed)), sys


# ---------------------------------------------------------------- full information


def _full_info_checks() -> dict[str, Check]:
    game = two_player_monotone()

    def oracle_points():
        return solve_kkt_oracle(game, [(-5, 6), (-5, 6)])

    def equilibria():
        flow = build_full_info_system(game).flow_map
        pts = oracle_points()
        worst = max(float(np.linalg.norm(flow(GneState.at_kkt(p).to_vector()))) for p in pts)
        return worst <= 1e-8 and bool(pts), f"{len(pts)} oracle points, max |flow| = {worst:.1e}"

    def descent():
        sys = build_full_info_system(game)
        arc = integrate(sys, GneState.initial([0.0, 0.0], 2).to_vector(), IntegrationOptions(0.01, 200.0))
        ok = all(lyapunov_nonincreasing(lyapunov_along(arc, p, game)) for p in oracle_points())
        lam_ok = bool(arc.block("lam").min() >= 0)
        return ok and lam_ok, f"V nonincreasing={ok}, lambda>=0={lam_ok}"

    def instability():
        rot = rotation_game(1.0)
        om = GneState([0.0, 0.0], [0.0, 0.0], [0.0], [0.0])
        cls = classify_stationary_point(rot, om)
        sa = spectral_abscissa(linearize(rot, om))
        return cls.tag == IN_M_NOT_A and sa > 0, f"class={cls.tag}, abscissa={sa:.3f}"

    def jac_agreement():
        om = GneState.at_kkt(oracle_points()[0])
        diff = float(np.abs(linearize(game, om) - linearize(game, om, method="analytic")).max())
        cls = classify_stationary_point(game, om)
        return diff <= 1e-5 and cls.tag == IN_A, f"max |fd - analytic| = {diff:.1e}, class={cls.tag}"

    return {"equilibrium_faithfulness": equilibria, "lyapunov_descent_and_positivity": descent,
            "instability_witness": instability, "jacobian_fd_vs_analytic": jac_agreement}


# ---------------------------------------------------------------- adaptive


def _adaptive_checks() -> dict[str, Check]:
    game = two_player_monotone()
    ap = AdaptiveParams(1.0, 100.0, 2.0, 0.1)

    def gains():
        arc, sys = _short_adaptive_arc(T=200.0)
        audit = audit_gains(sys, arc, game, ap, step_size=0.01)
        return audit.passed, (f"monotone={audit.monotone}, bounded={audit.bounded}, slopes={audit.slopes_ok}, "
                              f"jumps={audit.jump_count}<= {audit.jump_bound}, "
                              f"spacing={audit.min_toggle_spacing:.3g}>={audit.t_min:.3g}")

    def locality_and_invariance():
        arc, sys = _short_adaptive_arc(T=200.0)
        ref = solve_kkt_oracle(game, [(-5, 6), (-5, 6)])[0]
        s_sl, k_sl = arc.blocks["s"], arc.blocks["k"]
        ok = True
        for rec in arc.jumps:
            changed = np.nonzero(rec.pre != rec.post)[0]
            j, case = rec.chosen
            allowed = {s_sl.start + j} | ({k_sl.start + j} if case == ZERO else set())
            ok &= set(changed.tolist()) <= allowed and (s_sl.start + j) in changed
        # V uses u, z, lambda, w and k; toggles leave all of them untouched
        vals = lyapunov_along(arc, ref, game)
        jump_rows = np.nonzero(np.diff(arc.j) == 1)[0]
        toggles = [i for i, rec in zip(jump_rows, arc.jumps) if rec.chosen[1] != ZERO]
        inv = all(vals[i] == vals[i + 1] for i in toggles)
        return ok and inv, f"{arc.jump_count} jumps single-index={ok}, V invariant across toggles={inv}"

    def reduction():
        err = adaptive_reduction_error(k=1.0)
        return err <= 1e-6, f"sup |(u, lambda) diff| = {err:.1e}"

    def gap_bounds():
        b = hysteresis_gap_bound(game, 0, AdaptiveParams(1, 100, 2, 0.1))
        oil = oil_extraction()
        b2 = hysteresis_gap_bound(oil, 0, AdaptiveParams(10, 10, 2, 10))
        ok = abs(b - 0.1 / math.sqrt(2)) < 1e-15 and abs(b2 - 10 / math.sqrt(30)) < 1e-15
        return ok, f"two-player {b:.6f}, oil {b2:.6f}"

    return {"gain_audit_and_jump_bound": gains, "jump_locality_and_V_invariance": locality_and_invariance,
            "reduction_to_full_information": reduction, "hysteresis_gap_bounds": gap_bounds}


def flow_samples(arc) -> np.ndarray:
    """Mask keeping the last sample at each time instant (post-jump states at jump times)."""
    return np.r_[arc.t[1:] != arc.t[:-1], True]


def adaptive_reduction_error(k: float = 1.0, T: float = 100.0, h: float = 0.01) -> float:
    """Sup-norm gap in ``(u, lambda)`` between frozen-gain adaptive and scaled full-information arcs."""
    game = two_player_monotone()
    ap = AdaptiveParams(k, k, 2.0, 0.1)
    base = GneState.initial([0.0, 0.0], 2)
    ad = integrate(build_adaptive_system(game, ap), AdaptiveState.initial(base, ap).to_vector(),
                   IntegrationOptions(h, T))
    fi = integrate(build_full_info_system(game, dual_gain=k), base.to_vector(), IntegrationOptions(h, T))
    keep = flow_samples(ad)
    if not np.array_equal(ad.t[keep], fi.t):
        return math.inf
    a = np.hstack([ad.block("u")[keep], ad.block("lam")[keep]])
    f = np.hstack([fi.block("u"), fi.block("lam")])
    return float(np.max(np.abs(a - f)))


# ---------------------------------------------------------------- zeroth order


def two_player_es_params(amplitude: float = 0.1, freqs=(11.0, 21.0)) -> EsParams:
    return EsParams(amplitudes=[amplitude, amplitude], eps=[0.2, 0.2], nu=[0.2, 0.2], eps0=0.2, nu0=0.2,
                    frequencies=list(freqs))


def _es_checks() -> dict[str, Check]:
    game = two_player_monotone()
    ap = AdaptiveParams(1.0, 100.0, 2.0, 0.1)

    def short_es(T=60.0):
        ep = two_player_es_params()
        mon = DriftMonitor()
        sys = build_es_system(game, ap, ep, mon)
        xi = AdaptiveState.initial(GneState.initial([0.0, 0.0], 2), ap)
        x0 = EsState(xi, np.zeros(2), ep.initial_oscillators()).to_vector()
        return integrate(sys, x0, IntegrationOptions(0.005, T)), mon

    def norms():
        arc, mon = short_es()
        mu = arc.block("mu")
        dev = float(np.max(np.abs(np.hypot(mu[:, 0::2], mu[:, 1::2]) - 1.0)))
        return dev <= 1e-9, f"max |norm - 1| = {dev:.1e} (pre-renormalisation drift {mon.max_drift:.1e})"

    def periodicity():
        ep = two_player_es_params()
        sys = HybridSystem(4, lambda x: np.r_[-2 * math.pi * 11 * x[1], 2 * math.pi * 11 * x[0],
                                              -2 * math.pi * 21 * x[3], 2 * math.pi * 21 * x[2]])
        mu0 = ep.initial_oscillators()
        arc = integrate(sys, mu0, IntegrationOptions(1 / 11 / 400, 1 / 11))
        err = float(np.abs(arc.final_state[:2] - mu0[:2]).max())
        closed = float(np.abs(oscillator_closed_form(1 / 11, ep)[:2] - mu0[:2]).max())
        return err <= 1e-6 and closed <= 1e-12, f"return error {err:.1e}"

    def consistency():
        amps = [0.2, 0.1, 0.05, 0.025]
        biases = [float(estimator_bias_probe(game, [0.0, 0.0], two_player_es_params(a)).max()) for a in amps]
        floor = 1e-10
        mono = all(b2 <= b1 + floor for b1, b2 in zip(biases, biases[1:]))
        order = empirical_order(amps, biases, floor)
        return mono and order >= 1, f"biases {['%.1e' % b for b in biases]}, order {order}"

    def transparency():
        arc, _ = short_es()
        zs, ms = arc.blocks["zeta"], arc.blocks["mu"]
        ok = all(np.array_equal(r.pre[zs], r.post[zs]) and np.array_equal(r.pre[ms], r.post[ms]) for r in arc.jumps)
        return ok and arc.jump_count > 0, f"{arc.jump_count} jumps, zeta/mu unchanged={ok}"

    def timescale():
        gap = timescale_reduction_gap()
        return gap <= 1e-8, f"slow-time trace gap between nu and nu/10: {gap:.1e}"

    return {"oscillator_norm": norms, "oscillator_periodicity": periodicity,
            "estimator_consistency": consistency, "jump_transparency": transparency,
            "timescale_reduction": timescale}


def timescale_reduction_gap(T_slow: float = 20.0, nu: float = 0.2, eps: float = 0.5) -> float:
    """Slow-time gap between analytic-gradient ES traces at filter gains ``nu`` and ``nu / 10``.

    With ``F_hat`` replaced by the analytic pseudogradient and ``zeta(0) = F(u(0))``,
    the ``(u, lambda)`` trace reparameterised by ``nu eps t`` does not depend on ``nu``;
    the returned sup-norm gap measures how well the integration honours that.
    """
    game = two_player_monotone()
    ap = AdaptiveParams(1.0, 100.0, 2.0, 0.1)
    base = GneState.initial([0.0, 0.0], 2)
    traces = []
    for gain in (nu, nu / 10):
        ep = EsParams(amplitudes=[1.0, 1.0], eps=[eps, eps], nu=[gain, gain], eps0=eps, nu0=gain,
                      frequencies=[1.0, 2.0], estimate_mask=[False, False])
        rate = gain * eps
        x0 = EsState(AdaptiveState.initial(base, ap), pseudogradient(game, base.u),
                     ep.initial_oscillators()).to_vector()
        arc = integrate(build_es_system(game, ap, ep), x0, IntegrationOptions(0.01 / rate, T_slow / rate))
        keep = flow_samples(arc)
        traces.append(np.hstack([arc.block("u")[keep], arc.block("lam")[keep]]))
    if traces[0].shape != traces[1].shape:
        return math.inf
    return float(np.max(np.abs(traces[0] - traces[1])))


# ---------------------------------------------------------------- games


OIL_BOX = [(0.0, 120.0)] * 4 + [(5.5, 9.5)] * 4


def gradient_check(game: Game, box, n: int = 100, seed: int = 0) -> float:
    """Worst ``|analytic - central difference| / (1 + |analytic|)`` over random points."""
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    worst = 0.0
    for _ in range(n):
        u = lo + (hi - lo) * rng.random(lo.size)
        an = pseudogradient(game, u)
        fd = pseudogradient_fd(game, u)
        worst = max(worst, float(np.linalg.norm(an - fd) / (1 + np.linalg.norm(an))))
    return worst


def oil_pair_monotonicity(n_pairs: int = 1000, seed: int = 0):
    return monotonicity_probe(oil_extraction(), OIL_BOX, n_pairs, seed, tolerance=1e-7)


def _games_checks() -> dict[str, Check]:
    def two_player_monotone_check():
        rep = monotonicity_probe(two_player_monotone(), [(-10, 10), (-10, 10)], 1000, 0, 1e-9)
        return abs(rep.min_inner_product) <= 1e-9, f"min inner product {rep.min_inner_product:.1e}"

    def oil_psd():
        rep = psd_probe(oil_extraction(), OIL_BOX, 1000, 0)
        return rep.passed, f"min symmetrised eigenvalue {rep.min_eigenvalue:.4f}"

    def oil_pairs():
        rep = oil_pair_monotonicity()
        return rep.passed, f"min inner product {rep.min_inner_product:.4f}"

    def gradients():
        w1 = gradient_check(two_player_monotone(), [(-10, 10)] * 2)
        w2 = gradient_check(oil_extraction(), OIL_BOX)
        return max(w1, w2) <= 1e-5, f"two-player {w1:.1e}, oil {w2:.1e}"

    def confinement():
        op = OilParams()
        game = oil_extraction(op)
        f, ph, sg = PairedDither().arrays(4)
        ep = EsParams(amplitudes=np.zeros(8), eps=[0.01] * 8, nu=[0.1] * 8, eps0=0.01, nu0=0.1,
                      frequencies=np.r_[f, f], phases=np.r_[ph, np.zeros(4)], signs=np.r_[sg, np.ones(4)],
                      estimate_mask=[True] * 4 + [False] * 4, amplitude_sources=[4, 5, 6, 7, -1, -1, -1, -1],
                      shared_frequency=True)
        ap = AdaptiveParams(10.0, 10.0, 2.0, 10.0)
        sys = build_es_system(game, ap, ep)
        xi = AdaptiveState.initial(GneState.initial(oil_initial_decision(op), 1), ap)
        arc = integrate(sys, EsState(xi, np.zeros(8), ep.initial_oscillators()).to_vector(),
                        IntegrationOptions(0.1, 500.0))
        a = arc.block("u")[:, 4:]
        margin = float(min((a - op.a_min).min(), (op.a_max - a).min()))
        return margin > 0, f"min barrier margin {margin:.3f}"

    return {"two_player_monotonicity": two_player_monotone_check, "oil_psd_probe": oil_psd,
            "oil_pair_monotonicity": oil_pairs, "gradient_cross_check": gradients,
            "barrier_confinement": confinement}


SUITES: dict[str, Callable[[], dict[str, Check]]] = {
    "core": _core_checks,
    "full_info": _full_info_checks,
    "adaptive": _adaptive_checks,
    "zeroth_order": _es_checks,
    "games": _games_checks,
}


def run_suite(name: str) -> list[CheckResult]:
    if name == "all":
        names = list(SUITES)
    elif name in SUITES:
        names = [name]
    else:
        raise UnknownSuite(f"unknown suite {name!r}; choose from {', '.join(list(SUITES) + ['all'])}")
    results = []
    for suite in names:
        for check, fn in SUITES[suite]().items():
            try:
                ok, detail = fn()
            except Exception as exc:  # a crashing check is a failing check
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            results.append(CheckResult(suite, check, bool(ok), detail))
    return results
