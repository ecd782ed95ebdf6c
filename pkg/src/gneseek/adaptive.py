"""Hybrid adaptive dual gains.

Each constraint ``j`` carries a gain ``k_j`` and a switch ``s_j``:

* ``s_j = -1`` armed: the gain is idle and waits for ``g_j >= 2 eps``;
* ``s_j = +1`` increasing: ``k_j`` grows at rate ``c`` until ``g_j <= eps``;
* ``s_j = 0`` stopped for good once ``k_j`` reaches ``k_max``.

Jumps only touch one ``s_j`` (and clamp ``k_j`` to ``k_max`` on a stop).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EmptyLevelSet
from .full_info import GneState, clamp_duals, evaluators, gne_blocks, gne_labels
from .game import Game, _box_arrays
from .hybrid import HybridArc, HybridSystem

ARMED, INCREASING, STOPPED = -1.0, 1.0, 0.0
PLUS, MINUS, ZERO = "plus", "minus", "zero"


@dataclass(frozen=True)
class AdaptiveParams:
    k_min: float
    k_max: float
    c: float
    epsilon: float
    k_tol: float = 1e-9

    def __post_init__(self):
        if not 0 < self.k_min <= self.k_max:
            raise ValueError("need 0 < k_min <= k_max")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def adaptive_blocks(m: int, q: int) -> dict[str, slice]:
    b = gne_blocks(m, q)
    n = 2 * m + 2 * q
    b["k"] = slice(n, n + q)
    b["s"] = slice(n + q, n + 2 * q)
    return b


def adaptive_labels(m: int, q: int) -> list[str]:
    return gne_labels(m, q) + [f"k{j}" for j in range(q)] + [f"s{j}" for j in range(q)]


@dataclass(frozen=True)
class AdaptiveState:
    base: GneState
    k: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "k", np.asarray(self.k, dtype=float).reshape(-1))
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float).reshape(-1))
        if not np.all(np.isin(self.s, (ARMED, STOPPED, INCREASING))):
            raise ValueError("switch states must lie in {-1, 0, 1}")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.base.to_vector(), self.k, self.s])

    @classmethod
    def from_vector(cls, x, m: int, q: int) -> "AdaptiveState":
        x = np.asarray(x, dtype=float)
        n = 2 * m + 2 * q
        return cls(GneState.from_vector(x[:n], m, q), x[n:n + q], x[n + q:n + 2 * q])

    @classmethod
    def initial(cls, base: GneState, params: AdaptiveParams, k0=None, s0: float = ARMED) -> "AdaptiveState":
        q = base.lam.size
        k = np.full(q, params.k_min) if k0 is None else np.broadcast_to(np.asarray(k0, float), (q,))
        return cls(base, k, np.full(q, float(s0)))


def gain_rate(s: np.ndarray, c: float) -> np.ndarray:
    """``k' = c/2 (1 + s) s^2``: ``c`` when increasing, else zero."""
    return 0.5 * c * (1.0 + s) * s * s


def _membership(g: np.ndarray, k: np.ndarray, s: np.ndarray, params: AdaptiveParams):
    eps = params.epsilon
    plus = (g >= 2 * eps) & (s == ARMED)
    minus = (g <= eps) & (s == INCREASING)
    zero = (k >= params.k_max - params.k_tol) & (s != STOPPED)
    return plus, minus, zero


def candidates_from(g, k, s, params: AdaptiveParams) -> list[tuple[int, str]]:
    plus, minus, zero = _membership(g, k, s, params)
    out = []
    for j in range(len(s)):
        if plus[j]:
            out.append((j, PLUS))
        if minus[j]:
            out.append((j, MINUS))
        if zero[j]:
            out.append((j, ZERO))
    return out


def jump_candidates(xi: AdaptiveState, game: Game, params: AdaptiveParams) -> list[tuple[int, str]]:
    """All ``(j, subcase)`` pairs whose jump set contains ``xi``; empty iff no jump is possible."""
    g = evaluators(game).g(xi.base.u)
    return candidates_from(g, xi.k, xi.s, params)


def apply_jump(x: np.ndarray, tag: tuple[int, str], k_slice: slice, s_slice: slice,
               params: AdaptiveParams) -> np.ndarray:
    """Successor for one ``(j, subcase)``: toggle ``s_j`` or stop it (clamping ``k_j``)."""
    j, case = tag
    y = x.copy()
    ks = y[k_slice]
    ss = y[s_slice]
    if case == ZERO:
        ss[j] = STOPPED
        ks[j] = params.k_max
    else:
        ss[j] = -ss[j]
    return y


@dataclass(frozen=True)
class AdaptiveLayout:
    """Index bookkeeping shared by the adaptive and extremum-seeking builders."""

    m: int
    q: int
    u: slice
    lam: slice
    k: slice
    s: slice


def adaptive_jump_data(game: Game, params: AdaptiveParams, layout: AdaptiveLayout,
                       u_of: Callable[[np.ndarray], np.ndarray] | None = None):
    """Jump set and jump map acting on the ``(k, s)`` blocks of a larger state."""
    g_fn = evaluators(game).g
    u_sl, k_sl, s_sl = layout.u, layout.k, layout.s

    def tags(x):
        return candidates_from(g_fn(x[u_sl]), x[k_sl], x[s_sl], params)

    def jump_set(x):
        if layout.q == 0:
            return False
        s = x[s_sl]
        if np.all(s == STOPPED):
            return False
        return bool(tags(x))

    def jump_map(x):
        return [(tag, apply_jump(x, tag, k_sl, s_sl, params)) for tag in tags(x)]

    return jump_set, jump_map


def build_adaptive_system(game: Game, params: AdaptiveParams) -> HybridSystem:
    """Primal-dual flow with per-constraint gains ``k`` and switches ``s``."""
    m, q = game.m, game.q
    ev = evaluators(game)
    gam = game.gamma_vector
    c = params.c
    b = adaptive_blocks(m, q)
    iu, iz, il, iw, ik, isw = b["u"], b["z"], b["lam"], b["w"], b["k"], b["s"]

    def flow(x):
        u, z, lam, w, k, s = x[iu], x[iz], x[il], x[iw], x[ik], x[isw]
        dx = np.zeros_like(x)
        grad = ev.F(u)
        if q:
            grad = grad + ev.dg(u).T @ lam
            dx[il] = k * lam * (ev.g(u) - lam + w)
            dx[iw] = lam - w
            dx[ik] = gain_rate(s, c)
        dx[iu] = z - u - gam * grad
        dx[iz] = u - z
        return dx

    layout = AdaptiveLayout(m, q, iu, il, ik, isw)
    jump_set, jump_map = adaptive_jump_data(game, params, layout)
    return HybridSystem(
        state_dim=2 * m + 4 * q,
        flow_map=flow,
        flow_set=lambda x: bool(np.all(x[il] >= 0)),
        jump_set=jump_set,
        jump_map=jump_map,
        post_flow=lambda x: clamp_duals(x, il),
        labels=tuple(adaptive_labels(m, q)),
        blocks=b,
        jump_arity=max(1, q),
    )


def hysteresis_gap_bound(game: Game, j: int, params: AdaptiveParams, box=None,
                         n_samples: int = 2000, seed: int = 0) -> float:
    """Lower bound ``eps / max ||grad g_j||`` on the distance between the ``eps`` and ``2 eps`` level sets.

    Exact for affine constraints. Otherwise the gradient norm is maximised
    over points of the ``2 eps`` level set obtained by Newton projection of
    uniform samples from ``box``.
    """
    con = game.constraints[j]
    eps = params.epsilon
    if con.affine:
        norm = float(np.linalg.norm(con.gradient(np.zeros(game.m))))
        if norm == 0:
            raise EmptyLevelSet(f"constraint {j} is constant")
        return eps / norm
    if box is None:
        raise ValueError("a sampling box is required for nonlinear constraints")
    lo, hi = _box_arrays(box)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_samples):
        v = lo + (hi - lo) * rng.random(lo.size)
        for _ in range(50):
            r = con.value(v) - 2 * eps
            grad = np.asarray(con.gradient(v), dtype=float)
            gg = grad @ grad
            if gg == 0:
                break
            v = v - r * grad / gg
            if abs(r) < 1e-12:
                break
        if abs(con.value(v) - 2 * eps) < 1e-8:
            best = max(best, float(np.linalg.norm(con.gradient(v))))
    if best == 0:
        raise EmptyLevelSet(f"no point of the level set g_{j} = 2 eps was found")
    return eps / best


def jump_count_bound(q: int, params: AdaptiveParams, t_min: float, growth_rate: float | None = None) -> int:
    """A-priori jump bound ``2 q ceil((k_max - k_min) / (c t_min) + 1)``."""
    c = params.c if growth_rate is None else growth_rate
    if t_min <= 0:
        raise ValueError("t_min must be positive")
    return int(2 * q * math.ceil((params.k_max - params.k_min) / (c * t_min) + 1))


def max_primal_speed(system: HybridSystem, arc: HybridArc, u_block: str = "u") -> float:
    """Largest ``||u'||`` over the flow samples of an arc (flow map re-evaluated)."""
    sl = arc.blocks[u_block]
    return float(max(np.linalg.norm(system.flow_map(x)[sl]) for x in arc.x))


@dataclass(frozen=True)
class GainAudit:
    monotone: bool
    bounded: bool
    slopes_ok: bool
    jump_count: int
    jump_bound: int
    min_toggle_spacing: float
    t_min: float

    @property
    def passed(self) -> bool:
        return (self.monotone and self.bounded and self.slopes_ok and self.jump_count <= self.jump_bound
                and self.min_toggle_spacing >= self.t_min)


def audit_gains(system: HybridSystem, arc: HybridArc, game: Game, params: AdaptiveParams,
                growth_rate: float | None = None, step_size: float = 0.0,
                slope_tol: float = 1e-6) -> GainAudit:
    """Check gain monotonicity, boxing, slope set, jump bound and toggle spacing along an arc."""
    c = params.c if growth_rate is None else growth_rate
    k = arc.block("k")
    t = arc.t
    dk = np.diff(k, axis=0)
    monotone = bool(np.all(dk >= -1e-12))
    bounded = bool(np.all(k <= params.k_max + c * step_size + 1e-12))
    dt = np.diff(t)
    flow = dt > 0
    slopes = dk[flow] / dt[flow, None]
    # a step that crosses a switch mixes the two slopes; only judge steps whose end points agree on s
    s = arc.block("s")
    same = np.all(s[1:] == s[:-1], axis=1)[flow]
    sl = slopes[same]
    slopes_ok = bool(np.all((np.abs(sl) <= slope_tol) | (np.abs(sl - c) <= slope_tol * (1 + c))))
    speed = max_primal_speed(system, arc)
    gaps = [hysteresis_gap_bound(game, j, params) if game.constraints[j].affine
            else hysteresis_gap_bound(game, j, params, box=[(v.min(), v.max()) for v in arc.block("u").T])
            for j in range(game.q)]
    t_min = min(gaps) / speed if speed > 0 else math.inf
    bound = jump_count_bound(game.q, params, t_min, c) if math.isfinite(t_min) else 2 * game.q
    last: dict[int, float] = {}
    spacing = math.inf
    for rec in arc.jumps:
        j, case = rec.chosen
        if case == ZERO:
            continue
        if j in last:
            spacing = min(spacing, rec.time.t - last[j])
        last[j] = rec.time.t
    return GainAudit(monotone, bounded, slopes_ok, arc.jump_count, bound, spacing, t_min)
