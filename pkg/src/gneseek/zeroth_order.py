"""Zeroth-order (extremum-seeking) layer on top of the adaptive primal-dual flow.

Each decision coordinate ``c`` owns a unit-circle oscillator
``mu_c = (cos th, sin th)`` with ``th' = 2 pi kappa_c``.  The dither is the
first component of each pair, ``d_c = sign_c mu_c[0]``.  Agents only
measure their cost at the perturbed input ``u + A d`` and demodulate::

    F_hat_c = (2 / a_c) J_{agent(c)}(u + A d) d_c

``zeta`` low-pass filters ``F_hat`` and replaces the true pseudogradient in
the primal dynamics.  Coordinates with ``estimate_mask = False`` use the
analytic partial gradient instead, and amplitudes may be read from other
coordinates of the decision vector (slowly varying amplitudes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adaptive import (AdaptiveLayout, AdaptiveParams, AdaptiveState, adaptive_blocks, adaptive_jump_data,
                       adaptive_labels)
from .errors import ZeroAmplitude
from .full_info import clamp_duals, evaluators
from .game import Game, cost_vector, pseudogradient
from .hybrid import HybridSystem

AMPLITUDE_FLOOR = 1e-9


@dataclass(frozen=True)
class EsParams:
    """Extremum-seeking configuration.

    Per-coordinate arrays (length ``m``): ``amplitudes``, ``frequencies``,
    ``phases``, ``signs``, ``estimate_mask`` and ``amplitude_sources`` (index
    of the decision coordinate holding the amplitude, or -1 for the constant
    entry of ``amplitudes``).  Per-agent arrays (length ``N``): ``eps`` and
    ``nu``.  ``eps0``/``nu0`` scale the dual dynamics.
    """

    amplitudes: np.ndarray
    eps: np.ndarray
    nu: np.ndarray
    eps0: float
    nu0: float
    frequencies: np.ndarray
    phases: np.ndarray | None = None
    signs: np.ndarray | None = None
    estimate_mask: np.ndarray | None = None
    amplitude_sources: np.ndarray | None = None
    shared_frequency: bool = False

    def __post_init__(self):
        amps = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        m = amps.size
        freqs = np.broadcast_to(np.asarray(self.frequencies, dtype=float), (m,)).copy()
        phases = np.zeros(m) if self.phases is None else np.broadcast_to(
            np.asarray(self.phases, dtype=float), (m,)).copy()
        signs = np.ones(m) if self.signs is None else np.broadcast_to(
            np.asarray(self.signs, dtype=float), (m,)).copy()
        mask = np.ones(m, bool) if self.estimate_mask is None else np.broadcast_to(
            np.asarray(self.estimate_mask, dtype=bool), (m,)).copy()
        src = np.full(m, -1) if self.amplitude_sources is None else np.broadcast_to(
            np.asarray(self.amplitude_sources, dtype=int), (m,)).copy()
        for name, val in (("amplitudes", amps), ("frequencies", freqs), ("phases", phases),
                          ("signs", signs), ("estimate_mask", mask), ("amplitude_sources", src),
                          ("eps", np.atleast_1d(np.asarray(self.eps, dtype=float))),
                          ("nu", np.atleast_1d(np.asarray(self.nu, dtype=float)))):
            object.__setattr__(self, name, val)
        if np.any(freqs <= 0):
            raise ValueError("frequencies must be positive")
        if not np.all(np.isin(signs, (-1.0, 1.0))):
            raise ValueError("signs must be +1 or -1")
        if np.any(self.eps < 0) or np.any(self.nu < 0) or self.eps0 < 0 or self.nu0 < 0:
            raise ValueError("timescale gains must be nonnegative")
        est = mask & (src < 0)
        if np.any(amps[est] <= AMPLITUDE_FLOOR):
            raise ValueError("estimated coordinates need positive amplitudes")
        if not self.shared_frequency:
            f = freqs[mask]
            if np.unique(f).size != f.size:
                raise ValueError("distinct-frequency mode needs pairwise distinct frequencies")

    @property
    def m(self) -> int:
        return self.amplitudes.size

    def initial_oscillators(self) -> np.ndarray:
        mu = np.empty(2 * self.m)
        mu[0::2] = np.cos(self.phases)
        mu[1::2] = np.sin(self.phases)
        return mu

    def check_for(self, game: Game):
        if self.m != game.m:
            raise ValueError(f"extremum-seeking parameters cover {self.m} coordinates, game has {game.m}")
        if self.eps.size != game.n_agents or self.nu.size != game.n_agents:
            raise ValueError("eps and nu need one entry per agent")
        if self.shared_frequency:
            for i in range(game.n_agents):
                sl = game.agent_slice(i)
                ph = np.mod(self.phases[sl][self.estimate_mask[sl]], math.pi)
                if np.unique(np.round(ph, 12)).size != ph.size:
                    raise ValueError(f"agent {i}: shared frequency needs distinct phases (mod pi)")


def oscillator_closed_form(t, ep: EsParams) -> np.ndarray:
    """Exact oscillator bank at time(s) ``t``; shape ``(..., 2m)``."""
    t = np.asarray(t, dtype=float)
    th = 2 * math.pi * np.multiply.outer(t, ep.frequencies) + ep.phases
    mu = np.empty(th.shape[:-1] + (2 * ep.m,))
    mu[..., 0::2] = np.cos(th)
    mu[..., 1::2] = np.sin(th)
    return mu


def current_amplitudes(u: np.ndarray, ep: EsParams) -> np.ndarray:
    a = ep.amplitudes.copy()
    src = ep.amplitude_sources
    coupled = src >= 0
    if coupled.any():
        a[coupled] = u[..., src[coupled]]
    return a


def dither(mu: np.ndarray, ep: EsParams) -> np.ndarray:
    """``Sigma D mu`` with masked coordinates silenced."""
    return np.where(ep.estimate_mask, ep.signs * mu[0::2], 0.0)


def perturbed_input(u, mu, ep: EsParams) -> np.ndarray:
    """``u + A Sigma D mu`` (amplitudes read from ``u`` where coupled)."""
    u = np.asarray(u, dtype=float)
    return u + current_amplitudes(u, ep) * dither(np.asarray(mu, dtype=float), ep)


def estimate_pseudogradient(game: Game, u, mu, ep: EsParams) -> np.ndarray:
    """``2 A^-1 J(u + A D mu) D mu`` on estimated coordinates, analytic partials elsewhere."""
    u = np.asarray(u, dtype=float)
    mu = np.asarray(mu, dtype=float)
    a = current_amplitudes(u, ep)
    mask = ep.estimate_mask
    if np.any(a[mask] < AMPLITUDE_FLOOR):
        raise ZeroAmplitude(f"amplitude below {AMPLITUDE_FLOOR:g} on an estimated coordinate")
    d = dither(mu, ep)
    J = cost_vector(game, u + a * d)[game.agent_of_coordinate]
    out = np.zeros(game.m)
    out[mask] = 2.0 * J[mask] * d[mask] / a[mask]
    if not mask.all():
        out[~mask] = pseudogradient(game, u)[~mask]
    return out


def estimator_bias_probe(game: Game, u, ep: EsParams, n_periods: int = 11,
                         samples_per_period: int = 64) -> np.ndarray:
    """``|mean F_hat - F(u)|`` per coordinate with ``u`` frozen.

    The mean is taken over ``n_periods`` periods of the slowest oscillator
    using the closed-form oscillators on a uniform grid (exact for
    trigonometric polynomials whose periods divide the window).
    """
    if ep.shared_frequency:
        raise ValueError("the bias probe needs distinct frequencies")
    u = np.asarray(u, dtype=float)
    window = n_periods / ep.frequencies.min()
    ratio = ep.frequencies.max() / ep.frequencies.min()
    n = int(math.ceil(n_periods * samples_per_period * ratio))
    ts = window * np.arange(n) / n
    total = np.zeros(game.m)
    for mu in oscillator_closed_form(ts, ep):
        total += estimate_pseudogradient(game, u, mu, ep)
    return np.abs(total / n - pseudogradient(game, u))


def empirical_order(amplitudes, biases, floor: float = 1e-10) -> float:
    """Least-squares slope of ``log bias`` against ``log amplitude`` over entries above ``floor``.

    Returns ``inf`` when no entry exceeds the floor (the estimator is exact).
    """
    a = np.asarray(amplitudes, dtype=float)
    b = np.asarray(biases, dtype=float)
    keep = b > floor
    if keep.sum() == 0:
        return math.inf
    if keep.sum() == 1:
        raise ValueError("need at least two biases above the floor to fit an order")
    slope, _ = np.polyfit(np.log(a[keep]), np.log(b[keep]), 1)
    return float(slope)


@dataclass(frozen=True)
class EsState:
    base: AdaptiveState
    zeta: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "zeta", np.asarray(self.zeta, dtype=float).reshape(-1))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(-1))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.base.to_vector(), self.zeta, self.mu])

    @classmethod
    def from_vector(cls, x, m: int, q: int) -> "EsState":
        x = np.asarray(x, dtype=float)
        n = 2 * m + 4 * q
        return cls(AdaptiveState.from_vector(x[:n], m, q), x[n:n + m], x[n + m:n + 3 * m])


def es_blocks(m: int, q: int) -> dict[str, slice]:
    b = adaptive_blocks(m, q)
    n = 2 * m + 4 * q
    b["zeta"] = slice(n, n + m)
    b["mu"] = slice(n + m, n + 3 * m)
    return b


def es_labels(m: int, q: int) -> list[str]:
    return (adaptive_labels(m, q) + [f"zeta{i}" for i in range(m)]
            + [f"mu{i}_{c}" for i in range(m) for c in ("c", "s")])


@dataclass
class DriftMonitor:
    """Largest deviation of an oscillator pair from the unit circle before renormalisation."""

    max_drift: float = 0.0
    steps: int = 0


def build_es_system(game: Game, ap: AdaptiveParams, ep: EsParams,
                    monitor: DriftMonitor | None = None) -> HybridSystem:
    """Extremum-seeking hybrid system; jumps act on ``(k, s)`` only."""
    ep.check_for(game)
    m, q = game.m, game.q
    ev = evaluators(game)
    b = es_blocks(m, q)
    iu, iz, il, iw, ik, isw, izt, imu = (b[n] for n in ("u", "z", "lam", "w", "k", "s", "zeta", "mu"))
    agent = game.agent_of_coordinate
    gam = game.gamma_vector
    primal_rate = (ep.nu * ep.eps)[agent]
    filter_rate = ep.nu[agent]
    dual_rate = ep.nu0 * ep.eps0
    c = ap.c
    omega = 2 * math.pi * ep.frequencies
    mask = ep.estimate_mask
    all_est = bool(mask.all())
    signs = ep.signs
    amps0 = ep.amplitudes
    src = ep.amplitude_sources
    coupled = src >= 0
    any_coupled = bool(coupled.any())
    src_c = src[coupled]
    cost_fn = game.kernels.costs or (lambda u: cost_vector(game, u))

    half_c = 0.5 * c
    n_mu = 2 * m

    def flow(x):
        u, lam, mu = x[iu], x[il], x[imu]
        dx = np.empty_like(x)
        if any_coupled:
            a = amps0.copy()
            a[coupled] = u[src_c]
            if np.any(a[mask] < AMPLITUDE_FLOOR):
                raise ZeroAmplitude(f"amplitude below {AMPLITUDE_FLOOR:g} on an estimated coordinate")
        else:
            a = amps0
        cosines = mu[0::2]
        if all_est:
            d = signs * cosines
            fhat = (2.0 * cost_fn(u + a * d)[agent]) * d / a
        else:
            d = np.where(mask, signs * cosines, 0.0)
            J = np.asarray(cost_fn(u + a * d), dtype=float)[agent]
            fhat = np.where(mask, 2.0 * J * d / np.where(mask, a, 1.0), ev.F(u))
        zeta = x[izt]
        z = x[iz]
        if q:
            w, k, s = x[iw], x[ik], x[isw]
            grad = zeta + ev.dg(u).T @ lam
            dx[il] = dual_rate * k * lam * (ev.g(u) - lam + w)
            dx[iw] = dual_rate * (lam - w)
            dx[ik] = (dual_rate * half_c) * (1.0 + s) * s * s
            dx[isw] = 0.0
        else:
            grad = zeta
        dx[iu] = primal_rate * (z - u - gam * grad)
        dx[iz] = primal_rate * (u - z)
        dx[izt] = filter_rate * (fhat - zeta)
        dmu = np.empty(n_mu)
        dmu[0::2] = -omega * mu[1::2]
        dmu[1::2] = omega * mu[0::2]
        dx[imu] = dmu
        return dx

    def post(x):
        x = clamp_duals(x, il)
        mu = x[imu]
        norms = np.hypot(mu[0::2], mu[1::2])
        if monitor is not None:
            monitor.max_drift = max(monitor.max_drift, float(np.max(np.abs(norms - 1.0))))
            monitor.steps += 1
        mu = mu.copy()
        mu[0::2] /= norms
        mu[1::2] /= norms
        x[imu] = mu
        return x

    layout = AdaptiveLayout(m, q, iu, il, ik, isw)
    jump_set, jump_map = adaptive_jump_data(game, ap, layout)
    return HybridSystem(
        state_dim=5 * m + 4 * q,
        flow_map=flow,
        flow_set=lambda x: bool(np.all(x[il] >= 0)),
        jump_set=jump_set,
        jump_map=jump_map,
        post_flow=post,
        labels=tuple(es_labels(m, q)),
        blocks=b,
        jump_arity=max(1, q),
    )


@dataclass(frozen=True)
class PairedDither:
    """Shared-frequency dither layout with antiphase neighbours.

    Coordinates ``2i`` and ``2i+1`` of the listed block get signs ``(+, -)``
    and phase ``pair_phases[i]``.
    """

    frequency: float = 1.0
    pair_phases: tuple[float, ...] = field(default_factory=lambda: (0.0, math.pi / 2))

    def arrays(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if n % 2:
            raise ValueError("paired dither needs an even number of coordinates")
        if len(self.pair_phases) < n // 2:
            raise ValueError("one phase per pair required")
        signs = np.tile([1.0, -1.0], n // 2)
        phases = np.repeat(np.asarray(self.pair_phases[: n // 2], dtype=float), 2)
        return np.full(n, self.frequency), phases, signs
