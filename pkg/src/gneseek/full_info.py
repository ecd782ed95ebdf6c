"""Projectionless full-information primal-dual flow.

State ``omega = (u, z, lam, w)``::

    u'   = -u + z - Gamma (F(u) + grad g(u)^T lam)
    z'   = -z + u
    lam' = diag(k) diag(lam) (g(u) - lam + w)      (k = 1 unless a dual gain is given)
    w'   = -w + lam

Stationary points are classified into the KKT-consistent set A, the
spurious equilibria M minus A, and the boundary set L (some ``lam_j = 0``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidReference, NonFiniteState, NotStationary
from .game import (Game, KktPoint, constraint_jacobian, constraint_values, kkt_residual,
                   pseudogradient, pseudogradient_jacobian, fd_step)
from .hybrid import HybridArc, HybridSystem

LAMBDA_CLAMP = 1e-12


@dataclass(frozen=True)
class Evaluators:
    """Bound hot-path evaluators of a game: ``F``, ``g`` and ``grad g``."""

    F: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    dg: Callable[[np.ndarray], np.ndarray]


def evaluators(game: Game) -> Evaluators:
    kern = game.kernels
    F = kern.pseudogradient or (lambda u: pseudogradient(game, u))
    g = kern.constraints or (lambda u: constraint_values(game, u))
    dg = kern.constraint_jacobian or (lambda u: constraint_jacobian(game, u))
    if game.q == 0:
        g = lambda u: np.zeros(0)  # noqa: E731
        dg = lambda u: np.zeros((0, game.m))  # noqa: E731
    return Evaluators(F, g, dg)


def gne_blocks(m: int, q: int) -> dict[str, slice]:
    return {
        "u": slice(0, m),
        "z": slice(m, 2 * m),
        "lam": slice(2 * m, 2 * m + q),
        "w": slice(2 * m + q, 2 * m + 2 * q),
    }


def gne_labels(m: int, q: int) -> list[str]:
    return ([f"u{i}" for i in range(m)] + [f"z{i}" for i in range(m)]
            + [f"lam{j}" for j in range(q)] + [f"w{j}" for j in range(q)])


@dataclass(frozen=True)
class GneState:
    u: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for name in ("u", "z", "lam", "w"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.u, self.z, self.lam, self.w])

    @classmethod
    def from_vector(cls, x, m: int, q: int) -> "GneState":
        x = np.asarray(x, dtype=float)
        b = gne_blocks(m, q)
        return cls(x[b["u"]], x[b["z"]], x[b["lam"]], x[b["w"]])

    @classmethod
    def at_kkt(cls, p: KktPoint) -> "GneState":
        """Embed a KKT point as the equilibrium ``(u*, u*, lam*, lam*)``."""
        return cls(p.u, p.u.copy(), p.lam, p.lam.copy())

    @classmethod
    def initial(cls, u0, q: int, lam0: float = 0.1) -> "GneState":
        """Default initialisation: ``z = u``, ``lam = lam0``, ``w = 0``."""
        u0 = np.asarray(u0, dtype=float)
        return cls(u0, u0.copy(), np.full(q, lam0), np.zeros(q))


def clamp_duals(x: np.ndarray, sl: slice) -> np.ndarray:
    """Zero out round-off negativity of the duals; reject genuine sign violations."""
    lam = x[sl]
    if lam.size and lam.min() < 0:
        if lam.min() < -LAMBDA_CLAMP:
            raise NonFiniteState(f"dual variable reached {lam.min():.3e} < 0")
        x = x.copy()
        x[sl] = np.maximum(lam, 0.0)
    return x


def full_info_flow(game: Game, dual_gain=None) -> Callable[[np.ndarray], np.ndarray]:
    m, q = game.m, game.q
    ev = evaluators(game)
    gam = game.gamma_vector
    k = np.ones(q) if dual_gain is None else np.broadcast_to(np.asarray(dual_gain, float), (q,)).copy()
    iu, iz, il, iw = (slice(0, m), slice(m, 2 * m), slice(2 * m, 2 * m + q),
                      slice(2 * m + q, 2 * m + 2 * q))

    def flow(x: np.ndarray) -> np.ndarray:
        u, z, lam, w = x[iu], x[iz], x[il], x[iw]
        dx = np.empty_like(x)
        grad = ev.F(u)
        if q:
            grad = grad + ev.dg(u).T @ lam
            dx[il] = k * lam * (ev.g(u) - lam + w)
            dx[iw] = lam - w
        dx[iu] = z - u - gam * grad
        dx[iz] = u - z
        return dx

    return flow


def build_full_info_system(game: Game, dual_gain=None) -> HybridSystem:
    """Flow-only hybrid system for the full-information dynamics (empty jump set).

    ``dual_gain`` multiplies the dual rows (default 1); used to compare with
    the adaptive system at frozen gains.
    """
    m, q = game.m, game.q
    blocks = gne_blocks(m, q)
    il = blocks["lam"]
    return HybridSystem(
        state_dim=2 * m + 2 * q,
        flow_map=full_info_flow(game, dual_gain),
        flow_set=lambda x: bool(np.all(x[il] >= 0)),
        post_flow=lambda x: clamp_duals(x, il),
        labels=tuple(gne_labels(m, q)),
        blocks=blocks,
    )


def _dual_log_terms(lam: np.ndarray, lam_star: np.ndarray) -> np.ndarray:
    """``lam - lam* - lam* log(lam / lam*)`` with ``0 log 0 = 0``; +inf if lam=0 < lam*."""
    lam = np.asarray(lam, dtype=float)
    lam_star = np.broadcast_to(lam_star, lam.shape)
    out = lam - lam_star
    pos = lam_star > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(lam > 0, np.log(np.where(lam > 0, lam, 1.0) / np.where(pos, lam_star, 1.0)), -np.inf)
        term = np.where(pos, lam_star * logs, 0.0)
    return out - term


def _check_reference(game: Game, ref: KktPoint, tol_ref: float):
    r = kkt_residual(game, ref)
    if r > tol_ref:
        raise InvalidReference(f"reference KKT residual {r:.3e} exceeds {tol_ref:.1e}")


def lyapunov_value(omega: GneState, ref: KktPoint, game: Game, k=None, tol_ref: float = 1e-5) -> float:
    """Lyapunov function of the full-information (``k=None``) or adaptive flow."""
    _check_reference(game, ref, tol_ref)
    return float(_lyapunov_rows(omega.u[None], omega.z[None], omega.lam[None], omega.w[None],
                                ref, game, None if k is None else np.asarray(k, float)[None])[0])


def _lyapunov_rows(u, z, lam, w, ref: KktPoint, game: Game, k=None) -> np.ndarray:
    ginv = 1.0 / game.gamma_vector
    du, dz = u - ref.u, z - ref.u
    val = 0.5 * (du ** 2 @ ginv) + 0.5 * (dz ** 2 @ ginv)
    if game.q:
        val = val + 0.5 * np.sum((w - ref.lam) ** 2, axis=1)
        terms = _dual_log_terms(lam, ref.lam)
        if k is not None:
            terms = terms / k
        val = val + np.sum(terms, axis=1)
    return val


def lyapunov_along(arc: HybridArc, ref: KktPoint, game: Game, tol_ref: float = 1e-5) -> np.ndarray:
    """Lyapunov samples along an arc; uses the arc's ``k`` block when present."""
    _check_reference(game, ref, tol_ref)
    k = arc.block("k") if "k" in arc.blocks else None
    return _lyapunov_rows(arc.block("u"), arc.block("z"), arc.block("lam"), arc.block("w"),
                          ref, game, k)


def lyapunov_nonincreasing(values: np.ndarray, rel_tol: float = 1e-6) -> bool:
    """Per-step check ``V_{n+1} <= V_n + rel_tol (1 + V_n)``."""
    v = np.asarray(values)
    return bool(np.all(np.diff(v) <= rel_tol * (1.0 + v[:-1])))


IN_A = "InA"
IN_M_NOT_A = "InMNotA"
IN_L = "InL"
NOT_STATIONARY = "NotStationary"


@dataclass(frozen=True)
class StationaryClass:
    tag: str
    residuals: dict = field(default_factory=dict)


def classify_stationary_point(game: Game, omega: GneState, tol: float = 1e-6) -> StationaryClass:
    """Place ``omega`` in A, M minus A, L, or none of them."""
    u, lam = omega.u, omega.lam
    g = constraint_values(game, u)
    stat = pseudogradient(game, u)
    if game.q:
        stat = stat + constraint_jacobian(game, u).T @ lam
    res = {
        "filter_u": float(np.linalg.norm(u - omega.z)),
        "filter_lam": float(np.linalg.norm(lam - omega.w)),
        "stationarity": float(np.linalg.norm(stat)),
        "complementarity": float(np.linalg.norm(lam * g)),
        "min_lambda": float(lam.min()) if lam.size else np.inf,
    }
    in_m = (res["filter_u"] <= tol and res["filter_lam"] <= tol and res["stationarity"] <= tol
            and res["complementarity"] <= tol and (lam.size == 0 or lam.min() >= -tol))
    if in_m:
        res["kkt"] = kkt_residual(game, KktPoint(u, np.maximum(lam, 0.0)))
        if res["kkt"] <= tol:
            return StationaryClass(IN_A, res)
        return StationaryClass(IN_M_NOT_A, res)
    if lam.size and lam.min() <= tol:
        return StationaryClass(IN_L, res)
    return StationaryClass(NOT_STATIONARY, res)


def linearize(game: Game, omega_hat: GneState, h_fd: float = 1e-6, method: str = "fd",
              dual_gain=None, tol: float = 1e-6) -> np.ndarray:
    """Jacobian of the full-information flow at a stationary point.

    ``method="fd"`` differentiates the flow map by central differences;
    ``method="analytic"`` assembles the block form from the pseudogradient
    Jacobian and constraint Hessians.
    """
    m, q = game.m, game.q
    flow = full_info_flow(game, dual_gain)
    x = omega_hat.to_vector()
    fnorm = float(np.linalg.norm(flow(x)))
    if fnorm > tol:
        raise NotStationary(f"flow map norm {fnorm:.3e} exceeds {tol:.1e}")
    n = x.size
    if method == "fd":
        jac = np.empty((n, n))
        for c in range(n):
            h = h_fd * (1.0 + abs(x[c]))
            up, dn = x.copy(), x.copy()
            up[c] += h
            dn[c] -= h
            jac[:, c] = (flow(up) - flow(dn)) / (2 * h)
        return jac
    if method != "analytic":
        raise ValueError(f"unknown method {method!r}")

    u, lam, w = omega_hat.u, omega_hat.lam, omega_hat.w
    k = np.ones(q) if dual_gain is None else np.broadcast_to(np.asarray(dual_gain, float), (q,))
    gam = game.gamma_vector
    curv = pseudogradient_jacobian(game, u)
    for jj, con in enumerate(game.constraints):
        if lam[jj] == 0:
            continue
        if con.hessian is not None:
            hess = np.asarray(con.hessian(u), dtype=float)
        else:
            hess = np.empty((m, m))
            hs = fd_step(u)
            for c in range(m):
                up, dn = u.copy(), u.copy()
                up[c] += hs[c]
                dn[c] -= hs[c]
                hess[:, c] = (con.gradient(up) - con.gradient(dn)) / (2 * hs[c])
        curv = curv + lam[jj] * hess
    M = gam[:, None] * curv
    dg = constraint_jacobian(game, u)
    g = constraint_values(game, u)
    I_m, I_q = np.eye(m), np.eye(q)
    b = gne_blocks(m, q)
    jac = np.zeros((n, n))
    jac[b["u"], b["u"]] = -I_m - M
    jac[b["u"], b["z"]] = I_m
    jac[b["z"], b["u"]] = I_m
    jac[b["z"], b["z"]] = -I_m
    if q:
        jac[b["u"], b["lam"]] = -gam[:, None] * dg.T
        jac[b["lam"], b["u"]] = (k * lam)[:, None] * dg
        jac[b["lam"], b["lam"]] = np.diag(k * (g - lam + w) - k * lam)
        jac[b["lam"], b["w"]] = np.diag(k * lam)
        jac[b["w"], b["lam"]] = I_q
        jac[b["w"], b["w"]] = -I_q
    return jac


def spectral_abscissa(matrix) -> float:
    return float(np.max(np.linalg.eigvals(np.asarray(matrix, dtype=float)).real))
