"""Games with coupling constraints, pseudogradients and KKT diagnostics.

A game has ``N`` agents with decision blocks of sizes ``dims``; agent ``i``
minimises ``J_i(u)`` subject to shared constraints ``g(u) <= 0``.  All
evaluators receive the full stacked decision vector ``u``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NegativeLambda, NonFiniteCost, OracleScaleExceeded

Vector = np.ndarray
ScalarFn = Callable[[Vector], float]
VectorFn = Callable[[Vector], Vector]


def fd_step(u: Vector) -> Vector:
    return 1e-6 * (1.0 + np.abs(u))


@dataclass(frozen=True)
class Constraint:
    """One coupling constraint ``g_j(u) <= 0`` with its gradient."""

    value: ScalarFn
    gradient: VectorFn
    hessian: Callable[[Vector], np.ndarray] | None = None
    affine: bool = False


def affine_constraint(a, b: float) -> Constraint:
    """``g(u) = a.u + b``."""
    a = np.asarray(a, dtype=float)
    m = a.size
    return Constraint(
        value=lambda u: float(a @ u + b),
        gradient=lambda u: a.copy(),
        hessian=lambda u: np.zeros((m, m)),
        affine=True,
    )


@dataclass(frozen=True)
class GameKernels:
    """Optional vectorised evaluators used on hot paths instead of per-agent loops."""

    costs: VectorFn | None = None
    pseudogradient: VectorFn | None = None
    constraints: VectorFn | None = None
    constraint_jacobian: Callable[[Vector], np.ndarray] | None = None
    pseudogradient_jacobian: Callable[[Vector], np.ndarray] | None = None


@dataclass(frozen=True)
class Game:
    dims: tuple[int, ...]
    costs: tuple[ScalarFn, ...]
    constraints: tuple[Constraint, ...] = ()
    gamma: tuple[float, ...] | None = None
    cost_gradients: tuple[VectorFn, ...] | None = None
    kernels: GameKernels = field(default_factory=GameKernels)
    name: str = "game"

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if any(d < 1 for d in self.dims):
            raise ValueError("agent dimensions must be positive")
        if len(self.costs) != len(self.dims):
            raise ValueError("one cost per agent required")
        gamma = (1.0,) * len(self.dims) if self.gamma is None else tuple(float(g) for g in self.gamma)
        if len(gamma) != len(self.dims) or min(gamma) <= 0:
            raise ValueError("gamma needs one positive gain per agent")
        object.__setattr__(self, "gamma", gamma)
        if self.cost_gradients is not None:
            grads = tuple(self.cost_gradients)
            if len(grads) != len(self.dims):
                raise ValueError("one cost gradient per agent required")
            object.__setattr__(self, "cost_gradients", grads)

    @property
    def n_agents(self) -> int:
        return len(self.dims)

    @property
    def m(self) -> int:
        return sum(self.dims)

    @property
    def q(self) -> int:
        return len(self.constraints)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(itertools.accumulate((0,) + self.dims))

    def agent_slice(self, i: int) -> slice:
        off = self.offsets
        return slice(off[i], off[i + 1])

    @property
    def agent_of_coordinate(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_agents), self.dims)

    @property
    def gamma_vector(self) -> np.ndarray:
        """Diagonal of the primal gain matrix, one entry per coordinate."""
        return np.repeat(np.asarray(self.gamma), self.dims)


def _check_finite(values, what: str):
    if not np.all(np.isfinite(values)):
        raise NonFiniteCost(f"{what} evaluated to a non-finite value")


def cost_vector(game: Game, u) -> np.ndarray:
    """All agent costs ``(J_1(u), ..., J_N(u))``."""
    u = np.asarray(u, dtype=float)
    if game.kernels.costs is not None:
        out = np.asarray(game.kernels.costs(u), dtype=float)
    else:
        out = np.array([J(u) for J in game.costs], dtype=float)
    _check_finite(out, "cost")
    return out


def _fd_partial(J: ScalarFn, u: Vector, sl: slice) -> np.ndarray:
    h = fd_step(u)
    grad = np.empty(sl.stop - sl.start)
    for n, k in enumerate(range(sl.start, sl.stop)):
        up, dn = u.copy(), u.copy()
        up[k] += h[k]
        dn[k] -= h[k]
        jp, jm = J(up), J(dn)
        _check_finite((jp, jm), "cost")
        grad[n] = (jp - jm) / (2 * h[k])
    return grad


def pseudogradient(game: Game, u) -> np.ndarray:
    """Stacked partial gradients ``col(grad_{u_i} J_i(u))``.

    Analytic gradients are used when the game provides them, central
    differences with step ``1e-6 (1 + |u_k|)`` otherwise.
    """
    u = np.asarray(u, dtype=float)
    _check_finite(u, "decision vector")
    if game.kernels.pseudogradient is not None:
        out = np.asarray(game.kernels.pseudogradient(u), dtype=float)
        _check_finite(out, "pseudogradient")
        return out
    parts = []
    for i, J in enumerate(game.costs):
        sl = game.agent_slice(i)
        if game.cost_gradients is not None:
            parts.append(np.asarray(game.cost_gradients[i](u), dtype=float).reshape(-1))
        else:
            parts.append(_fd_partial(J, u, sl))
    out = np.concatenate(parts)
    _check_finite(out, "pseudogradient")
    return out


def pseudogradient_fd(game: Game, u) -> np.ndarray:
    """Central-difference pseudogradient, ignoring any analytic gradients."""
    u = np.asarray(u, dtype=float)
    return np.concatenate([_fd_partial(J, u, game.agent_slice(i)) for i, J in enumerate(game.costs)])


def pseudogradient_jacobian(game: Game, u) -> np.ndarray:
    """Jacobian of the pseudogradient, analytic if available, else central differences."""
    u = np.asarray(u, dtype=float)
    if game.kernels.pseudogradient_jacobian is not None:
        return np.asarray(game.kernels.pseudogradient_jacobian(u), dtype=float)
    h = fd_step(u)
    jac = np.empty((game.m, game.m))
    for k in range(game.m):
        up, dn = u.copy(), u.copy()
        up[k] += h[k]
        dn[k] -= h[k]
        jac[:, k] = (pseudogradient(game, up) - pseudogradient(game, dn)) / (2 * h[k])
    return jac


def constraint_values(game: Game, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if game.q == 0:
        return np.zeros(0)
    if game.kernels.constraints is not None:
        out = np.asarray(game.kernels.constraints(u), dtype=float)
    else:
        out = np.array([c.value(u) for c in game.constraints], dtype=float)
    _check_finite(out, "constraint")
    return out


def constraint_jacobian(game: Game, u) -> np.ndarray:
    """Rows are constraint gradients, shape ``(q, m)``."""
    u = np.asarray(u, dtype=float)
    if game.q == 0:
        return np.zeros((0, game.m))
    if game.kernels.constraint_jacobian is not None:
        out = np.asarray(game.kernels.constraint_jacobian(u), dtype=float)
    else:
        out = np.vstack([np.asarray(c.gradient(u), dtype=float) for c in game.constraints])
    _check_finite(out, "constraint gradient")
    return out


@dataclass(frozen=True)
class KktPoint:
    u: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float).reshape(-1))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float).reshape(-1))
        if np.any(self.lam < 0):
            raise NegativeLambda(f"dual candidate has negative entries: {self.lam}")


def kkt_parts(game: Game, u, lam) -> tuple[np.ndarray, np.ndarray]:
    """Stationarity vector ``F(u) + grad g(u)^T lam`` and natural complementarity residual."""
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    stat = pseudogradient(game, u)
    if game.q:
        stat = stat + constraint_jacobian(game, u).T @ lam
        comp = np.minimum(lam, -constraint_values(game, u))
    else:
        comp = np.zeros(0)
    return stat, comp


def kkt_residual(game: Game, p: KktPoint) -> float:
    """``||F(u) + grad g(u)^T lam|| + ||min(lam, -g(u))||``; zero exactly on KKT points."""
    if np.any(p.lam < 0):
        raise NegativeLambda("lambda must be nonnegative")
    stat, comp = kkt_parts(game, p.u, p.lam)
    return float(np.linalg.norm(stat) + np.linalg.norm(comp))


@dataclass(frozen=True)
class MonotonicityReport:
    n_samples: int
    min_inner_product: float
    witnesses: tuple[np.ndarray, np.ndarray]
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return self.min_inner_product >= -self.tolerance


def _box_arrays(box) -> tuple[np.ndarray, np.ndarray]:
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 0] > box[:, 1]):
        raise ValueError("box must be a sequence of (low, high) pairs with low <= high")
    return box[:, 0], box[:, 1]


def monotonicity_probe(game: Game, box, n_samples: int = 1000, seed: int = 0,
                       tolerance: float = 1e-9) -> MonotonicityReport:
    """Minimum of ``<u - v, F(u) - F(v)>`` over uniformly sampled pairs in ``box``."""
    lo, hi = _box_arrays(box)
    rng = np.random.default_rng(seed)
    worst, pair = np.inf, (lo, lo)
    for _ in range(n_samples):
        u = rng.uniform(lo, hi)
        v = rng.uniform(lo, hi)
        val = float((u - v) @ (pseudogradient(game, u) - pseudogradient(game, v)))
        if val < worst:
            worst, pair = val, (u, v)
    return MonotonicityReport(n_samples, worst, pair, tolerance)


def _residual_at(game: Game, y: np.ndarray) -> float:
    m = game.m
    lam = np.maximum(y[m:], 0.0)
    stat, comp = kkt_parts(game, y[:m], lam)
    return float(np.linalg.norm(stat) + np.linalg.norm(comp))


def _pattern_refine(game: Game, y: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                    step: np.ndarray, tol: float, max_iter: int = 20000) -> tuple[np.ndarray, float]:
    """Compass search with step bisection, confined to the search box."""
    best = _residual_at(game, y)
    step = step.copy()
    dirs = np.vstack([np.eye(y.size), -np.eye(y.size)])
    for _ in range(max_iter):
        if best <= 1e-3 * tol or step.max() < 1e-13:
            break
        improved = False
        for d in dirs:
            cand = np.clip(y + d * step, lo, hi)
            r = _residual_at(game, cand)
            if r < best:
                y, best, improved = cand, r, True
                break
        if not improved:
            step *= 0.5
    return y, best


def solve_kkt_oracle(game: Game, box, lambda_max: float = 10.0, grid_points_per_dim: int = 12,
                     refine_tol: float = 1e-6, max_candidates: int = 60,
                     merge_radius: float = 1e-3) -> list[KktPoint]:
    """Brute-force KKT point search over ``box x [0, lambda_max]^q``.

    The residual is tabulated on a uniform grid, grid local minima are
    refined by compass search with step halving, and refined points whose
    residual is at most ``refine_tol`` are returned (duplicates merged).
    Only meant for tiny problems (``m + q <= 6``).
    """
    m, q = game.m, game.q
    if m + q > 6:
        raise OracleScaleExceeded(f"m + q = {m + q} exceeds the brute-force limit of 6")
    ulo, uhi = _box_arrays(box)
    if ulo.size != m:
        raise ValueError("box dimension does not match the game")
    lo = np.concatenate([ulo, np.zeros(q)])
    hi = np.concatenate([uhi, np.full(q, float(lambda_max))])
    n = grid_points_per_dim
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    shape = (n,) * (m + q)
    res = np.empty(shape)
    for idx in itertools.product(range(n), repeat=m + q):
        y = np.array([axes[k][i] for k, i in enumerate(idx)])
        res[idx] = _residual_at(game, y)

    # grid points no larger than any of their neighbours
    padded = np.pad(res, 1, mode="constant", constant_values=np.inf)
    is_min = np.ones(shape, dtype=bool)
    for off in itertools.product((-1, 0, 1), repeat=m + q):
        if not any(off):
            continue
        view = padded[tuple(slice(1 + o, 1 + o + n) for o in off)]
        is_min &= res <= view
    cand_idx = np.argwhere(is_min)
    order = np.argsort(res[tuple(cand_idx.T)])
    cand_idx = cand_idx[order][:max_candidates]

    spacing = (hi - lo) / max(n - 1, 1)
    spacing[spacing == 0] = 1.0
    found: list[np.ndarray] = []
    for idx in cand_idx:
        y0 = np.array([axes[k][i] for k, i in enumerate(idx)])
        y, r = _pattern_refine(game, y0, lo, hi, spacing, refine_tol)
        if r <= refine_tol and not any(np.linalg.norm(y - f) < merge_radius for f in found):
            found.append(y)
    return [KktPoint(y[:m], np.maximum(y[m:], 0.0)) for y in found]


class Polynomial:
    """Multivariate polynomial ``sum_t c_t prod_k u_k^{p_tk}`` with analytic derivatives."""

    def __init__(self, coefs: Sequence[float], powers):
        self.coefs = np.asarray(coefs, dtype=float).reshape(-1)
        self.powers = np.asarray(powers, dtype=int).reshape(len(self.coefs), -1)
        if np.any(self.powers < 0):
            raise ValueError("powers must be nonnegative")

    @property
    def nvars(self) -> int:
        return self.powers.shape[1]

    @classmethod
    def from_terms(cls, terms, nvars: int) -> "Polynomial":
        """Build from records ``{"coef": c, "powers": [p_0, ..., p_{m-1}]}``."""
        coefs, powers = [], []
        for term in terms:
            p = list(term.get("powers", []))
            if len(p) != nvars:
                raise ValueError(f"term powers {p} do not have length {nvars}")
            coefs.append(float(term["coef"]))
            powers.append(p)
        if not coefs:
            coefs, powers = [0.0], [[0] * nvars]
        return cls(coefs, powers)

    def __call__(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(self.coefs @ np.prod(u ** self.powers, axis=1))

    def gradient(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.zeros(self.nvars)
        for k in range(self.nvars):
            p = self.powers.copy()
            c = self.coefs * p[:, k]
            p[:, k] = np.maximum(p[:, k] - 1, 0)
            out[k] = c @ np.prod(u ** p, axis=1)
        return out

    def hessian(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        n = self.nvars
        out = np.zeros((n, n))
        for a in range(n):
            for b in range(n):
                p = self.powers.copy()
                c = self.coefs * p[:, a]
                p[:, a] = np.maximum(p[:, a] - 1, 0)
                c = c * p[:, b]
                p[:, b] = np.maximum(p[:, b] - 1, 0)
                out[a, b] = c @ np.prod(u ** p, axis=1)
        return out


def polynomial_game(dims, cost_polys: Sequence[Polynomial], constraint_polys: Sequence[Polynomial] = (),
                    gamma=None, name: str = "polynomial") -> Game:
    """Game whose costs and constraints are polynomials in the stacked decision vector."""
    dims = tuple(dims)
    offsets = tuple(itertools.accumulate((0,) + dims))

    def grad_of(i, poly):
        sl = slice(offsets[i], offsets[i + 1])
        return lambda u: poly.gradient(u)[sl]

    constraints = tuple(
        Constraint(value=p, gradient=p.gradient, hessian=p.hessian,
                   affine=bool(np.all(p.powers.sum(axis=1) <= 1)))
        for p in constraint_polys)
    return Game(dims=dims, costs=tuple(cost_polys), constraints=constraints, gamma=gamma,
                cost_gradients=tuple(grad_of(i, p) for i, p in enumerate(cost_polys)), name=name)
