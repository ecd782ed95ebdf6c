"""Built-in games: the two-player bilinear game, the gas-lift oil game, and helpers.

The oil game stacks eight scalar players: four well players ``x_i`` that
maximise their own extraction polynomial ``f_i`` and four amplitude players
``a_i`` that balance the dithers of neighbouring wells inside a log barrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import BarrierDomain, TailTooShort
from .game import Constraint, Game, GameKernels, _box_arrays, affine_constraint, pseudogradient_jacobian


# ---------------------------------------------------------------- two players

TWO_PLAYER_DEFAULTS = {
    "amplitude": 0.1,
    "eps": 0.2,
    "nu": 0.2,
    "k0": 1.0,
    "lambda0": 0.1,
    "hysteresis": 0.1,
    "k_min": 1.0,
    "k_max": 100.0,
    "frequencies": (11.0, 21.0),
}


def two_player_monotone(gamma=(1.0, 1.0)) -> Game:
    """``J_1 = (u_1 - 2)(u_2 + 3) = -J_2`` with ``u_1 >= u_2 + 1`` and ``u_2 <= 3``."""

    def J1(u):
        return (u[0] - 2.0) * (u[1] + 3.0)

    def J2(u):
        return -(u[0] - 2.0) * (u[1] + 3.0)

    jac_g = np.array([[-1.0, 1.0], [0.0, 1.0]])
    skew = np.array([[0.0, 1.0], [-1.0, 0.0]])
    kernels = GameKernels(
        costs=lambda u: np.array([J1(u), J2(u)]),
        pseudogradient=lambda u: np.array([u[1] + 3.0, 2.0 - u[0]]),
        constraints=lambda u: np.array([u[1] + 1.0 - u[0], u[1] - 3.0]),
        constraint_jacobian=lambda u: jac_g,
        pseudogradient_jacobian=lambda u: skew.copy(),
    )
    return Game(
        dims=(1, 1),
        costs=(J1, J2),
        constraints=(affine_constraint([-1.0, 1.0], 1.0), affine_constraint([0.0, 1.0], -3.0)),
        gamma=gamma,
        cost_gradients=(lambda u: np.array([u[1] + 3.0]), lambda u: np.array([2.0 - u[0]])),
        kernels=kernels,
        name="two_player_monotone",
    )


def rotation_game(offset: float = 1.0) -> Game:
    """``F(u) = (u_2, -u_1)`` with the single constraint ``u_1 + offset <= 0``.

    For ``offset > 0`` the constraint excludes the origin, which is then a
    stationary point of the primal-dual flow with ``lam = 0`` that violates
    the constraint.
    """
    return Game(
        dims=(1, 1),
        costs=(lambda u: u[0] * u[1], lambda u: -u[0] * u[1]),
        constraints=(affine_constraint([1.0, 0.0], offset),),
        cost_gradients=(lambda u: np.array([u[1]]), lambda u: np.array([-u[0]])),
        kernels=GameKernels(pseudogradient=lambda u: np.array([u[1], -u[0]]),
                            pseudogradient_jacobian=lambda u: np.array([[0.0, 1.0], [-1.0, 0.0]])),
        name="rotation",
    )


# ---------------------------------------------------------------- oil wells

WELL_COEFFICIENTS = (
    (-3.9e-7, 2.1e-4, -0.043, 3.7, 12.0),
    (-1.3e-7, 1.0e-4, -0.028, 3.1, -17.0),
    (-1.2e-7, 1.0e-4, -0.028, 2.5, -16.0),
    (-4.0e-7, 1.8e-4, -0.036, 3.5, 10.0),
)


@dataclass(frozen=True)
class OilParams:
    """Parameters of the gas-lift game. Well coefficients run from x^4 down to x^0."""

    l: float = 10.0
    a_min: float = 5.0
    a_max: float = 10.0
    p: float = 100.0
    b: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0)
    x_max: float = 200.0
    wells: tuple[tuple[float, ...], ...] = WELL_COEFFICIENTS

    def __post_init__(self):
        if not 0 < self.a_min < self.a_max:
            raise ValueError("need 0 < a_min < a_max")
        if len(self.b) != len(self.wells):
            raise ValueError("one constraint weight per well required")
        if len(self.wells) % 2:
            raise ValueError("wells are paired; an even number is required")

    @property
    def n_wells(self) -> int:
        return len(self.wells)


@dataclass(frozen=True)
class WellBank:
    """Vectorised evaluation of the well polynomials and their derivatives."""

    coefs: np.ndarray = field(repr=False)

    @classmethod
    def from_params(cls, op: OilParams) -> "WellBank":
        return cls(np.asarray(op.wells, dtype=float))

    def rates(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coefs
        return (((c[:, 0] * x + c[:, 1]) * x + c[:, 2]) * x + c[:, 3]) * x + c[:, 4]

    def slopes(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coefs
        return ((4 * c[:, 0] * x + 3 * c[:, 1]) * x + 2 * c[:, 2]) * x + c[:, 3]

    def curvatures(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coefs
        return (12 * c[:, 0] * x + 6 * c[:, 1]) * x + 2 * c[:, 2]


def total_oil_rate(x, op: OilParams | None = None) -> float:
    """Total extraction ``sum_i f_i(x_i)``."""
    return float(np.sum(WellBank.from_params(op or OilParams()).rates(x)))


def well_argmax(op: OilParams, i: int) -> float:
    """Unconstrained maximiser of well ``i`` (root of its slope on the concave range)."""
    bank = WellBank.from_params(op)
    slope = lambda v: bank.slopes(np.full(op.n_wells, v))[i]  # noqa: E731
    return float(brentq(slope, 0.0, 500.0))


def oil_extraction(op: OilParams | None = None, optimize_amplitudes: bool = True,
                   gamma_x: float = 10.0, gamma_a: float = 10.0) -> Game:
    """The gas-lift game.

    With ``optimize_amplitudes`` the decision vector is ``(x_1..x_4, a_1..a_4)``;
    otherwise only the four well players remain (amplitudes fixed externally).
    """
    op = op or OilParams()
    bank = WellBank.from_params(op)
    n = op.n_wells
    b = np.asarray(op.b, dtype=float)
    ln_p = math.log(op.p)
    m = 2 * n if optimize_amplitudes else n
    a_lo, a_hi, l = op.a_min, op.a_max, op.l
    even, odd = slice(1, n, 2), slice(0, n, 2)  # well 2i and well 2i-1 in one-based terms

    def pairing(x, a):
        s = bank.slopes(x)
        return s[even] * a[even] - s[odd] * a[odd], s

    def check_domain(a):
        if a.min() <= a_lo or a.max() >= a_hi:
            raise BarrierDomain(f"amplitudes {a} outside the open interval ({a_lo}, {a_hi})")

    def amplitude_cost(u):
        x, a = u[:n], u[n:]
        check_domain(a)
        d, _ = pairing(x, a)
        return 0.5 * l * float(d @ d) - float(np.sum(np.log((a - a_lo) * (a_hi - a)))) / ln_p

    def costs(u):
        out = np.empty(n + (n if optimize_amplitudes else 0))
        out[:n] = -bank.rates(u[:n])
        if optimize_amplitudes:
            out[n:] = amplitude_cost(u)
        return out

    def pseudogradient(u):
        x = u[:n]
        out = np.empty(m)
        if not optimize_amplitudes:
            out[:] = -bank.slopes(x)
            return out
        a = u[n:]
        check_domain(a)
        d, s = pairing(x, a)
        out[:n] = -s
        ga = np.empty(n)
        ga[even] = l * d * s[even]
        ga[odd] = -l * d * s[odd]
        ga -= (1.0 / (a - a_lo) - 1.0 / (a_hi - a)) / ln_p
        out[n:] = ga
        return out

    def pseudogradient_jacobian_fn(u):
        x = u[:n]
        jac = np.zeros((m, m))
        c = bank.curvatures(x)
        jac[:n, :n] = np.diag(-c)
        if not optimize_amplitudes:
            return jac
        a = u[n:]
        d, s = pairing(x, a)
        for pair in range(n // 2):
            i, k = 2 * pair, 2 * pair + 1  # zero-based (odd, even) wells
            # rows: F_{a_k} = l d s_k, F_{a_i} = -l d s_i with d = s_k a_k - s_i a_i
            dd_dx = np.zeros(n)
            dd_dx[k], dd_dx[i] = c[k] * a[k], -c[i] * a[i]
            dd_da = np.zeros(n)
            dd_da[k], dd_da[i] = s[k], -s[i]
            jac[n + k, :n] = l * (dd_dx * s[k])
            jac[n + k, k] += l * d[pair] * c[k]
            jac[n + i, :n] = -l * (dd_dx * s[i])
            jac[n + i, i] -= l * d[pair] * c[i]
            jac[n + k, n:] = l * dd_da * s[k]
            jac[n + i, n:] = -l * dd_da * s[i]
        jac[n:, n:] += np.diag((1.0 / (a - a_lo) ** 2 + 1.0 / (a_hi - a) ** 2) / ln_p)
        return jac

    coupling = np.concatenate([b, np.zeros(m - n)])
    cons = (affine_constraint(coupling, -op.x_max),)
    jac_g = coupling[None, :]

    def well_cost(i):
        return lambda u: -float(bank.rates(u[:n])[i])

    def well_grad(i):
        return lambda u: np.array([-bank.slopes(u[:n])[i]])

    cost_fns = [well_cost(i) for i in range(n)]
    grad_fns = [well_grad(i) for i in range(n)]
    if optimize_amplitudes:
        cost_fns += [amplitude_cost] * n

        def amp_grad(i):
            return lambda u: pseudogradient(u)[n + i: n + i + 1]

        grad_fns += [amp_grad(i) for i in range(n)]
    gamma = [gamma_x] * n + ([gamma_a] * n if optimize_amplitudes else [])
    kernels = GameKernels(
        costs=costs,
        pseudogradient=pseudogradient,
        constraints=lambda u: np.array([coupling @ u - op.x_max]),
        constraint_jacobian=lambda u: jac_g,
        pseudogradient_jacobian=pseudogradient_jacobian_fn,
    )
    return Game(dims=(1,) * m, costs=tuple(cost_fns), constraints=cons, gamma=tuple(gamma),
                cost_gradients=tuple(grad_fns), kernels=kernels,
                name="oil_extraction" if optimize_amplitudes else "oil_extraction_fixed")


def oil_initial_decision(op: OilParams | None = None, optimize_amplitudes: bool = True,
                         x0: float = 10.0) -> np.ndarray:
    """Default start: every well at ``x0``, amplitudes at the middle of the box."""
    op = op or OilParams()
    u = [x0] * op.n_wells
    if optimize_amplitudes:
        u += [0.5 * (op.a_min + op.a_max)] * op.n_wells
    return np.asarray(u, dtype=float)


@dataclass(frozen=True)
class OilOptimum:
    x: np.ndarray
    lam: float
    rate: float
    iterations: int


def oil_optimum(op: OilParams | None = None, step: float = 5.0, tol: float = 1e-10,
                max_iter: int = 200_000) -> OilOptimum:
    """Maximise ``sum f_i(x_i)`` over ``{b.x <= x_max, x >= 0}`` by projected gradient ascent.

    The projection onto the intersection of the half-space and the orthant
    is computed exactly by bisection on the half-space multiplier.
    """
    op = op or OilParams()
    bank = WellBank.from_params(op)
    b = np.asarray(op.b, dtype=float)

    def project(y):
        p = np.maximum(y, 0.0)
        if b @ p <= op.x_max:
            return p, 0.0
        lo, hi = 0.0, 1.0
        while b @ np.maximum(y - hi * b, 0.0) > op.x_max:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if b @ np.maximum(y - mid * b, 0.0) > op.x_max:
                lo = mid
            else:
                hi = mid
        return np.maximum(y - hi * b, 0.0), hi

    x = np.zeros(op.n_wells)
    mult = 0.0
    for it in range(1, max_iter + 1):
        x_new, mult = project(x + step * bank.slopes(x))
        if np.max(np.abs(x_new - x)) < tol:
            x = x_new
            break
        x = x_new
    return OilOptimum(x=x, lam=mult / step, rate=total_oil_rate(x, op), iterations=it)


# ---------------------------------------------------------------- probes


@dataclass(frozen=True)
class PsdReport:
    n_samples: int
    min_eigenvalue: float
    witness: np.ndarray
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.min_eigenvalue >= -self.tolerance


def psd_probe(game: Game, box, n_samples: int = 1000, seed: int = 0,
              tolerance: float = 1e-7) -> PsdReport:
    """Minimum eigenvalue of the symmetrised pseudogradient Jacobian over box samples."""
    lo, hi = _box_arrays(box)
    rng = np.random.default_rng(seed)
    worst, witness = np.inf, None
    for _ in range(n_samples):
        u = lo + (hi - lo) * rng.random(lo.size)
        jac = pseudogradient_jacobian(game, u)
        ev = float(np.linalg.eigvalsh(0.5 * (jac + jac.T))[0])
        if ev < worst:
            worst, witness = ev, u
    return PsdReport(n_samples, worst, witness, tolerance)


def oscillation_amplitude(t, series, period: float, tail_fraction: float = 0.2,
                          min_periods: int = 3) -> float:
    """Mean peak-to-peak of ``series`` over the whole periods inside the tail window."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(series, dtype=float)
    start = t[-1] - tail_fraction * (t[-1] - t[0])
    n_periods = int(math.floor((t[-1] - start) / period + 1e-9))
    if n_periods < min_periods:
        raise TailTooShort(f"tail holds {n_periods} whole periods, need {min_periods}")
    first = t[-1] - n_periods * period
    ranges = []
    for k in range(n_periods):
        lo_t, hi_t = first + k * period, first + (k + 1) * period
        sel = (t >= lo_t - 1e-9) & (t <= hi_t + 1e-9)
        if sel.sum() < 2:
            raise TailTooShort("too few samples per period to measure the oscillation")
        ranges.append(y[sel].max() - y[sel].min())
    return float(np.mean(ranges))
