"""Hybrid dynamical systems and a fixed-step hybrid integrator.

A system is the data ``(C, D, F, G)``: flow set, jump set, flow map and a
set-valued jump map.  :func:`integrate` produces a :class:`HybridArc`
indexed by hybrid time ``(t, j)``.  Flows use classical RK4 with a constant
step; the jump set is tested once per completed step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from .errors import EmptyJumpMap, NonFiniteState, ZenoGuardTripped

FlowMap = Callable[[np.ndarray], np.ndarray]
StatePredicate = Callable[[np.ndarray], bool]
# A jump map returns candidate successors, each optionally tagged:
# either plain arrays or ``(tag, array)`` pairs.
JumpMap = Callable[[np.ndarray], Sequence]

HALT_MAX_TIME = "max_time"
HALT_MAX_JUMPS = "max_jumps"
HALT_OUTSIDE = "outside_sets"


@dataclass(frozen=True)
class HybridSystem:
    """Data of a hybrid system.

    ``flow_set=None`` means the whole space, ``jump_set=None`` the empty set.
    ``post_flow`` is applied after every completed flow step; builders use it
    to absorb integrator round-off (dual clamping, oscillator renormalisation).
    """

    state_dim: int
    flow_map: FlowMap
    flow_set: StatePredicate | None = None
    jump_set: StatePredicate | None = None
    jump_map: JumpMap | None = None
    post_flow: Callable[[np.ndarray], np.ndarray] | None = None
    labels: tuple[str, ...] | None = None
    blocks: Mapping[str, slice] = field(default_factory=dict)
    jump_arity: int = 1

    def in_flow_set(self, x: np.ndarray) -> bool:
        return True if self.flow_set is None else bool(self.flow_set(x))

    def in_jump_set(self, x: np.ndarray) -> bool:
        return False if self.jump_set is None else bool(self.jump_set(x))

    def jump_options(self, x: np.ndarray) -> list[tuple[Hashable, np.ndarray]]:
        """Normalised jump map: list of ``(tag, successor)``."""
        if self.jump_map is None:
            return []
        out = []
        for item in self.jump_map(x):
            if isinstance(item, tuple):
                tag, y = item
            else:
                tag, y = None, item
            out.append((tag, np.asarray(y, dtype=float)))
        return out

    def column_labels(self) -> tuple[str, ...]:
        if self.labels is not None:
            return tuple(self.labels)
        return tuple(f"x{i}" for i in range(self.state_dim))


@dataclass(frozen=True, order=True)
class HybridTime:
    t: float
    j: int


@dataclass(frozen=True)
class JumpRecord:
    time: HybridTime
    triggered: tuple
    chosen: Hashable
    pre: np.ndarray
    post: np.ndarray


@dataclass(frozen=True)
class IntegrationOptions:
    """Integrator settings.

    ``max_consecutive_jumps=None`` resolves to ``10 * system.jump_arity``.
    ``jump_selection`` is ``"random"`` (seeded, uniform among jump-map
    elements) or ``"first"`` (deterministic, first listed element).
    Samples are stored every ``sample_every`` flow steps, and at every step
    once ``t >= dense_after``; jumps are always stored.
    """

    step_size: float
    max_time: float
    max_jumps: int = 100_000
    max_consecutive_jumps: int | None = None
    jump_priority: bool = True
    rng_seed: int = 0
    jump_selection: str = "random"
    sample_every: int = 1
    dense_after: float | None = None

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")
        if not self.step_size < self.max_time:
            raise ValueError("step_size must be smaller than max_time")
        if self.max_jumps < 1:
            raise ValueError("max_jumps must be positive")
        if self.max_consecutive_jumps is not None and self.max_consecutive_jumps < 1:
            raise ValueError("max_consecutive_jumps must be >= 1")
        if self.jump_selection not in ("random", "first"):
            raise ValueError(f"unknown jump_selection {self.jump_selection!r}")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")


@dataclass
class HybridArc:
    """Solution samples ``x(t, j)`` plus the list of jump records."""

    t: np.ndarray
    j: np.ndarray
    x: np.ndarray
    jumps: list[JumpRecord]
    halt_reason: str
    labels: tuple[str, ...]
    blocks: Mapping[str, slice] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def final_state(self) -> np.ndarray:
        return self.x[-1]

    @property
    def final_time(self) -> HybridTime:
        return HybridTime(float(self.t[-1]), int(self.j[-1]))

    @property
    def jump_count(self) -> int:
        return len(self.jumps)

    def block(self, name: str) -> np.ndarray:
        """Samples of a named state block, shape ``(n_samples, block_dim)``."""
        return self.x[:, self.blocks[name]]

    def to_csv(self, path: str | Path) -> None:
        header = ",".join(("t", "j") + tuple(self.labels))
        data = np.column_stack([self.t, self.j.astype(float), self.x])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")

    def jumps_to_csv(self, path: str | Path) -> None:
        cols = ["t", "j", "indices", "chosen"]
        cols += [f"pre_{lab}" for lab in self.labels]
        cols += [f"post_{lab}" for lab in self.labels]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for rec in self.jumps:
                triggered = ";".join("" if tag is None else str(tag) for tag in rec.triggered)
                chosen = "" if rec.chosen is None else str(rec.chosen)
                nums = [f"{v:.17g}" for v in np.concatenate([rec.pre, rec.post])]
                fh.write(",".join([f"{rec.time.t:.17g}", str(rec.time.j), triggered, chosen] + nums) + "\n")


def read_arc_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a trajectory CSV written by :meth:`HybridArc.to_csv`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _select(options, rng: np.random.Generator, mode: str):
    if len(options) == 1 or mode == "first":
        return options[0]
    return options[int(rng.integers(len(options)))]


def resolve_jump(sys: HybridSystem, x: np.ndarray, rng: np.random.Generator,
                 mode: str = "random") -> np.ndarray:
    """Pick one element of ``G(x)``, uniformly under ``rng`` when several exist."""
    options = sys.jump_options(np.asarray(x, dtype=float))
    if not options:
        raise EmptyJumpMap(f"jump map returned no successor at x={x!r}")
    return _select(options, rng, mode)[1]


def rk4_step(f: FlowMap, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + (0.5 * h) * k1)
    k3 = f(x + (0.5 * h) * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def integrate(sys: HybridSystem, x0, opts: IntegrationOptions) -> HybridArc:
    """Integrate ``sys`` from ``x0`` at hybrid time (0, 0).

    Raises :class:`NonFiniteState` on NaN/Inf and :class:`ZenoGuardTripped`
    when too many jumps occur without flow in between.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (sys.state_dim,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({sys.state_dim},)")
    if not (sys.in_flow_set(x) or sys.in_jump_set(x)):
        raise ValueError("x0 lies in neither the flow set nor the jump set")

    rng = np.random.default_rng(opts.rng_seed)
    h = float(opts.step_size)
    T = float(opts.max_time)
    zeno_limit = opts.max_consecutive_jumps or 10 * max(1, sys.jump_arity)
    n_full = int(math.floor(T / h + 1e-9))
    f = sys.flow_map
    post = sys.post_flow

    ts, js, xs = [0.0], [0], [x.copy()]
    jumps: list[JumpRecord] = []
    t, j, n_steps, consecutive = 0.0, 0, 0, 0
    halt = HALT_MAX_TIME

    while True:
        in_d = sys.in_jump_set(x)
        in_c = sys.in_flow_set(x)
        if in_d and (opts.jump_priority or not in_c):
            if len(jumps) >= opts.max_jumps:
                halt = HALT_MAX_JUMPS
                break
            consecutive += 1
            if consecutive > zeno_limit:
                raise ZenoGuardTripped(
                    f"{consecutive} consecutive jumps at t={t} without flow")
            options = sys.jump_options(x)
            if not options:
                raise EmptyJumpMap(f"jump map returned no successor at t={t}")
            tag, y = _select(options, rng, opts.jump_selection)
            if not np.isfinite(y).all():
                raise NonFiniteState(f"jump produced a non-finite state at t={t}")
            jumps.append(JumpRecord(HybridTime(t, j), tuple(o[0] for o in options), tag,
                                    x.copy(), y.copy()))
            x = y.copy()
            j += 1
            ts.append(t)
            js.append(j)
            xs.append(x.copy())
            continue
        if not in_c:
            halt = HALT_OUTSIDE
            break
        if n_steps >= n_full:
            rest = T - n_steps * h
            if rest <= 1e-12 * max(1.0, T):
                break
            step = rest
        else:
            step = h
        x = rk4_step(f, x, step)
        if post is not None:
            x = post(x)
        if not np.isfinite(x).all():
            raise NonFiniteState(f"non-finite state after flow step ending at t={t + step}")
        n_steps += 1
        t = T if n_steps > n_full else n_steps * h
        consecutive = 0
        last = n_steps >= n_full
        if (n_steps % opts.sample_every == 0 or last
                or (opts.dense_after is not None and t >= opts.dense_after)):
            ts.append(t)
            js.append(j)
            xs.append(x.copy())

    if ts[-1] != t or js[-1] != j:
        ts.append(t)
        js.append(j)
        xs.append(x.copy())
    return HybridArc(np.asarray(ts), np.asarray(js, dtype=int), np.vstack(xs), jumps, halt,
                     sys.column_labels(), dict(sys.blocks))


@dataclass(frozen=True)
class ConvergenceReport:
    final_distance: float
    tail_mean_distance: float
    jump_count: int
    tail_peak_to_peak: np.ndarray


def _tail_mask(t: np.ndarray, tail_fraction: float) -> np.ndarray:
    t0 = t[-1] - tail_fraction * (t[-1] - t[0])
    return t >= t0 - 1e-12


def time_average(t: np.ndarray, values: np.ndarray) -> float:
    """Trapezoidal time average; plain mean when the span is zero."""
    span = t[-1] - t[0]
    if span <= 0:
        return float(np.mean(values))
    return float(np.trapezoid(values, t) / span)


def arc_metrics(arc: HybridArc, ref_point, tail_fraction: float = 0.2,
                coords=None) -> ConvergenceReport:
    """Distance-to-reference and tail-oscillation summary of an arc.

    ``coords`` (slice, index array or block name) restricts the comparison
    to a subset of the state; ``ref_point`` must then match that subset.
    """
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    if isinstance(coords, str):
        coords = arc.blocks[coords]
    xs = arc.x if coords is None else arc.x[:, coords]
    ref = np.asarray(ref_point, dtype=float)
    dist = np.linalg.norm(xs - ref, axis=1)
    mask = _tail_mask(arc.t, tail_fraction)
    tail = xs[mask]
    return ConvergenceReport(
        final_distance=float(dist[-1]),
        tail_mean_distance=time_average(arc.t[mask], dist[mask]),
        jump_count=arc.jump_count,
        tail_peak_to_peak=tail.max(axis=0) - tail.min(axis=0),
    )
