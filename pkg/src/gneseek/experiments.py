"""Scenario runner and parameter sweeps.

``run_scenario`` builds the requested system, integrates it and writes
``trajectory.csv``, ``jumps.csv`` and ``summary.json`` into a per-run
directory under the output root (``$GNESEEK_OUTPUT_ROOT``, default ``./runs``).
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .adaptive import AdaptiveState, audit_gains, build_adaptive_system
from .config import SCHEMA_VERSION, ScenarioConfig, parse_config, set_path
from .errors import ConfigError, OracleScaleExceeded, TailTooShort
from .full_info import GneState, build_full_info_system, lyapunov_along, lyapunov_nonincreasing
from .game import KktPoint, kkt_residual, solve_kkt_oracle
from .games import OilParams, oil_optimum, oscillation_amplitude, total_oil_rate
from .hybrid import HybridArc, HybridSystem, integrate
from .zeroth_order import EsState, build_es_system, estimator_bias_probe, perturbed_input

OUTPUT_ROOT_ENV = "GNESEEK_OUTPUT_ROOT"


def output_root(override: str | os.PathLike | None = None) -> Path:
    if override is not None:
        return Path(override)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


@dataclass
class RunSummary:
    scenario: str
    algorithm: str
    halt_reason: str
    jump_count: int
    final_time: dict
    final_state: dict
    final_kkt_residual: float | None
    distance_to_reference: float | None
    reference: list | None
    tail: dict
    lyapunov_monotone: bool | None
    wall_time: float
    extra: dict = field(default_factory=dict)
    output_dir: str | None = None
    arc: HybridArc | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario,
            "algorithm": self.algorithm,
            "halt_reason": self.halt_reason,
            "jump_count": self.jump_count,
            "final_time": self.final_time,
            "final_state": self.final_state,
            "final_kkt_residual": self.final_kkt_residual,
            "distance_to_reference": self.distance_to_reference,
            "reference": self.reference,
            "tail": self.tail,
            "lyapunov_monotone": self.lyapunov_monotone,
            "wall_time": self.wall_time,
            "extra": self.extra,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def build_system(cfg: ScenarioConfig, monitor=None) -> tuple[HybridSystem, np.ndarray]:
    """System and initial state vector for a scenario."""
    game, init = cfg.game, cfg.initial_state
    base = GneState(init["u"], init["z"], init["lam"], init["w"])
    if cfg.algorithm == "full_info":
        return build_full_info_system(game), base.to_vector()
    xi = AdaptiveState.initial(base, cfg.adaptive, k0=init.get("k"), s0=-1.0)
    xi = AdaptiveState(base, xi.k, init["s"])
    if cfg.algorithm == "adaptive":
        return build_adaptive_system(game, cfg.adaptive), xi.to_vector()
    if cfg.algorithm == "zeroth_order":
        sys = build_es_system(game, cfg.adaptive, cfg.es, monitor)
        return sys, EsState(xi, init["zeta"], cfg.es.initial_oscillators()).to_vector()
    raise ConfigError("algorithm", f"{cfg.algorithm} does not integrate a system")


def resolve_references(cfg: ScenarioConfig) -> list[KktPoint]:
    ref = cfg.reference
    if ref is None:
        return []
    if isinstance(ref, dict):
        return [KktPoint(ref["u"], ref["lam"])]
    game = cfg.game
    box = cfg.oracle.get("box", [[-10.0, 10.0]] * game.m)
    try:
        return solve_kkt_oracle(game, box, lambda_max=float(cfg.oracle.get("lambda_max", 10.0)),
                                grid_points_per_dim=int(cfg.oracle.get("grid_points_per_dim", 12)),
                                refine_tol=float(cfg.oracle.get("refine_tol", 1e-6)))
    except OracleScaleExceeded as exc:
        raise ConfigError("reference", str(exc)) from None


def ball_entry_time(t: np.ndarray, u: np.ndarray, center, radius: float) -> float:
    """First time after which ``||u - center|| <= radius`` holds for the rest of the arc."""
    dist = np.linalg.norm(u - np.asarray(center), axis=1)
    outside = np.nonzero(dist > radius)[0]
    if outside.size == 0:
        return float(t[0])
    last = outside[-1]
    return math.inf if last == len(t) - 1 else float(t[last + 1])


def _final_state_dict(arc: HybridArc) -> dict:
    x = arc.final_state
    return {name: x[sl].tolist() for name, sl in arc.blocks.items()}


def _columns(arc: HybridArc, blocks: tuple[str, ...] | None) -> HybridArc:
    if blocks is None:
        return arc
    idx, new_blocks, start = [], {}, 0
    for name in blocks:
        if name not in arc.blocks:
            raise ConfigError("outputs.columns", f"unknown block {name!r}; known: {', '.join(arc.blocks)}")
        r = list(range(arc.x.shape[1]))[arc.blocks[name]]
        idx += r
        new_blocks[name] = slice(start, start + len(r))
        start += len(r)
    labels = tuple(arc.labels[i] for i in idx)
    return HybridArc(arc.t, arc.j, arc.x[:, idx], arc.jumps, arc.halt_reason, labels, new_blocks)


def _oil_metrics(cfg: ScenarioConfig, arc: HybridArc) -> dict:
    raw = cfg.raw.get("game", {})
    params = raw.get("params", {}) if isinstance(raw, dict) else {}
    op = OilParams(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in params.items()})
    n = op.n_wells
    u = arc.block("u")
    opt = oil_optimum(op)
    final_rate = total_oil_rate(u[-1, :n], op)
    out: dict[str, Any] = {
        "final_total_rate": final_rate,
        "optimum_total_rate": opt.rate,
        "optimum_x": opt.x.tolist(),
        "relative_rate_gap": abs(final_rate - opt.rate) / abs(opt.rate),
    }
    if cfg.es is not None:
        mu = arc.block("mu")
        rates = np.array([total_oil_rate(perturbed_input(uu, mm, cfg.es)[:n], op) for uu, mm in zip(u, mu)])
        period = float(cfg.metrics.get("dither_period", 1.0 / cfg.es.frequencies.min()))
        # measured over the last ``oscillation_window`` time units (default: the tail fraction)
        window = cfg.metrics.get("oscillation_window")
        if window is None:
            window = float(cfg.metrics.get("tail_fraction", 0.2)) * (arc.t[-1] - arc.t[0])
        sel = arc.t >= arc.t[-1] - float(window) - 1e-9
        try:
            out["oscillation_amplitude"] = oscillation_amplitude(arc.t[sel], rates[sel], period, 1.0)
        except TailTooShort as exc:
            out["oscillation_amplitude"] = None
            out["oscillation_note"] = str(exc)
        if cfg.game.m > n:
            a = u[:, n:]
            out["amplitude_margin"] = float(min((a - op.a_min).min(), (op.a_max - a).min()))
    return out


def run_scenario(cfg: ScenarioConfig, root: str | os.PathLike | None = None, write: bool = True) -> RunSummary:
    """Integrate a scenario and write its CSV/JSON outputs."""
    out_dir = output_root(root) / cfg.outputs.directory
    if cfg.algorithm == "estimator_probe":
        return _run_probe(cfg, out_dir, write)
    refs = resolve_references(cfg)
    system, x0 = build_system(cfg)
    start = time.perf_counter()
    arc = integrate(system, x0, cfg.integration)
    wall = time.perf_counter() - start

    game = cfg.game
    u = arc.block("u")
    uf = u[-1]
    lamf = np.maximum(arc.block("lam")[-1], 0.0)
    residual = kkt_residual(game, KktPoint(uf, lamf))
    dist = None
    center = uf
    if refs:
        dists = [float(np.linalg.norm(uf - r.u)) for r in refs]
        dist = min(dists)
        center = refs[int(np.argmin(dists))].u
    tail_fraction = float(cfg.metrics.get("tail_fraction", 0.2))
    mask = arc.t >= arc.t[-1] - tail_fraction * (arc.t[-1] - arc.t[0]) - 1e-12
    tail_u = u[mask]
    tail = {
        "fraction": tail_fraction,
        "max_distance_to_final": float(np.max(np.linalg.norm(tail_u - uf, axis=1))),
        "max_distance_to_reference": (float(np.max(np.linalg.norm(tail_u - center, axis=1)))
                                      if refs else None),
        "peak_to_peak": (tail_u.max(axis=0) - tail_u.min(axis=0)).tolist(),
    }
    lyap = None
    if refs and cfg.algorithm == "full_info":
        lyap = all(lyapunov_nonincreasing(lyapunov_along(arc, r, game)) for r in refs)
    extra: dict[str, Any] = {}
    if "ball_radius" in cfg.metrics:
        r = float(cfg.metrics["ball_radius"])
        extra["ball_radius"] = r
        extra["ball_entry_time"] = ball_entry_time(arc.t, u, uf, r)
    if cfg.algorithm in ("adaptive", "zeroth_order") and game.q:
        growth = cfg.adaptive.c * (cfg.es.nu0 * cfg.es.eps0 if cfg.es is not None else 1.0)
        audit = audit_gains(system, arc, game, cfg.adaptive, growth_rate=growth,
                            step_size=cfg.integration.step_size)
        extra["gains"] = {
            "monotone": audit.monotone, "bounded": audit.bounded, "slopes_ok": audit.slopes_ok,
            "jump_bound": audit.jump_bound, "min_toggle_spacing": audit.min_toggle_spacing,
            "t_min": audit.t_min, "passed": audit.passed,
        }
    if game.name.startswith("oil_extraction"):
        extra["oil"] = _oil_metrics(cfg, arc)

    summary = RunSummary(
        scenario=cfg.name, algorithm=cfg.algorithm, halt_reason=arc.halt_reason, jump_count=arc.jump_count,
        final_time={"t": arc.final_time.t, "j": arc.final_time.j}, final_state=_final_state_dict(arc),
        final_kkt_residual=residual, distance_to_reference=dist,
        reference=[{"u": r.u.tolist(), "lambda": r.lam.tolist()} for r in refs] if refs else None,
        tail=tail, lyapunov_monotone=lyap, wall_time=wall, extra=extra)
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        shown = _columns(arc, cfg.outputs.columns)
        if cfg.outputs.write_trajectory:
            shown.to_csv(out_dir / "trajectory.csv")
        if cfg.outputs.write_jumps:
            arc.jumps_to_csv(out_dir / "jumps.csv")
        write_summary(summary, out_dir / "summary.json")
        summary.output_dir = str(out_dir)
    summary.arc = arc
    return summary


def _run_probe(cfg: ScenarioConfig, out_dir: Path, write: bool) -> RunSummary:
    start = time.perf_counter()
    bias = estimator_bias_probe(cfg.game, cfg.probe["u"], cfg.es, cfg.probe["n_periods"],
                                cfg.probe["samples_per_period"])
    wall = time.perf_counter() - start
    summary = RunSummary(
        scenario=cfg.name, algorithm=cfg.algorithm, halt_reason="probe", jump_count=0,
        final_time={"t": 0.0, "j": 0}, final_state={"u": cfg.probe["u"].tolist()}, final_kkt_residual=None,
        distance_to_reference=None, reference=None, tail={}, lyapunov_monotone=None, wall_time=wall,
        extra={"bias": bias.tolist(), "max_bias": float(bias.max()),
               "max_amplitude": float(cfg.es.amplitudes.max())})
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_summary(summary, out_dir / "summary.json")
        with open(out_dir / "bias.csv", "w") as fh:
            fh.write("amplitude,bias_max," + ",".join(f"bias{i}" for i in range(bias.size)) + "\n")
            fh.write(",".join(f"{v:.17g}" for v in [cfg.es.amplitudes.max(), bias.max(), *bias]) + "\n")
        summary.output_dir = str(out_dir)
    return summary


def write_summary(summary: RunSummary, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(summary.to_dict()), fh, indent=2)
        fh.write("\n")


SWEEP_COLUMNS = ("value", "halt_reason", "jump_count", "final_kkt_residual", "distance_to_reference",
                 "tail_max_distance_to_final", "ball_entry_time", "max_bias", "final_total_rate",
                 "oscillation_amplitude", "wall_time", "output_dir")


def sweep(doc: dict, parameter: str, values: list, root: str | os.PathLike | None = None,
          source: str = "<memory>") -> list[dict]:
    """Run ``doc`` once per value of the dotted ``parameter``; one summary row per value."""
    base_dir = doc.get("outputs", {}).get("directory", doc.get("name", Path(source).stem))
    rows = []
    for i, value in enumerate(values):
        variant = set_path(doc, parameter, value)
        variant.setdefault("outputs", {})
        variant["outputs"] = dict(variant["outputs"], directory=f"{base_dir}/sweep_{parameter}_{i}")
        s = run_scenario(parse_config(variant, source), root)
        oil = s.extra.get("oil", {})
        rows.append({
            "value": json.dumps(value),
            "halt_reason": s.halt_reason,
            "jump_count": s.jump_count,
            "final_kkt_residual": s.final_kkt_residual,
            "distance_to_reference": s.distance_to_reference,
            "tail_max_distance_to_final": s.tail.get("max_distance_to_final"),
            "ball_entry_time": s.extra.get("ball_entry_time"),
            "max_bias": s.extra.get("max_bias"),
            "final_total_rate": oil.get("final_total_rate"),
            "oscillation_amplitude": oil.get("oscillation_amplitude"),
            "wall_time": s.wall_time,
            "output_dir": s.output_dir,
        })
    return rows


def write_sweep_csv(rows: list[dict], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else
                                 (f"{row[k]:.17g}" if isinstance(row[k], float) else row[k]))
                             for k in SWEEP_COLUMNS})
