"""Scenario configuration: JSON documents describing a game, an algorithm and a run.

Every field error raises :class:`ConfigError` carrying the dotted path of the
offending field (``es.frequencies``, ``game.costs[1][0].coef``...).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .adaptive import AdaptiveParams
from .errors import ConfigError
from .game import Game, Polynomial, polynomial_game
from .games import OilParams, oil_extraction, rotation_game, two_player_monotone
from .hybrid import IntegrationOptions
from .zeroth_order import EsParams

SCHEMA_VERSION = 1
ALGORITHMS = ("full_info", "adaptive", "zeroth_order", "estimator_probe")
BUILTIN_GAMES = ("two_player_monotone", "oil_extraction", "rotation")


@dataclass(frozen=True)
class OutputOptions:
    directory: str
    columns: tuple[str, ...] | None = None
    write_trajectory: bool = True
    write_jumps: bool = True


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario. ``raw`` keeps the source document for sweeps and provenance."""

    name: str
    game: Game
    algorithm: str
    initial_state: dict[str, np.ndarray]
    adaptive: AdaptiveParams | None
    es: EsParams | None
    integration: IntegrationOptions | None
    outputs: OutputOptions
    reference: Any
    oracle: dict
    metrics: dict
    probe: dict
    raw: dict = field(repr=False, default_factory=dict)


def _req(doc: dict, key: str, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    if key not in doc:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return doc[key]


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _vec(value, path: str, size: int | None = None) -> np.ndarray:
    """A number (broadcast to ``size``) or a list of numbers."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if size is None:
            return np.array([float(value)])
        return np.full(size, float(value))
    if not isinstance(value, list):
        raise ConfigError(path, f"expected a number or a list, got {value!r}")
    out = np.array([_num(v, f"{path}[{i}]") for i, v in enumerate(value)])
    if size is not None and out.size != size:
        raise ConfigError(path, f"expected {size} entries, got {out.size}")
    return out


def _terms(terms, path: str, nvars: int) -> Polynomial:
    if not isinstance(terms, list) or not terms:
        raise ConfigError(path, "expected a nonempty list of {coef, powers} terms")
    for i, t in enumerate(terms):
        _num(_req(t, "coef", f"{path}[{i}]"), f"{path}[{i}].coef")
        pw = _req(t, "powers", f"{path}[{i}]")
        if not isinstance(pw, list) or len(pw) != nvars or any(
                not isinstance(p, int) or isinstance(p, bool) or p < 0 for p in pw):
            raise ConfigError(f"{path}[{i}].powers", f"expected {nvars} nonnegative integers")
    return Polynomial.from_terms(terms, nvars)


def build_game(doc, path: str = "game") -> Game:
    if isinstance(doc, str):
        doc = {"builtin": doc}
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected a built-in name or an object")
    if "builtin" in doc:
        name = doc["builtin"]
        if name == "two_player_monotone":
            gamma = _vec(doc.get("gamma", [1.0, 1.0]), f"{path}.gamma", 2)
            return two_player_monotone(tuple(gamma))
        if name == "rotation":
            return rotation_game(_num(doc.get("offset", 1.0), f"{path}.offset"))
        if name == "oil_extraction":
            params = doc.get("params", {})
            if not isinstance(params, dict):
                raise ConfigError(f"{path}.params", "expected an object")
            known = set(OilParams.__dataclass_fields__)
            for key in params:
                if key not in known:
                    raise ConfigError(f"{path}.params.{key}", "unknown oil parameter")
            kwargs = {}
            for key, val in params.items():
                if key == "wells":
                    kwargs[key] = tuple(tuple(_vec(w, f"{path}.params.wells[{i}]", 5)) for i, w in enumerate(val))
                elif key == "b":
                    kwargs[key] = tuple(_vec(val, f"{path}.params.b"))
                else:
                    kwargs[key] = _num(val, f"{path}.params.{key}")
            try:
                op = OilParams(**kwargs)
            except ValueError as exc:
                raise ConfigError(f"{path}.params", str(exc)) from None
            return oil_extraction(op, bool(doc.get("optimize_amplitudes", True)),
                                  gamma_x=_num(doc.get("gamma_x", 10.0), f"{path}.gamma_x"),
                                  gamma_a=_num(doc.get("gamma_a", 10.0), f"{path}.gamma_a"))
        raise ConfigError(f"{path}.builtin", f"unknown built-in game {name!r}; known: {', '.join(BUILTIN_GAMES)}")
    dims = _req(doc, "dims", path)
    if not isinstance(dims, list) or not dims or any(not isinstance(d, int) or d < 1 for d in dims):
        raise ConfigError(f"{path}.dims", "expected a list of positive integers")
    m = sum(dims)
    costs = _req(doc, "costs", path)
    if not isinstance(costs, list) or len(costs) != len(dims):
        raise ConfigError(f"{path}.costs", "expected one polynomial per agent")
    cost_polys = [_terms(c, f"{path}.costs[{i}]", m) for i, c in enumerate(costs)]
    cons = doc.get("constraints", [])
    if not isinstance(cons, list):
        raise ConfigError(f"{path}.constraints", "expected a list of polynomials")
    con_polys = [_terms(c, f"{path}.constraints[{i}]", m) for i, c in enumerate(cons)]
    gamma = doc.get("gamma")
    gamma = None if gamma is None else tuple(_vec(gamma, f"{path}.gamma", len(dims)))
    if gamma is not None and min(gamma) <= 0:
        raise ConfigError(f"{path}.gamma", "gains must be positive")
    return polynomial_game(dims, cost_polys, con_polys, gamma, name=str(doc.get("name", "polynomial")))


def _adaptive(doc, path="adaptive") -> AdaptiveParams:
    vals = {k: _num(_req(doc, k, path), f"{path}.{k}") for k in ("k_min", "k_max", "c", "epsilon")}
    try:
        return AdaptiveParams(**vals)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _es(doc, game: Game, path="es") -> EsParams:
    m, n = game.m, game.n_agents
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    kwargs = dict(
        amplitudes=_vec(_req(doc, "amplitudes", path), f"{path}.amplitudes", m),
        eps=_vec(_req(doc, "eps", path), f"{path}.eps", n),
        nu=_vec(_req(doc, "nu", path), f"{path}.nu", n),
        eps0=_num(_req(doc, "eps0", path), f"{path}.eps0"),
        nu0=_num(_req(doc, "nu0", path), f"{path}.nu0"),
        frequencies=_vec(_req(doc, "frequencies", path), f"{path}.frequencies", m),
        shared_frequency=bool(doc.get("shared_frequency", False)),
    )
    for key in ("phases", "signs"):
        if key in doc:
            kwargs[key] = _vec(doc[key], f"{path}.{key}", m)
    if "estimate_mask" in doc:
        mask = doc["estimate_mask"]
        if isinstance(mask, bool):
            mask = [mask] * m
        if not isinstance(mask, list) or len(mask) != m or any(not isinstance(b, bool) for b in mask):
            raise ConfigError(f"{path}.estimate_mask", f"expected {m} booleans")
        kwargs["estimate_mask"] = np.array(mask)
    if "amplitude_sources" in doc:
        src = doc["amplitude_sources"]
        if not isinstance(src, list) or len(src) != m or any(
                not isinstance(s, int) or isinstance(s, bool) or not -1 <= s < m for s in src):
            raise ConfigError(f"{path}.amplitude_sources", f"expected {m} integers in [-1, {m - 1}]")
        kwargs["amplitude_sources"] = np.array(src)
    try:
        ep = EsParams(**kwargs)
        ep.check_for(game)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    return ep


def _integration(doc, q: int, path="integration") -> IntegrationOptions:
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    kw: dict[str, Any] = {
        "step_size": _num(_req(doc, "step_size", path), f"{path}.step_size"),
        "max_time": _num(_req(doc, "max_time", path), f"{path}.max_time"),
    }
    for key in ("max_jumps", "max_consecutive_jumps", "rng_seed", "sample_every"):
        if doc.get(key) is not None:
            val = doc[key]
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"{path}.{key}", "expected an integer")
            kw[key] = val
    if "jump_priority" in doc:
        kw["jump_priority"] = bool(doc["jump_priority"])
    if "jump_selection" in doc:
        kw["jump_selection"] = str(doc["jump_selection"])
    if doc.get("dense_after") is not None:
        kw["dense_after"] = _num(doc["dense_after"], f"{path}.dense_after")
    try:
        return IntegrationOptions(**kw)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _initial(doc, game: Game, path="initial_state") -> dict[str, np.ndarray]:
    m, q = game.m, game.q
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    u = _vec(_req(doc, "u", path), f"{path}.u", m)
    out = {
        "u": u,
        "z": _vec(doc["z"], f"{path}.z", m) if "z" in doc else u.copy(),
        "lam": _vec(doc.get("lambda", 0.1), f"{path}.lambda", q),
        "w": _vec(doc.get("w", 0.0), f"{path}.w", q),
        "zeta": _vec(doc.get("zeta", 0.0), f"{path}.zeta", m),
        "s": _vec(doc.get("s", -1.0), f"{path}.s", q),
    }
    if "k" in doc:
        out["k"] = _vec(doc["k"], f"{path}.k", q)
    if np.any(out["lam"] < 0):
        raise ConfigError(f"{path}.lambda", "dual variables must be nonnegative")
    if not np.all(np.isin(out["s"], (-1.0, 0.0, 1.0))):
        raise ConfigError(f"{path}.s", "switch states must be -1, 0 or 1")
    return out


def _reference(value, game: Game, path="reference"):
    if value is None or value == "oracle":
        return value
    if isinstance(value, dict):
        return {"u": _vec(_req(value, "u", path), f"{path}.u", game.m),
                "lam": _vec(value.get("lambda", [0.0] * game.q), f"{path}.lambda", game.q)}
    raise ConfigError(path, "expected null, \"oracle\" or {u, lambda}")


def parse_config(doc: dict, source: str = "<memory>") -> ScenarioConfig:
    """Validate a scenario document."""
    if not isinstance(doc, dict):
        raise ConfigError("", "scenario must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}")
    game = build_game(_req(doc, "game", ""))
    algorithm = _req(doc, "algorithm", "")
    if algorithm not in ALGORITHMS:
        raise ConfigError("algorithm", f"expected one of {', '.join(ALGORITHMS)}")
    name = str(doc.get("name", Path(source).stem))
    adaptive = es = integration = None
    initial: dict[str, np.ndarray] = {}
    if algorithm in ("adaptive", "zeroth_order"):
        adaptive = _adaptive(_req(doc, "adaptive", ""))
    if algorithm in ("zeroth_order", "estimator_probe"):
        es = _es(_req(doc, "es", ""), game)
    if algorithm != "estimator_probe":
        integration = _integration(_req(doc, "integration", ""), game.q)
        initial = _initial(_req(doc, "initial_state", ""), game)
    out = doc.get("outputs", {})
    if not isinstance(out, dict):
        raise ConfigError("outputs", "expected an object")
    cols = out.get("columns")
    if cols is not None and (not isinstance(cols, list) or any(not isinstance(c, str) for c in cols)):
        raise ConfigError("outputs.columns", "expected a list of block names")
    outputs = OutputOptions(
        directory=str(out.get("directory", name)),
        columns=None if cols is None else tuple(cols),
        write_trajectory=bool(out.get("write_trajectory", True)),
        write_jumps=bool(out.get("write_jumps", True)),
    )
    probe = doc.get("probe", {})
    if algorithm == "estimator_probe":
        probe = {"u": _vec(_req(probe, "u", "probe"), "probe.u", game.m),
                 "n_periods": int(probe.get("n_periods", 11)),
                 "samples_per_period": int(probe.get("samples_per_period", 64))}
    return ScenarioConfig(
        name=name, game=game, algorithm=algorithm, initial_state=initial, adaptive=adaptive, es=es,
        integration=integration, outputs=outputs, reference=_reference(doc.get("reference"), game),
        oracle=dict(doc.get("oracle", {})), metrics=dict(doc.get("metrics", {})), probe=probe,
        raw=copy.deepcopy(doc))


def bundled_scenarios() -> dict[str, Path]:
    root = resources.files("gneseek") / "scenarios"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def load_document(path_or_name: str) -> tuple[dict, str]:
    """Read a scenario file, or a bundled scenario by name."""
    p = Path(path_or_name)
    if not p.exists():
        bundled = bundled_scenarios()
        if path_or_name in bundled:
            p = bundled[path_or_name]
        else:
            raise ConfigError("<config>", f"no such file or bundled scenario: {path_or_name}")
    try:
        with open(p) as fh:
            return json.load(fh), str(p)
    except json.JSONDecodeError as exc:
        raise ConfigError("<config>", f"invalid JSON: {exc}") from None


def load_config(path_or_name: str) -> ScenarioConfig:
    doc, source = load_document(path_or_name)
    return parse_config(doc, source)


def set_path(doc: dict, dotted: str, value) -> dict:
    """Copy of ``doc`` with the field at ``dotted`` (``a.b.c``) replaced; the field must exist."""
    out = copy.deepcopy(doc)
    keys = dotted.split(".")
    node = out
    for i, key in enumerate(keys[:-1]):
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(".".join(keys[: i + 1]), "parameter path does not exist")
        node = node[key]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(dotted, "parameter path does not exist")
    node[keys[-1]] = value
    return out
