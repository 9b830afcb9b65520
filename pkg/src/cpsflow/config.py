"""TOML configuration for the command-line front end.

Schema (every table rejects unknown keys)::

    [model]                     # exactly one of fixture / path / factory
    fixture = "two-tank-v1"     # a name from cpsflow.fixtures.FIXTURES
    path = "other.toml"         # another file whose [model] table is used
    factory = "pkg.mod:build"   # callable returning a fixtures.Scenario
    [model.params]              # fixture parameters, e.g. L = 100

    [attacker.NAME]
    domain = { i2 = [0, 100] }  # component name -> representative values
    include_current = true

    [analysis]
    k = "auto"                  # or a non-negative integer
    k_max = 1000
    budget = 5000000            # total states kept over all layers
    layer_budget = 500000
    format = "table"            # table | csv | json-lines
    predicates = ["E1", "F2"]   # default: every predicate of the model
    attackers = ["alpha3"]      # default: declared attackers, else the
                                # model's built-in ones

    [compare]
    controllers = ["original", "fairness"]

    [lti]
    A = [[...]]  B = [[...]]  C = [[...]]  R1 = [[...]]  R2 = [[...]]
    L = [[...]]                 # observer gain
    K = [[...]]                 # optional state feedback, u = -K x_hat
    x0 = [...]  x_hat0 = [...]
    rate = 0.05                 # desired false alarm rate per sensor
    threshold = [...]           # optional fixed thresholds instead of the rate
    steps = 1000
    seed = 0
    [lti.attack]
    sensor = [...]  actuator = [...]  start = 0  stop = 100
"""

from __future__ import annotations

import importlib
import os
from dataclasses import dataclass, field
from typing import Any, Optional, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .attacker import AttackerSpec
from .errors import ConfigError, CpsError
from .fixtures import FIXTURES, Scenario, load_fixture
from .reach import DEFAULT_K_MAX, Budget

FORMATS = ("table", "csv", "json-lines")

_TOP_KEYS = {"model", "attacker", "analysis", "compare", "lti"}
_MODEL_KEYS = {"fixture", "path", "factory", "params"}
_ATTACKER_KEYS = {"domain", "include_current"}
_ANALYSIS_KEYS = {"k", "k_max", "budget", "layer_budget", "format", "predicates", "attackers"}
_COMPARE_KEYS = {"controllers"}
_LTI_KEYS = {"A", "B", "C", "R1", "R2", "L", "K", "x0", "x_hat0", "rate", "threshold", "steps",
             "seed", "attack"}
_LTI_ATTACK_KEYS = {"sensor", "actuator", "start", "stop"}


@dataclass(frozen=True)
class ModelRef:
    fixture: Optional[str] = None
    factory: Optional[str] = None
    params: dict = field(default_factory=dict)

    def load(self) -> Scenario:
        try:
            if self.factory is not None:
                mod, _, attr = self.factory.partition(":")
                if not attr:
                    raise ConfigError(f"model.factory: expected 'module:callable', got {self.factory!r}")
                scenario = getattr(importlib.import_module(mod), attr)(**self.params)
                if not isinstance(scenario, Scenario):
                    raise ConfigError(f"model.factory: {self.factory} did not return a Scenario")
                return scenario
            return load_fixture(self.fixture, **self.params)
        except ConfigError:
            raise
        except (CpsError, ImportError, AttributeError, TypeError) as exc:
            raise ConfigError(f"model: {exc}") from exc


@dataclass(frozen=True)
class AttackerDecl:
    name: str
    domain: dict
    include_current: bool = True

    def build(self, scenario: Scenario) -> AttackerSpec:
        try:
            return AttackerSpec.on(scenario.model, self.name, self.domain, self.include_current)
        except (CpsError, KeyError) as exc:
            raise ConfigError(f"attacker.{self.name}: {exc}") from exc


@dataclass(frozen=True)
class AnalysisConfig:
    model: Optional[ModelRef] = None
    attackers: dict = field(default_factory=dict)  # name -> AttackerDecl
    k: Union[int, str] = "auto"
    k_max: int = DEFAULT_K_MAX
    budget: Budget = field(default_factory=Budget)
    format: str = "table"
    predicates: Optional[tuple] = None
    selected: Optional[tuple] = None  # attacker names to run, in order
    controllers: Optional[tuple] = None


@dataclass(frozen=True)
class AttackConfig:
    sensor: Optional[tuple] = None
    actuator: Optional[tuple] = None
    start: int = 0
    stop: Optional[int] = None


@dataclass(frozen=True, eq=False)
class LtiConfig:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    L: np.ndarray
    K: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None
    x_hat0: Optional[np.ndarray] = None
    rate: Any = 0.05
    threshold: Optional[np.ndarray] = None
    steps: int = 1000
    seed: int = 0
    attack: AttackConfig = field(default_factory=AttackConfig)


# -- parsing helpers -------------------------------------------------------------

def read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _check_keys(table, allowed: set, where: str) -> None:
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table, got {type(table).__name__}")
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(allowed))}")


def _int(value, where: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {value}")
    return value


def _names(value, where: str) -> tuple:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{where}: expected a list of names")
    return tuple(value)


def parse_k(value, where: str = "analysis.k") -> Union[int, str]:
    if value == "auto":
        return "auto"
    if isinstance(value, str) and value.isdigit():
        return int(value)
    return _int(value, where)


def _freeze(value):
    return tuple(_freeze(v) for v in value) if isinstance(value, list) else value


def parse_model(table: dict, base_dir: str, where: str = "model", _seen=()) -> ModelRef:
    _check_keys(table, _MODEL_KEYS, where)
    sources = [key for key in ("fixture", "path", "factory") if key in table]
    if len(sources) != 1:
        raise ConfigError(f"{where}: give exactly one of fixture, path, factory (got {len(sources)})")
    params = table.get("params", {})
    _check_keys(params, set(params), f"{where}.params")
    params = {k: _freeze(v) for k, v in params.items()}
    if "path" in table:
        path = os.path.normpath(os.path.join(base_dir, table["path"]))
        if path in _seen:
            raise ConfigError(f"{where}.path: {path} includes itself")
        doc = read_toml(path)
        if "model" not in doc:
            raise ConfigError(f"{path}: missing [model] table")
        inner = parse_model(doc["model"], os.path.dirname(path), f"{path}: model", _seen + (path,))
        return ModelRef(inner.fixture, inner.factory, {**inner.params, **params})
    if "fixture" in table:
        name = table["fixture"]
        if name not in FIXTURES:
            raise ConfigError(f"{where}.fixture: unknown fixture {name!r}; known: {', '.join(FIXTURES)}")
        return ModelRef(fixture=name, params=params)
    return ModelRef(factory=str(table["factory"]), params=params)


def parse_attackers(table: dict) -> dict:
    _check_keys(table, set(table), "attacker")
    out = {}
    for name, decl in table.items():
        where = f"attacker.{name}"
        _check_keys(decl, _ATTACKER_KEYS, where)
        if name == "baseline":
            raise ConfigError(f"{where}: 'baseline' is reserved for the empty attacker")
        domain = decl.get("domain")
        if not isinstance(domain, dict) or not domain:
            raise ConfigError(f"{where}.domain: expected a non-empty table of component = [values]")
        values = {}
        for comp, vals in domain.items():
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"{where}.domain.{comp}: expected a non-empty list of values")
            values[comp] = tuple(vals)
        include = decl.get("include_current", True)
        if not isinstance(include, bool):
            raise ConfigError(f"{where}.include_current: expected true or false")
        out[name] = AttackerDecl(name, values, include)
    return out


def parse_analysis(doc: dict, base_dir: str = ".") -> AnalysisConfig:
    _check_keys(doc, _TOP_KEYS, "config")
    model = parse_model(doc["model"], base_dir) if "model" in doc else None
    attackers = parse_attackers(doc.get("attacker", {}))
    ana = doc.get("analysis", {})
    _check_keys(ana, _ANALYSIS_KEYS, "analysis")
    fmt = ana.get("format", "table")
    if fmt not in FORMATS:
        raise ConfigError(f"analysis.format: expected one of {', '.join(FORMATS)}, got {fmt!r}")
    budget = Budget(_int(ana.get("budget", Budget.max_total), "analysis.budget", 1),
                    _int(ana.get("layer_budget", Budget.max_layer), "analysis.layer_budget", 1))
    predicates = _names(ana["predicates"], "analysis.predicates") if "predicates" in ana else None
    selected = _names(ana["attackers"], "analysis.attackers") if "attackers" in ana else None
    cmp_table = doc.get("compare", {})
    _check_keys(cmp_table, _COMPARE_KEYS, "compare")
    controllers = None
    if "controllers" in cmp_table:
        controllers = _names(cmp_table["controllers"], "compare.controllers")
        if len(controllers) != 2:
            raise ConfigError("compare.controllers: expected exactly two controller versions")
    return AnalysisConfig(
        model=model,
        attackers=attackers,
        k=parse_k(ana.get("k", "auto")),
        k_max=_int(ana.get("k_max", DEFAULT_K_MAX), "analysis.k_max", 1),
        budget=budget,
        format=fmt,
        predicates=predicates,
        selected=selected,
        controllers=controllers,
    )


def load_analysis(path) -> AnalysisConfig:
    return parse_analysis(read_toml(path), os.path.dirname(os.path.abspath(path)))


def _array(value, where: str, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a numeric array") from None
    if ndim == 2:
        arr = np.atleast_2d(arr)
    if arr.ndim != ndim:
        raise ConfigError(f"{where}: expected a {'matrix' if ndim == 2 else 'vector'}")
    return arr


def _positive_vector(value, where: str) -> np.ndarray:
    arr = np.atleast_1d(_array(value, where, np.ndim(value)))
    if arr.ndim != 1 or np.any(arr <= 0):
        raise ConfigError(f"{where}: expected positive numbers, got {value!r}")
    return arr


def parse_lti(doc: dict) -> LtiConfig:
    _check_keys(doc, _TOP_KEYS, "config")
    if "lti" not in doc:
        raise ConfigError("config: missing [lti] table")
    t = doc["lti"]
    _check_keys(t, _LTI_KEYS, "lti")
    missing = [k for k in ("A", "B", "C", "R1", "R2", "L") if k not in t]
    if missing:
        raise ConfigError(f"lti: missing key(s) {', '.join(missing)}")
    att = t.get("attack", {})
    _check_keys(att, _LTI_ATTACK_KEYS, "lti.attack")
    attack = AttackConfig(
        sensor=tuple(_array(att["sensor"], "lti.attack.sensor", 1)) if "sensor" in att else None,
        actuator=tuple(_array(att["actuator"], "lti.attack.actuator", 1)) if "actuator" in att else None,
        start=_int(att.get("start", 0), "lti.attack.start"),
        stop=_int(att["stop"], "lti.attack.stop") if "stop" in att else None,
    )
    rate = t.get("rate", 0.05)
    rates = np.atleast_1d(_array(rate, "lti.rate", np.ndim(rate)))
    if np.any(rates <= 0) or np.any(rates >= 1):
        raise ConfigError(f"lti.rate: must lie in (0, 1), got {rate!r}")
    return LtiConfig(
        **{k: _array(t[k], f"lti.{k}", 2) for k in ("A", "B", "C", "R1", "R2", "L")},
        K=_array(t["K"], "lti.K", 2) if "K" in t else None,
        x0=_array(t["x0"], "lti.x0", 1) if "x0" in t else None,
        x_hat0=_array(t["x_hat0"], "lti.x_hat0", 1) if "x_hat0" in t else None,
        rate=rates,
        threshold=_positive_vector(t["threshold"], "lti.threshold") if "threshold" in t else None,
        steps=_int(t.get("steps", 1000), "lti.steps", 1),
        seed=_int(t.get("seed", 0), "lti.seed"),
        attack=attack,
    )


def load_lti(path) -> LtiConfig:
    return parse_lti(read_toml(path))
