"""Ready-made models: the single water tank and the two-tank distribution system.

Two tanks ``T1``, ``T2`` of capacity ``L`` drain ``v1``/``v2`` per cycle;
a hose delivering ``w`` per cycle feeds at most one of them.  The process
mode is the control signal: ``q1`` fills T1, ``q2`` fills T2, ``q0`` closes
the hose.  Levels are clamped to ``[0, L]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .attacker import AttackerSpec
from .errors import InvalidConfig, NoLoopWithinBudget
from .model import Choice, ComponentId, CpsModel, CpsState, IntRange, Kind
from .reach import CriticalPredicate

MODES = ("q0", "q1", "q2")


@dataclass(frozen=True)
class TwoTankConfig:
    L: int = 100
    w: int = 10
    v1: int = 3
    v2: int = 4
    r1: int = 20
    r2: int = 20
    controller_version: str = "original"

    def __post_init__(self):
        for name in ("L", "w", "v1", "v2", "r1", "r2"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise InvalidConfig(f"{name} must be a positive integer, got {value!r}")
        if self.w < self.v1 + self.v2:
            raise InvalidConfig("the hose must cover both outflows (w >= v1 + v2)")
        for r in (self.r1, self.r2):
            if not 0 < r < self.L:
                raise InvalidConfig(f"threshold {r} must lie strictly inside (0, L)")
        if self.controller_version not in ("original", "fairness"):
            raise InvalidConfig(f"unknown controller version {self.controller_version!r}")


# Desk-scale parameters used for the table reproductions.
DESK_CONFIG = TwoTankConfig()


@dataclass(frozen=True)
class OperatingBand:
    lo: tuple
    hi: tuple
    loop_start: int
    period: int
    degenerate: bool = False


@dataclass(frozen=True)
class Scenario:
    """A model with its initial state, critical predicates and attackers."""

    model: CpsModel
    sigma0: CpsState
    predicates: tuple = ()
    attackers: dict = field(default_factory=dict)
    band: Optional[OperatingBand] = None
    config: object = None


# -- controllers ---------------------------------------------------------------

def build_original_controller(config: TwoTankConfig):
    """Single-state controller that always gives T1 priority."""
    r1, r2 = config.r1, config.r2

    def gamma_io(q, i):
        i1, i2 = i
        if i1 < r1:
            return ("q1",)
        if i2 < r2:
            return ("q2",)
        return ("q0",)

    def delta_io(q, i):
        return q

    return delta_io, gamma_io, ("*",)


def build_fairness_controller(config: TwoTankConfig):
    """Two-mode controller that alternates priority when both tanks run low.

    In mode ``m1`` a double shortage fills T1 and hands priority to T2
    (mode ``m2``); in ``m2`` it fills T2 and switches back.  Single
    shortages are served directly and leave the mode unchanged.
    """
    r1, r2 = config.r1, config.r2

    def decide(m, i):
        i1, i2 = i
        if i1 < r1 and i2 < r2:
            return ("q1", "m2") if m == "m1" else ("q2", "m1")
        if i1 < r1:
            return "q1", m
        if i2 < r2:
            return "q2", m
        return "q0", m

    def gamma_io(q, i):
        return (decide(q, i)[0],)

    def delta_io(q, i):
        return decide(q, i)[1]

    return delta_io, gamma_io, ("m1", "m2")


# -- two tanks -----------------------------------------------------------------

def two_tank_process(config: TwoTankConfig) -> Callable:
    L, w, v1, v2 = config.L, config.w, config.v1, config.v2

    def delta_phi(x, u):
        x1, x2 = x
        mode = u[0]
        in1 = w if mode == "q1" else 0
        in2 = w if mode == "q2" else 0
        return (min(L, max(0, x1 + in1 - v1)), min(L, max(0, x2 + in2 - v2)))

    return delta_phi


def _two_tank_model(config: TwoTankConfig) -> CpsModel:
    if config.controller_version == "fairness":
        delta_io, gamma_io, qs = build_fairness_controller(config)
    else:
        delta_io, gamma_io, qs = build_original_controller(config)
    level = IntRange(0, config.L)
    modes = Choice(MODES)
    delta_phi = two_tank_process(config)
    name = "two-tank-fair" if config.controller_version == "fairness" else "two-tank-v1"
    model = CpsModel(
        name=name,
        inputs=(level, level), outputs=(modes,), controls=(modes,),
        controller=Choice(qs), process=(level, level), observations=(level, level),
        delta_io=delta_io, gamma_io=gamma_io,
        gamma_ad=lambda y: y,
        gamma_da=lambda o: o,
        # y reports the level reached at the end of the cycle
        gamma_phi=delta_phi,
        delta_phi=delta_phi,
    )
    return model


def two_tank_state(model: CpsModel, levels: tuple, mode: str = "q0") -> CpsState:
    """Settled state with both sensors, the hose and the process at ``levels``."""
    return model.state(i=levels, o=(mode,), u=(mode,), q=model.controller.values()[0],
                       x=levels, y=levels)


def critical_predicates(L: int) -> tuple:
    return (
        CriticalPredicate("E1", lambda y: y[0] == 0, "tank 1 empty", "y1"),
        CriticalPredicate("E2", lambda y: y[1] == 0, "tank 2 empty", "y2"),
        CriticalPredicate("F1", lambda y: y[0] == L, "tank 1 full", "y1"),
        CriticalPredicate("F2", lambda y: y[1] == L, "tank 2 full", "y2"),
    )


def measure_operating_band(model: CpsModel, sigma0: CpsState,
                           max_steps: int = 1_000_000) -> OperatingBand:
    """Per-observation min/max over the attack-free loop reached from ``sigma0``.

    The run stops at the first revisited state; the band covers the
    periodic part only, not the transient leading into it.  Bands touching
    a domain bound are flagged as degenerate.
    """
    if not model.autonomous:
        raise InvalidConfig("band measurement needs a model without external channels")
    seen = {}
    trace = []
    state = sigma0
    while state not in seen:
        if len(trace) >= max_steps:
            raise NoLoopWithinBudget(f"no repeated state within {max_steps} steps")
        seen[state] = len(trace)
        trace.append(state)
        state = model.successor(state)
    start = seen[state]
    loop = trace[start:]
    m = len(model.observations)
    lo = tuple(min(s.y[n] for s in loop) for n in range(m))
    hi = tuple(max(s.y[n] for s in loop) for n in range(m))
    degenerate = False
    for n, dom in enumerate(model.observations):
        if isinstance(dom, IntRange) and (lo[n] == dom.lo or hi[n] == dom.hi):
            degenerate = True
    return OperatingBand(lo, hi, start, len(loop), degenerate)


def calibrate_initial_state(model: CpsModel, config: TwoTankConfig, max_rounds: int = 50):
    """Find ``s0`` with both levels at the upper edge of the band they induce.

    Starts from the thresholds and moves the initial levels to the
    measured ``r_t^+`` until the band reproduces itself.  Some
    parameterisations alternate between attack-free loops instead; then
    the first visited candidate lying inside its own band (and above the
    thresholds) is used.
    """
    levels = (config.r1, config.r2)
    tried = {}
    for _ in range(max_rounds):
        sigma0 = two_tank_state(model, levels)
        band = measure_operating_band(model, sigma0)
        if band.hi == levels:
            return sigma0, band
        if levels in tried:
            break
        tried[levels] = (sigma0, band)
        levels = band.hi
    thresholds = (config.r1, config.r2)
    for levels, (sigma0, band) in tried.items():
        if all(r <= v <= hi for r, v, hi in zip(thresholds, levels, band.hi)):
            return sigma0, band
    raise InvalidConfig(f"initial state does not settle for {config}")


def build_two_tank(config: TwoTankConfig = DESK_CONFIG) -> Scenario:
    model = _two_tank_model(config)
    model.check_controller_total()
    sigma0, band = calibrate_initial_state(model, config)
    return Scenario(model, sigma0, critical_predicates(config.L),
                    build_attackers(config, model), band, config)


def build_attackers(config: TwoTankConfig, model: Optional[CpsModel] = None) -> dict:
    """alpha1 owns the command ``o``; alpha2 and alpha3 spoof ``i2`` and ``i1``.

    The sensor spoofers pick 0 or L (one value on each side of the
    controller's only branch on that input) or leave the reading alone.
    """
    model = model or _two_tank_model(config)
    return {
        "alpha1": AttackerSpec.on(model, "alpha1", {"o": MODES}),
        "alpha2": AttackerSpec.on(model, "alpha2", {"i2": (0, config.L)}, include_current=True),
        "alpha3": AttackerSpec.on(model, "alpha3", {"i1": (0, config.L)}, include_current=True),
    }


# -- single tank ---------------------------------------------------------------

@dataclass(frozen=True)
class SingleTankConfig:
    L: int = 20
    inflow: int = 5
    outflow: int = 3
    low: int = 5
    high: int = 15
    feed: int = 2  # litres added per cycle by the upstream channel when open
    schedule: tuple = (0, 1)  # upstream valve pattern, repeated over cycles

    def __post_init__(self):
        if not 0 <= self.low <= self.high <= self.L:
            raise InvalidConfig("need 0 <= low <= high <= L")
        if not self.schedule or any(v not in (0, 1) for v in self.schedule):
            raise InvalidConfig("schedule must be a non-empty 0/1 pattern")


def build_single_tank(config: SingleTankConfig = SingleTankConfig(),
                      composed: bool = False) -> Scenario:
    """One tank with an in valve and an out valve, level kept between low and high.

    ``composed`` appends an analog channel ``u*`` from an upstream module:
    a feed valve following ``config.schedule`` that adds ``feed`` litres
    per cycle while open.
    """
    L = config.L
    level = IntRange(0, L)
    valve = Choice(("close", "open"))
    bit = Choice((0, 1))

    def gamma_io(q, i):
        if i[0] < config.low:
            return ("open", "close")
        if i[0] > config.high:
            return ("close", "open")
        return ("close", "close")

    def gamma_da(o):
        return tuple(1 if v == "open" else 0 for v in o)

    def delta_phi(x, u):
        extra = config.feed * u[2] if len(u) > 2 else 0
        return (min(L, max(0, x[0] + config.inflow * u[0] - config.outflow * u[1] + extra)),)

    kwargs = {}
    if composed:
        pattern = config.schedule
        kwargs = dict(ext_analog=(bit,), ext_analog_source=lambda k: (pattern[k % len(pattern)],),
                      ext_period=len(pattern))
    model = CpsModel(
        name="single-tank-composed" if composed else "single-tank",
        inputs=(level,), outputs=(valve, valve), controls=(bit, bit),
        controller=Choice(("*",)), process=(level,), observations=(level,),
        delta_io=lambda q, i: q, gamma_io=gamma_io,
        gamma_ad=lambda y: y, gamma_da=gamma_da,
        gamma_phi=delta_phi, delta_phi=delta_phi,
        names={ComponentId(Kind.DIGITAL_OUTPUT, 0): "o_in",
               ComponentId(Kind.DIGITAL_OUTPUT, 1): "o_out",
               ComponentId(Kind.CONTROL_SIGNAL, 0): "u_in",
               ComponentId(Kind.CONTROL_SIGNAL, 1): "u_out"},
        **kwargs,
    )
    start = (config.low + config.high) // 2
    sigma0 = model.state(i=(start,), o=("close", "close"), u=(0, 0), q="*",
                         x=(start,), y=(start,))
    attackers = {
        "level-sensor": AttackerSpec.on(model, "level-sensor", {"i": (0, L)}),
        "in-valve": AttackerSpec.on(model, "in-valve", {"u_in": (0, 1)}),
        "out-valve": AttackerSpec.on(model, "out-valve", {"u_out": (0, 1)}),
    }
    if composed:
        attackers["upstream"] = AttackerSpec.on(model, "upstream", {"u*": (0, 1)})
    predicates = (
        CriticalPredicate("E", lambda y: y[0] == 0, "tank empty", "y"),
        CriticalPredicate("F", lambda y: y[0] == L, "tank full", "y"),
    )
    return Scenario(model, sigma0, predicates, attackers, None, config)


# -- registry ------------------------------------------------------------------

def _two_tank_variant(version: str) -> Callable:
    def build(**params):
        return build_two_tank(TwoTankConfig(**{**params, "controller_version": version}))
    return build


FIXTURES = {
    "two-tank-v1": _two_tank_variant("original"),
    "two-tank-fair": _two_tank_variant("fairness"),
    "single-tank": lambda **p: build_single_tank(SingleTankConfig(**p)),
    "single-tank-composed": lambda **p: build_single_tank(SingleTankConfig(**p), composed=True),
}

FIXTURE_PARAMS = {
    "two-tank-v1": ("L", "w", "v1", "v2", "r1", "r2"),
    "two-tank-fair": ("L", "w", "v1", "v2", "r1", "r2"),
    "single-tank": ("L", "inflow", "outflow", "low", "high"),
    "single-tank-composed": ("L", "inflow", "outflow", "low", "high", "feed", "schedule"),
}


def load_fixture(name: str, **params) -> Scenario:
    try:
        builder = FIXTURES[name]
    except KeyError:
        raise InvalidConfig(f"unknown fixture {name!r}; known: {', '.join(FIXTURES)}") from None
    unknown = set(params) - set(FIXTURE_PARAMS[name])
    if unknown:
        raise InvalidConfig(f"fixture {name} does not take {', '.join(sorted(unknown))}")
    return builder(**params)


def with_controller(config: TwoTankConfig, version: str) -> TwoTankConfig:
    return replace(config, controller_version=version)
