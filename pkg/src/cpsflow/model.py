"""Discrete CPS states and the deterministic single-cycle semantics.

A state is ``((i, o, u), (q, x), y)``: digital inputs, digital outputs and
analog control signals form the controllable part, the controller state
``q`` and process state ``x`` the hidden part, and ``y`` the observable
part.  Channels coming from neighbouring modules extend ``i`` and ``u``
with ``i_ext`` and ``u_ext``; their values are produced by cycle-indexed
generators attached to the model.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, NamedTuple, Optional

from .errors import DomainViolation, InvalidModel, UnknownComponent

Value = Hashable


class Kind(enum.Enum):
    DIGITAL_INPUT = "i"
    DIGITAL_OUTPUT = "o"
    CONTROL_SIGNAL = "u"
    CONTROLLER_STATE = "q"
    PROCESS_STATE = "x"
    OBSERVATION = "y"
    EXTERNAL_DIGITAL = "i_ext"
    EXTERNAL_ANALOG = "u_ext"

    @property
    def controllable(self) -> bool:
        return self in CONTROLLABLE_KINDS


CONTROLLABLE_KINDS = frozenset(
    {Kind.DIGITAL_INPUT, Kind.DIGITAL_OUTPUT, Kind.CONTROL_SIGNAL,
     Kind.EXTERNAL_DIGITAL, Kind.EXTERNAL_ANALOG}
)
_KIND_ORDER = {kind: n for n, kind in enumerate(Kind)}


@dataclass(frozen=True)
class ComponentId:
    kind: Kind
    index: int = 0

    def __post_init__(self):
        if self.index < 0:
            raise InvalidModel(f"negative component index {self.index}")
        if self.kind is Kind.CONTROLLER_STATE and self.index != 0:
            raise InvalidModel("the controller state is a single component")

    def __lt__(self, other: "ComponentId") -> bool:
        return (_KIND_ORDER[self.kind], self.index) < (_KIND_ORDER[other.kind], other.index)

    @property
    def field(self) -> str:
        return self.kind.value

    def __repr__(self) -> str:
        if self.kind is Kind.CONTROLLER_STATE:
            return "q"
        return f"{self.kind.value}[{self.index}]"


# -- domains -----------------------------------------------------------------

@dataclass(frozen=True)
class IntRange:
    """Closed integer interval ``[lo, hi]``."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise InvalidModel(f"empty range [{self.lo}, {self.hi}]")

    def __contains__(self, value) -> bool:
        return (isinstance(value, int) and not isinstance(value, bool)
                and self.lo <= value <= self.hi)

    def values(self) -> range:
        return range(self.lo, self.hi + 1)

    def clamp(self, value: int) -> int:
        return min(self.hi, max(self.lo, value))

    def __len__(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class Choice:
    """Finite, ordered set of symbolic values."""

    options: tuple

    def __post_init__(self):
        if not self.options:
            raise InvalidModel("a Choice domain needs at least one option")
        object.__setattr__(self, "options", tuple(self.options))

    def __contains__(self, value) -> bool:
        return value in self.options

    def values(self) -> tuple:
        return self.options

    def __len__(self) -> int:
        return len(self.options)


Domain = Any  # IntRange | Choice, or anything with __contains__ and values()


# -- states ------------------------------------------------------------------

class CpsState(NamedTuple):
    """Immutable CPS state; tuple equality is full componentwise equality."""

    i: tuple
    o: tuple
    u: tuple
    q: Value
    x: tuple
    y: tuple
    i_ext: tuple = ()
    u_ext: tuple = ()

    def get(self, cid: ComponentId) -> Value:
        if cid.kind is Kind.CONTROLLER_STATE:
            return self.q
        return getattr(self, cid.field)[cid.index]

    def replace_components(self, values: "Iterable[tuple[ComponentId, Value]]") -> "CpsState":
        """Return a copy with the given components overwritten."""
        changes: dict[str, Any] = {}
        for cid, value in values:
            if cid.kind is Kind.CONTROLLER_STATE:
                changes["q"] = value
                continue
            vec = changes.get(cid.field)
            if vec is None:
                vec = changes[cid.field] = list(getattr(self, cid.field))
            vec[cid.index] = value
        for name, vec in changes.items():
            if isinstance(vec, list):
                changes[name] = tuple(vec)
        return self._replace(**changes)

    def describe(self) -> str:
        ctl = (self.i + self.i_ext, self.o, self.u + self.u_ext)
        return f"(({_fmt(ctl[0])},{_fmt(ctl[1])},{_fmt(ctl[2])}),({self.q},{_fmt(self.x)}),{_fmt(self.y)})"


def _fmt(vec: tuple) -> str:
    if len(vec) == 1:
        return str(vec[0])
    return "(" + ",".join(str(v) for v in vec) + ")"


@dataclass(frozen=True)
class Trace:
    """States ``s0..sn`` and the optional attack applied before each step."""

    states: tuple
    attacks: tuple

    def __post_init__(self):
        if len(self.attacks) != len(self.states) - 1:
            raise ValueError("a trace needs exactly one attack slot per step")

    def __len__(self) -> int:
        return len(self.states)


# -- the model ---------------------------------------------------------------

_VECTOR_FIELDS = ("i", "o", "u", "x", "y", "i_ext", "u_ext")


@dataclass(frozen=True, eq=False)
class CpsModel:
    """Six semantics functions plus finite domains for every component.

    Signatures (vectors are tuples)::

        delta_io(q, i) -> q        gamma_io(q, i) -> o
        gamma_ad(y) -> i           gamma_da(o) -> u
        gamma_phi(x, u) -> y       delta_phi(x, u) -> x

    ``i`` and ``u`` as seen by the controller and the process include the
    external channels appended at the end.  The functions must be pure.
    """

    name: str
    inputs: tuple
    outputs: tuple
    controls: tuple
    controller: Domain
    process: tuple
    observations: tuple
    delta_io: Callable
    gamma_io: Callable
    gamma_ad: Callable
    gamma_da: Callable
    gamma_phi: Callable
    delta_phi: Callable
    ext_digital: tuple = ()
    ext_analog: tuple = ()
    ext_digital_source: Optional[Callable[[int], tuple]] = None
    ext_analog_source: Optional[Callable[[int], tuple]] = None
    names: dict = field(default_factory=dict)
    ext_period: Optional[int] = None  # the sources repeat with this period, if known

    def __post_init__(self):
        for attr in ("inputs", "outputs", "controls", "process", "observations",
                     "ext_digital", "ext_analog"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        if self.ext_digital and self.ext_digital_source is None:
            raise InvalidModel("external digital channels need a source")
        if self.ext_analog and self.ext_analog_source is None:
            raise InvalidModel("external analog channels need a source")
        if self.ext_period is not None and self.ext_period < 1:
            raise InvalidModel("ext_period must be positive")
        names = {cid: _default_name(cid, self) for cid in self.components()}
        for cid, label in self.names.items():
            if cid not in names:
                raise UnknownComponent(cid)
            names[cid] = label
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_by_name", {v: k for k, v in names.items()})

    # domains and components

    def domains(self) -> dict:
        return {
            "i": self.inputs, "o": self.outputs, "u": self.controls,
            "x": self.process, "y": self.observations,
            "i_ext": self.ext_digital, "u_ext": self.ext_analog,
        }

    def arity(self, kind: Kind) -> int:
        if kind is Kind.CONTROLLER_STATE:
            return 1
        return len(self.domains()[kind.value])

    def domain_of(self, cid: ComponentId) -> Domain:
        if cid.kind is Kind.CONTROLLER_STATE:
            return self.controller
        doms = self.domains()[cid.field]
        if cid.index >= len(doms):
            raise UnknownComponent(cid)
        return doms[cid.index]

    def components(self, kinds: Optional[Iterable[Kind]] = None) -> list:
        wanted = set(kinds) if kinds is not None else set(Kind)
        out = []
        for kind in Kind:
            if kind not in wanted:
                continue
            out.extend(ComponentId(kind, n) for n in range(self.arity(kind)))
        return out

    def component(self, ref) -> ComponentId:
        """Resolve a component by id or display name (``"y1"``, ``"o"``)."""
        if isinstance(ref, ComponentId):
            self.domain_of(ref)
            return ref
        try:
            return self._by_name[ref]
        except KeyError:
            raise UnknownComponent(f"{self.name}: no component named {ref!r}") from None

    def name_of(self, cid: ComponentId) -> str:
        return self.names[cid]

    @property
    def autonomous(self) -> bool:
        """True when successors do not depend on the cycle index."""
        return self.ext_digital_source is None and self.ext_analog_source is None

    def phase(self, cycle: int) -> Optional[int]:
        """Cycle position within the source period; None if unknowable.

        Autonomous models have a single phase.  Two layers can only be
        declared a loop when their phases agree.
        """
        if self.autonomous:
            return 0
        return None if self.ext_period is None else cycle % self.ext_period

    # validation

    def check_state(self, state: CpsState, what: str = "state") -> None:
        doms = self.domains()
        for name in _VECTOR_FIELDS:
            vec = getattr(state, name)
            dom = doms[name]
            if len(vec) != len(dom):
                raise DomainViolation(
                    f"{what}: {name} has arity {len(vec)}, model {self.name} expects {len(dom)}")
            for n, (value, d) in enumerate(zip(vec, dom)):
                if value not in d:
                    raise DomainViolation(f"{what}: {name}[{n}]={value!r} outside its domain")
        if state.q not in self.controller:
            raise DomainViolation(f"{what}: q={state.q!r} outside the controller domain")

    def is_valid(self, state: CpsState) -> bool:
        try:
            self.check_state(state)
        except DomainViolation:
            return False
        return True

    def state(self, *, i, o, u, q, x, y, i_ext=None, u_ext=None, cycle: int = 0) -> CpsState:
        """Build and validate a state; external channels default to their source at ``cycle``."""
        if i_ext is None:
            i_ext = tuple(self.ext_digital_source(cycle)) if self.ext_digital_source else ()
        if u_ext is None:
            u_ext = tuple(self.ext_analog_source(cycle)) if self.ext_analog_source else ()
        s = CpsState(tuple(i), tuple(o), tuple(u), q, tuple(x), tuple(y), tuple(i_ext), tuple(u_ext))
        self.check_state(s)
        return s

    def all_states(self) -> Iterable[CpsState]:
        """Enumerate the full state space (only sensible for tiny models)."""
        doms = self.domains()
        vecs = [list(itertools.product(*(d.values() for d in doms[name])))
                for name in ("i", "o", "u")]
        qs = list(self.controller.values())
        rest = [list(itertools.product(*(d.values() for d in doms[name])))
                for name in ("x", "y", "i_ext", "u_ext")]
        for i, o, u, q, x, y, ie, ue in itertools.product(*vecs, qs, *rest):
            yield CpsState(i, o, u, q, x, y, ie, ue)

    def state_space_size(self) -> int:
        size = len(self.controller)
        for doms in self.domains().values():
            for d in doms:
                size *= len(d)
        return size

    def check_controller_total(self, limit: int = 2_000_000) -> None:
        """Evaluate the controller on every (q, i) pair; raise on gaps.

        A missing branch shows up as an exception or an out-of-domain
        result, both of which are construction errors.
        """
        doms = [*self.inputs, *self.ext_digital]
        count = len(self.controller)
        for d in doms:
            count *= len(d)
        if count > limit:
            raise InvalidModel(f"controller table too large to check ({count} entries)")
        for q in self.controller.values():
            for i in itertools.product(*(d.values() for d in doms)):
                try:
                    q2 = self.delta_io(q, i)
                    o = tuple(self.gamma_io(q, i))
                except Exception as exc:  # noqa: BLE001 - reported as a model error
                    raise InvalidModel(f"controller undefined at q={q!r}, i={i!r}: {exc}") from exc
                if q2 not in self.controller or len(o) != len(self.outputs) or any(
                        v not in d for v, d in zip(o, self.outputs)):
                    raise InvalidModel(f"controller leaves its domain at q={q!r}, i={i!r}")

    # semantics

    def successor(self, s: CpsState, cycle: int = 0) -> CpsState:
        """One cycle of the semantics without domain checks."""
        i = s.i + s.i_ext
        u = s.u + s.u_ext
        return CpsState(
            tuple(self.gamma_ad(s.y)),
            tuple(self.gamma_io(s.q, i)),
            tuple(self.gamma_da(s.o)),
            self.delta_io(s.q, i),
            tuple(self.delta_phi(s.x, u)),
            tuple(self.gamma_phi(s.x, u)),
            tuple(self.ext_digital_source(cycle + 1)) if self.ext_digital_source else (),
            tuple(self.ext_analog_source(cycle + 1)) if self.ext_analog_source else (),
        )


def _default_name(cid: ComponentId, model: CpsModel) -> str:
    if cid.kind is Kind.CONTROLLER_STATE:
        return "q"
    base = {"i_ext": "i*", "u_ext": "u*"}.get(cid.field, cid.field)
    if model.arity(cid.kind) == 1:
        return base
    return f"{base}{cid.index + 1}"


def step(model: CpsModel, state: CpsState, cycle: int = 0) -> CpsState:
    """Advance ``state`` by one cycle.

    Every primed component is computed from the unprimed input state, so
    an attack on ``o`` reaches ``u`` one cycle later and the process one
    cycle after that.  ``cycle`` only matters for models with external
    channels.
    """
    model.check_state(state)
    nxt = model.successor(state, cycle)
    model.check_state(nxt, what=f"{model.name} successor")
    return nxt


def run(model: CpsModel, state: CpsState, k: int, start_cycle: int = 0) -> Trace:
    if k < 0:
        raise ValueError("k must be non-negative")
    states = [state]
    for j in range(k):
        states.append(step(model, states[-1], start_cycle + j))
    return Trace(tuple(states), (None,) * k)


def observations(trace: Trace) -> list:
    return [s.y for s in trace.states]


def sample_state(model: CpsModel, rng) -> CpsState:
    """Draw a domain-valid state uniformly per component (``rng``: random.Random)."""
    doms = model.domains()

    def vec(name):
        return tuple(rng.choice(list(d.values())) for d in doms[name])

    return CpsState(vec("i"), vec("o"), vec("u"), rng.choice(list(model.controller.values())),
                    vec("x"), vec("y"), vec("i_ext"), vec("u_ext"))
