"""Attacker capabilities, attack assignments and H-equivalence.

An attacker owns a set of controllable components (digital inputs, digital
outputs, analog control signals, or the external channels extending them).
Before every cycle it may overwrite each of them with one value from a
finite set of representatives; one such choice is an *assignment*.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .errors import DomainViolation, InvalidModel
from .model import ComponentId, CpsModel, CpsState, Kind, step

# An assignment is a tuple of (component, value) pairs sorted by component.
AttackAssignment = tuple

_FIELD_POS = {name: n for n, name in enumerate(CpsState._fields)}


class Level(enum.Enum):
    LOW = "L"
    HIGH = "H"


@dataclass(frozen=True)
class AttackerSpec:
    """An attacker ``alpha`` with controlled set ``C_alpha``.

    ``attack_domain`` maps each controlled component to its representative
    values.  With ``include_current`` the untampered value of the component
    is offered as an extra choice every cycle, so the attacker may also
    stay passive.
    """

    name: str
    attack_domain: Mapping = field(default_factory=dict)
    include_current: bool = True

    def __post_init__(self):
        doms = {}
        for cid, values in dict(self.attack_domain).items():
            if not isinstance(cid, ComponentId):
                raise InvalidModel(f"attacker {self.name}: {cid!r} is not a ComponentId")
            if not cid.kind.controllable:
                raise InvalidModel(
                    f"attacker {self.name}: {cid!r} is not a controllable component")
            values = tuple(sorted(set(values)))
            if not values:
                raise InvalidModel(f"attacker {self.name}: empty attack domain for {cid!r}")
            doms[cid] = values
        object.__setattr__(self, "attack_domain", dict(sorted(doms.items())))

    @classmethod
    def baseline(cls) -> "AttackerSpec":
        """The pseudo-attacker controlling nothing."""
        return cls("baseline", {})

    @classmethod
    def on(cls, model: CpsModel, name: str, domain: Mapping, include_current: bool = True):
        """Declare an attacker using component names of ``model``."""
        spec = cls(name, {model.component(ref): tuple(vals) for ref, vals in domain.items()},
                   include_current)
        spec.check(model)
        return spec

    @property
    def controlled(self) -> tuple:
        return tuple(self.attack_domain)

    def check(self, model: CpsModel) -> None:
        for cid, values in self.attack_domain.items():
            dom = model.domain_of(cid)
            for v in values:
                if v not in dom:
                    raise DomainViolation(
                        f"attacker {self.name}: value {v!r} for {model.name_of(cid)} "
                        "outside the model domain")

    def label(self, cid: ComponentId) -> Level:
        return Level.LOW if cid in self.attack_domain else Level.HIGH

    def choices(self, state: CpsState) -> list:
        """Per controlled component, the sorted values available at ``state``."""
        out = []
        for cid, values in self.attack_domain.items():
            if self.include_current:
                values = tuple(sorted(set(values) | {state.get(cid)}))
            out.append(values)
        return out

    def assignments(self, state: CpsState) -> list:
        """All assignments available at ``state``, in canonical order."""
        cids = self.controlled
        return [tuple(zip(cids, combo)) for combo in itertools.product(*self.choices(state))]

    def variants(self, state: CpsState) -> list:
        """``(attacked state, assignment)`` pairs, one per available assignment."""
        if not self.attack_domain:
            return [(state, ())]
        slots = [(_FIELD_POS[cid.field], cid.index, cid.kind is Kind.CONTROLLER_STATE)
                 for cid in self.controlled]
        out = []
        for a in self.assignments(state):
            parts = list(state)
            for (pos, idx, scalar), (_, value) in zip(slots, a):
                if scalar:
                    parts[pos] = value
                else:
                    vec = parts[pos]
                    parts[pos] = vec[:idx] + (value,) + vec[idx + 1:]
            out.append((CpsState._make(parts), a))
        return out


def security_labels(model: CpsModel, attacker: AttackerSpec) -> dict:
    """Low for every component the attacker controls, High for the rest."""
    return {cid: attacker.label(cid) for cid in model.components()}


def as_assignment(assignment) -> AttackAssignment:
    if assignment is None:
        return ()
    if isinstance(assignment, Mapping):
        assignment = assignment.items()
    return tuple(sorted(assignment, key=lambda pair: pair[0]))


def apply_attack(model: CpsModel, state: CpsState, assignment) -> CpsState:
    """Overwrite the controllable components named in ``assignment``."""
    pairs = as_assignment(assignment)
    for cid, value in pairs:
        if not cid.kind.controllable:
            raise InvalidModel(f"attacks may only change controllable components, not {cid!r}")
        if value not in model.domain_of(cid):
            raise DomainViolation(
                f"attack value {value!r} for {model.name_of(cid)} outside the model domain")
    return state.replace_components(pairs)


def attacked_step(model: CpsModel, state: CpsState, assignment, cycle: int = 0) -> CpsState:
    """Apply the attack to the controllable part, then run one cycle."""
    return step(model, apply_attack(model, state, assignment), cycle)


def attacked_run(model: CpsModel, state: CpsState, attacks: Iterable, start_cycle: int = 0):
    """Replay a sequence of (optional) assignments; returns the list of states."""
    states = [state]
    for j, a in enumerate(attacks):
        states.append(attacked_step(model, states[-1], a, start_cycle + j))
    return states


def h_equal(a: CpsState, b: CpsState, attacker: AttackerSpec) -> bool:
    """True iff ``a`` and ``b`` agree on every High-labelled component."""
    if not attacker.attack_domain:
        return a == b
    return a.replace_components((cid, b.get(cid)) for cid in attacker.controlled) == b


def h_equivalent_states(model: CpsModel, attacker: AttackerSpec, state: CpsState) -> frozenset:
    """States equal to ``state`` on High components, drawn from the attack domain.

    ``state`` itself is always a member.
    """
    model.check_state(state)
    return frozenset(s for s, _ in attacker.variants(state)) | {state}


def assignment_repr(model: Optional[CpsModel], assignment: AttackAssignment) -> dict:
    if model is None:
        return {repr(cid): value for cid, value in assignment}
    return {model.name_of(cid): value for cid, value in assignment}
