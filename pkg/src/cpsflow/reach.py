"""Layered attacker reachability, k-controllability and process integrity.

``reach`` builds the sets ``S^0 = {s0}`` and ``S^{j+1}`` = every successor
of every state H-equivalent (under the attacker) to a member of ``S^j``.
Layers are kept exactly (a state may recur in several layers) and each
entry remembers one parent and the assignment that produced it, which is
enough to replay a witness.
"""

from __future__ import annotations

import logging
from array import array
from bisect import bisect_left
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Union

from .attacker import AttackerSpec, apply_attack, attacked_step, h_equal
from .errors import BudgetExceeded, UnknownComponent
from .model import ComponentId, CpsModel, CpsState, Kind, Trace

log = logging.getLogger(__name__)

DEFAULT_K_MAX = 1000


@dataclass(frozen=True)
class Budget:
    max_total: int = 5_000_000
    max_layer: int = 500_000


@dataclass(frozen=True)
class LayerStats:
    size: int
    explored: int  # cumulative states over layers 0..j
    distinct: int  # distinct states seen in any layer so far
    new: int  # states never seen in an earlier layer


class _LayerView(Sequence):
    """Read-only view presenting layers of state ids as tuples of states."""

    def __init__(self, result: "ReachResult"):
        self._result = result

    def __len__(self) -> int:
        return len(self._result._layer_ids)

    def __getitem__(self, j):
        if isinstance(j, slice):
            return [self[n] for n in range(*j.indices(len(self)))]
        states = self._result._states
        return tuple(states[sid] for sid in self._result._layer_ids[j])


@dataclass(eq=False)
class ReachResult:
    """Layers ``0..k`` plus one parent link per state.

    States are interned: ``_states[id]`` is the canonical object and each
    layer is an array of ids in ascending id order.  Ids are handed out in
    discovery order, which depends only on the model, the attacker and
    ``sigma0``, so layer order is reproducible across processes.
    """

    model: CpsModel
    attacker: AttackerSpec
    sigma0: CpsState
    stats: list = field(default_factory=list)
    loop: Optional[tuple] = None  # (j, k): layer k repeats layer j
    complete: bool = True
    _states: list = field(default_factory=list, repr=False)
    _index: dict = field(default_factory=dict, repr=False)
    _layer_ids: list = field(default_factory=list, repr=False)
    _parent_ids: list = field(default_factory=list, repr=False)
    _assign_ids: list = field(default_factory=list, repr=False)
    _assignments: list = field(default_factory=list, repr=False)

    @property
    def k(self) -> int:
        return len(self._layer_ids) - 1

    @property
    def layers(self) -> Sequence:
        return _LayerView(self)

    @property
    def distinct_states(self) -> int:
        return len(self._states)

    def layer_size(self, layer: int) -> int:
        return len(self._layer_ids[layer])

    def layer_set(self, layer: int) -> frozenset:
        return frozenset(self.layers[layer])

    def __contains__(self, item) -> bool:
        layer, state = item
        return self._position(layer, state) is not None

    def _position(self, layer: int, state: CpsState) -> Optional[int]:
        sid = self._index.get(state)
        if sid is None:
            return None
        ids = self._layer_ids[layer]
        pos = bisect_left(ids, sid)
        if pos < len(ids) and ids[pos] == sid:
            return pos
        return None

    def parent_of(self, layer: int, state: CpsState):
        """``(state in layer-1, assignment)`` that produced ``state``."""
        if layer == 0:
            raise ValueError("layer 0 has no parents")
        pos = self._position(layer, state)
        if pos is None:
            raise KeyError(f"state not in layer {layer}")
        parent = self._states[self._parent_ids[layer][pos]]
        return parent, self._assignments[self._assign_ids[layer][pos]]

    def trace_to(self, layer: int, state: CpsState) -> Trace:
        """Attacked trace from ``sigma0`` ending in ``state`` at ``layer``."""
        states = [state]
        attacks = []
        for j in range(layer, 0, -1):
            state, assignment = self.parent_of(j, state)
            states.append(state)
            attacks.append(assignment)
        return Trace(tuple(reversed(states)), tuple(reversed(attacks)))


@dataclass(frozen=True)
class Projection:
    values: frozenset
    hull: tuple  # (lo, hi) per projected component
    components: tuple

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class CriticalPredicate:
    """A named test over the observation vector ``y``."""

    name: str
    test: Callable
    description: str = ""
    variable: Optional[str] = None  # observation the test looks at, if only one

    def __call__(self, y: tuple) -> bool:
        return bool(self.test(y))


@dataclass(frozen=True)
class Witness:
    """Two attacked traces from ``sigma0`` whose observations differ at ``cycle``.

    Their first attacked states are H-equivalent; replaying both through
    ``attacked_step`` reproduces the divergence.
    """

    first: Trace
    second: Trace
    cycle: int

    def start_states(self, model: CpsModel) -> tuple:
        def start(t):
            return apply_attack(model, t.states[0], t.attacks[0]) if t.attacks else t.states[0]
        return start(self.first), start(self.second)


@dataclass(frozen=True)
class IntegrityVerdict:
    status: str  # "holds" | "violated" | "unknown"
    k: int
    witness: Optional[Witness] = None
    layer_reached: Optional[int] = None

    @property
    def holds(self) -> bool:
        return self.status == "holds"


@dataclass(frozen=True)
class Vulnerability:
    reachable: bool
    layer: Optional[int] = None
    state: Optional[CpsState] = None
    trace: Optional[Trace] = None


# -- exploration -------------------------------------------------------------

def reach(model: CpsModel, attacker: AttackerSpec, sigma0: CpsState,
          k: Union[int, str], budget: Optional[Budget] = None,
          k_max: int = DEFAULT_K_MAX) -> ReachResult:
    """Build layers ``0..k`` of the attacker's reachable sets.

    ``k="auto"`` explores until a layer equals an earlier one at the same
    source phase (the layer sequence has entered its loop, so every later
    layer is already known) or until ``k_max``.  Models with external
    sources of unknown period never close a loop and run to ``k_max``.  Raises ``BudgetExceeded`` carrying the partial
    result when a budget limit is hit.
    """
    budget = budget or Budget()
    auto = k == "auto"
    depth = k_max if auto else int(k)
    if depth < 0:
        raise ValueError("k must be non-negative")
    model.check_state(sigma0, what="initial state")
    attacker.check(model)

    res = ReachResult(model, attacker, sigma0)
    states, index = res._states, res._index
    assignments, assignment_ids = res._assignments, {}
    states.append(sigma0)
    index[sigma0] = 0
    res._layer_ids.append(array("q", [0]))
    res._parent_ids.append(array("q"))
    res._assign_ids.append(array("q"))
    res.stats.append(LayerStats(1, 1, 1, 1))
    explored = 1
    seen_layers = {(res._layer_ids[0].tobytes(), model.phase(0)): 0}
    # successors of a state under every assignment; reusable across layers
    # only when the model ignores the cycle index
    expansions: dict = {}
    autonomous = model.autonomous
    successor = model.successor
    variants = attacker.variants

    def expand(sid: int, cycle: int) -> list:
        out = []
        for pre, assignment in variants(states[sid]):
            post = successor(pre, cycle)
            pid = index.get(post)
            if pid is None:
                model.check_state(post, what=f"layer {cycle + 1} state")
                pid = index[post] = len(states)
                states.append(post)
            aid = assignment_ids.get(assignment)
            if aid is None:
                aid = assignment_ids[assignment] = len(assignments)
                assignments.append(assignment)
            out.append((pid, aid))
        return out

    for j in range(depth):
        before = len(states)
        nxt: dict = {}
        if not autonomous:
            expansions = {}
        for sid in res._layer_ids[j]:
            exp = expansions.get(sid)
            if exp is None:
                exp = expansions[sid] = expand(sid, j)
            for pid, aid in exp:
                if pid not in nxt:
                    nxt[pid] = (sid, aid)
        if len(nxt) > budget.max_layer or explored + len(nxt) > budget.max_total:
            res.complete = False
            raise BudgetExceeded(
                f"budget exhausted building layer {j + 1} "
                f"({len(nxt)} states, {explored} explored)", partial=res, layer=j + 1)
        ids = array("q", sorted(nxt))
        res._layer_ids.append(ids)
        res._parent_ids.append(array("q", (nxt[pid][0] for pid in ids)))
        res._assign_ids.append(array("q", (nxt[pid][1] for pid in ids)))
        explored += len(ids)
        res.stats.append(LayerStats(len(ids), explored, len(states), len(states) - before))
        phase = model.phase(j + 1)
        if auto and phase is not None:
            key = (ids.tobytes(), phase)
            if key in seen_layers:
                res.loop = (seen_layers[key], j + 1)
                log.debug("layer %d repeats layer %d", j + 1, seen_layers[key])
                break
            seen_layers[key] = j + 1
    return res


# -- projections ---------------------------------------------------------------

def _observation_ids(model: CpsModel, components) -> tuple:
    if components is None:
        return tuple(model.components([Kind.OBSERVATION]))
    if isinstance(components, (str, ComponentId)):
        components = [components]
    out = []
    for ref in components:
        cid = model.component(ref)
        if cid.kind is not Kind.OBSERVATION:
            raise UnknownComponent(f"{model.name_of(cid)} is not an observation")
        out.append(cid)
    return tuple(out)


def _projection(states: Iterable[CpsState], cids: tuple) -> Projection:
    idx = [c.index for c in cids]
    values = frozenset(tuple(s.y[n] for n in idx) for s in states)
    hull = tuple((min(v[n] for v in values), max(v[n] for v in values)) for n in range(len(idx)))
    return Projection(values, hull, cids)


def project(result: ReachResult, layer: int, components=None) -> Projection:
    """Distinct observation tuples on ``components`` in one layer, plus their hull."""
    if not 0 <= layer <= result.k:
        raise IndexError(f"layer {layer} outside 0..{result.k}")
    return _projection(result.layers[layer], _observation_ids(result.model, components))


def project_all(result: ReachResult, components=None, upto: Optional[int] = None) -> Projection:
    """Union of the projections of layers ``0..upto`` (default: every layer)."""
    last = result.k if upto is None else upto
    cids = _observation_ids(result.model, components)
    states = (s for layer in result.layers[:last + 1] for s in layer)
    return _projection(states, cids)


def controllability(result: ReachResult, layer: int, components=None) -> int:
    return len(project(result, layer, components))


# -- integrity -----------------------------------------------------------------

def witness_at(result: ReachResult, layer: int) -> Optional[Witness]:
    """Two traces reaching layer ``layer`` with different ``y``, if any."""
    states = result.layers[layer]
    first = states[0]
    other = next((s for s in states if s.y != first.y), None)
    if other is None:
        return None
    return Witness(result.trace_to(layer, first), result.trace_to(layer, other), layer)


def integrity_verdict(result: ReachResult, k: Optional[int] = None) -> IntegrityVerdict:
    """Decide k-process integrity from already-built layers."""
    k = result.k if k is None else k
    if k > result.k:
        return IntegrityVerdict("unknown", k, layer_reached=result.k)
    for j in range(1, k + 1):
        if len({s.y for s in result.layers[j]}) > 1:
            return IntegrityVerdict("violated", k, witness_at(result, j), layer_reached=j)
    return IntegrityVerdict("holds", k, layer_reached=k)


def check_integrity(model: CpsModel, attacker: AttackerSpec, sigma0: CpsState,
                    k: Union[int, str], budget: Optional[Budget] = None,
                    k_max: int = DEFAULT_K_MAX) -> IntegrityVerdict:
    try:
        result = reach(model, attacker, sigma0, k, budget, k_max)
    except BudgetExceeded as exc:
        partial = exc.partial
        verdict = integrity_verdict(partial)
        if verdict.status == "violated":
            return verdict
        target = k_max if k == "auto" else int(k)
        return IntegrityVerdict("unknown", target, layer_reached=partial.k)
    return integrity_verdict(result)


def replay_witness(model: CpsModel, witness: Witness) -> bool:
    """Re-run both traces through ``attacked_step`` and confirm the divergence."""
    ends = []
    for trace in (witness.first, witness.second):
        state = trace.states[0]
        for j, assignment in enumerate(trace.attacks):
            state = attacked_step(model, state, assignment, j)
            if state != trace.states[j + 1]:
                return False
        ends.append(state)
    if len(witness.first.attacks) != witness.cycle or len(witness.second.attacks) != witness.cycle:
        return False
    return ends[0].y != ends[1].y


def starts_h_equivalent(model: CpsModel, attacker: AttackerSpec, witness: Witness) -> bool:
    a, b = witness.start_states(model)
    return h_equal(a, b, attacker)


def corollary_check(result: ReachResult) -> bool:
    """Controllability above 1 at some layer must come with a replayable violation.

    For every layer with more than one observation vector, the integrity
    verdict at that depth has to be "violated" and its witness has to
    replay.  Layers with controllability 1 are vacuously consistent.
    """
    for j in range(result.k + 1):
        if controllability(result, j) <= 1:
            continue
        verdict = integrity_verdict(result, j)
        if verdict.status != "violated" or verdict.witness is None:
            return False
        if not replay_witness(result.model, verdict.witness):
            return False
    return True


# -- critical states -----------------------------------------------------------

def vulnerability_report(result: ReachResult, predicates: Sequence[CriticalPredicate]) -> dict:
    """For each predicate, the earliest layer holding a satisfying state."""
    report = {}
    for pred in predicates:
        found = Vulnerability(False)
        for j, layer in enumerate(result.layers):
            hit = next((s for s in layer if pred(s.y)), None)
            if hit is not None:
                found = Vulnerability(True, j, hit, result.trace_to(j, hit))
                break
        report[pred.name] = found
    return report
