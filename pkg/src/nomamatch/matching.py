"""Pre-matchings, the willingness maps U and V, the T operator and its fixed-point loop."""
from __future__ import annotations

import enum
import functools
import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional

from .prefcore import AgentId, PartnerSet, Preference, Side, channel, vehicle

DEFAULT_CAP = 10_000


@dataclass(frozen=True)
class Instance:
    """Vehicles ``v1..vn``, channels ``c1..cm`` and one preference per agent."""

    n_vehicles: int
    n_channels: int
    prefs: Mapping[AgentId, Preference] = field(hash=False)

    def __post_init__(self):
        if self.n_vehicles < 0 or self.n_channels < 0:
            raise ValueError("side sizes must be non-negative")
        expected = set(self.vehicles) | set(self.channels)
        if set(self.prefs) != expected:
            missing = sorted(expected - set(self.prefs))
            extra = sorted(set(self.prefs) - expected)
            raise ValueError(f"preferences missing for {missing}, unexpected for {extra}")
        for agent, pref in self.prefs.items():
            if pref.owner != agent:
                raise ValueError(f"preference stored under {agent} is owned by {pref.owner}")
            limit = self.side_size(agent.side.other)
            for partner in _partners_mentioned(pref):
                if partner.index >= limit:
                    raise ValueError(f"preference of {agent} mentions unknown agent {partner}")
        object.__setattr__(self, "prefs", dict(sorted(self.prefs.items())))

    @property
    def vehicles(self) -> list[AgentId]:
        return [vehicle(i) for i in range(self.n_vehicles)]

    @property
    def channels(self) -> list[AgentId]:
        return [channel(i) for i in range(self.n_channels)]

    @property
    def agents(self) -> list[AgentId]:
        return self.vehicles + self.channels

    def side_size(self, side: Side) -> int:
        return self.n_vehicles if side is Side.VEHICLE else self.n_channels

    def universe(self, side: Side) -> PartnerSet:
        return PartnerSet.full(side, self.side_size(side))

    def pref(self, agent: AgentId) -> Preference:
        return self.prefs[agent]

    @functools.cached_property
    def vehicle_choice(self) -> tuple[tuple[int, ...], ...]:
        return tuple(self.prefs[v].choice_table(self.n_channels) for v in self.vehicles)

    @functools.cached_property
    def channel_choice(self) -> tuple[tuple[int, ...], ...]:
        return tuple(self.prefs[c].choice_table(self.n_vehicles) for c in self.channels)

    @functools.cached_property
    def vehicle_keys(self) -> tuple[tuple[float, ...], ...]:
        return tuple(self.prefs[v].key_table(self.n_channels) for v in self.vehicles)

    @functools.cached_property
    def channel_keys(self) -> tuple[tuple[float, ...], ...]:
        return tuple(self.prefs[c].key_table(self.n_vehicles) for c in self.channels)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (self.n_vehicles, self.n_channels, self.prefs) == (
            other.n_vehicles,
            other.n_channels,
            other.prefs,
        )

    def __hash__(self):
        return hash((self.n_vehicles, self.n_channels, tuple(self.prefs.items())))

    def __getstate__(self):
        # cached tables are rebuilt on demand
        return {k: v for k, v in self.__dict__.items() if not k.startswith(("vehicle_", "channel_"))}

    def __setstate__(self, state):
        self.__dict__.update(state)


def _partners_mentioned(pref: Preference) -> Iterable[AgentId]:
    ranking = getattr(pref, "ranking", None)
    if ranking is not None:
        for s in ranking:
            yield from s
    utility = getattr(pref, "utility", None)
    if utility is not None:
        yield from utility


@dataclass(frozen=True, eq=False)
class PreMatching:
    """Two independent assignment maps; they need not agree with each other."""

    vehicle_sets: tuple[PartnerSet, ...]
    channel_sets: tuple[PartnerSet, ...]

    def __post_init__(self):
        object.__setattr__(self, "vehicle_sets", tuple(self.vehicle_sets))
        object.__setattr__(self, "channel_sets", tuple(self.channel_sets))
        for s in self.vehicle_sets:
            if s.side is not Side.CHANNEL or s.mask >> len(self.channel_sets):
                raise ValueError(f"vehicle assignment {s} is not a set of known channels")
        for s in self.channel_sets:
            if s.side is not Side.VEHICLE or s.mask >> len(self.vehicle_sets):
                raise ValueError(f"channel assignment {s} is not a set of known vehicles")

    @classmethod
    def from_masks(cls, vmasks: Iterable[int], cmasks: Iterable[int]) -> "PreMatching":
        return cls(
            tuple(PartnerSet(Side.CHANNEL, m) for m in vmasks),
            tuple(PartnerSet(Side.VEHICLE, m) for m in cmasks),
        )

    def __eq__(self, other):
        if not isinstance(other, PreMatching):
            return NotImplemented
        return self.vmasks == other.vmasks and self.cmasks == other.cmasks

    def __hash__(self):
        return hash((self.vmasks, self.cmasks))

    @property
    def vmasks(self) -> tuple[int, ...]:
        return tuple(s.mask for s in self.vehicle_sets)

    @property
    def cmasks(self) -> tuple[int, ...]:
        return tuple(s.mask for s in self.channel_sets)

    def __getitem__(self, agent: AgentId) -> PartnerSet:
        if agent.side is Side.VEHICLE:
            return self.vehicle_sets[agent.index]
        return self.channel_sets[agent.index]

    def items(self) -> Iterator[tuple[AgentId, PartnerSet]]:
        for i, s in enumerate(self.vehicle_sets):
            yield vehicle(i), s
        for i, s in enumerate(self.channel_sets):
            yield channel(i), s

    def is_consistent(self) -> bool:
        return is_consistent(self)

    def describe(self) -> str:
        return "; ".join(f"M({a})={s}" for a, s in self.items())


@dataclass(frozen=True, eq=False)
class Matching(PreMatching):
    """A pre-matching whose two maps agree: v in M(c) iff c in M(v)."""

    def __post_init__(self):
        super().__post_init__()
        if not is_consistent(self):
            raise ValueError("vehicle and channel assignments disagree")

    @classmethod
    def from_edges(cls, n_vehicles: int, n_channels: int, edges: Iterable[tuple[int, int]]) -> "Matching":
        vm = [0] * n_vehicles
        cm = [0] * n_channels
        for v, c in edges:
            if not (0 <= v < n_vehicles and 0 <= c < n_channels):
                raise ValueError(f"edge ({v}, {c}) outside the instance")
            vm[v] |= 1 << c
            cm[c] |= 1 << v
        return cls.from_masks(vm, cm)

    @classmethod
    def empty(cls, n_vehicles: int, n_channels: int) -> "Matching":
        return cls.from_masks([0] * n_vehicles, [0] * n_channels)

    @classmethod
    def from_prematching(cls, m: PreMatching) -> "Matching":
        return cls(m.vehicle_sets, m.channel_sets)

    def edges(self) -> list[tuple[AgentId, AgentId]]:
        return [(vehicle(v), c) for v, s in enumerate(self.vehicle_sets) for c in s]

    def edge_indices(self) -> list[tuple[int, int]]:
        return [(v, c) for v, s in enumerate(self.vehicle_sets) for c in s.indices()]

    def sort_key(self) -> tuple:
        e = self.edge_indices()
        return (len(e), e)


def is_consistent(m: PreMatching) -> bool:
    cm = m.cmasks
    for v, s in enumerate(m.vehicle_sets):
        for c in range(len(cm)):
            if bool(s.mask >> c & 1) != bool(cm[c] >> v & 1):
                return False
    return True


def initial_state(inst: Instance) -> PreMatching:
    """Every vehicle holds every channel, every channel holds nothing."""
    full = (1 << inst.n_channels) - 1
    return PreMatching.from_masks([full] * inst.n_vehicles, [0] * inst.n_channels)


def _willing(inst: Instance, vm: tuple[int, ...], cm: tuple[int, ...]):
    """U per channel and V per vehicle, as masks."""
    vch, cch = inst.vehicle_choice, inst.channel_choice
    u = []
    for c in range(inst.n_channels):
        bit = 1 << c
        s = 0
        for v in range(inst.n_vehicles):
            if vch[v][vm[v] | bit] & bit:
                s |= 1 << v
        u.append(s)
    w = []
    for v in range(inst.n_vehicles):
        bit = 1 << v
        s = 0
        for c in range(inst.n_channels):
            if cch[c][cm[c] | bit] & bit:
                s |= 1 << c
        w.append(s)
    return tuple(u), tuple(w)


def _t_masks(inst: Instance, vm, cm):
    u, w = _willing(inst, vm, cm)
    new_v = tuple(inst.vehicle_choice[v][w[v]] for v in range(inst.n_vehicles))
    new_c = tuple(inst.channel_choice[c][u[c]] for c in range(inst.n_channels))
    return u, w, new_v, new_c


def _require(agent: AgentId, side: Side, inst: Instance) -> None:
    if agent.side is not side or agent.index >= inst.side_size(side):
        raise ValueError(f"{agent} is not a {side.name.lower()} of the instance")


def compute_U(c: AgentId, m: PreMatching, inst: Instance) -> PartnerSet:
    """Vehicles that would keep ``c`` if it were added to what they hold."""
    _require(c, Side.CHANNEL, inst)
    bit = 1 << c.index
    vch = inst.vehicle_choice
    members = [v for v, s in enumerate(m.vmasks) if vch[v][s | bit] & bit]
    return PartnerSet.of(Side.VEHICLE, members)


def compute_V(v: AgentId, m: PreMatching, inst: Instance) -> PartnerSet:
    """Channels that would keep ``v`` if it were added to what they hold."""
    _require(v, Side.VEHICLE, inst)
    bit = 1 << v.index
    cch = inst.channel_choice
    members = [c for c, s in enumerate(m.cmasks) if cch[c][s | bit] & bit]
    return PartnerSet.of(Side.CHANNEL, members)


def apply_T(m: PreMatching, inst: Instance) -> PreMatching:
    """Every agent picks its favourite subset of the partners willing to take it."""
    _check_shape(m, inst)
    _, _, nv, nc = _t_masks(inst, m.vmasks, m.cmasks)
    return PreMatching.from_masks(nv, nc)


def _check_shape(m: PreMatching, inst: Instance) -> None:
    if len(m.vehicle_sets) != inst.n_vehicles or len(m.channel_sets) != inst.n_channels:
        raise ValueError("pre-matching does not fit the instance")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    U: tuple[PartnerSet, ...]  # per channel
    V: tuple[PartnerSet, ...]  # per vehicle
    state: PreMatching  # the TM values, i.e. the updated pre-matching

    @property
    def tm_vehicles(self) -> tuple[PartnerSet, ...]:
        return self.state.vehicle_sets

    @property
    def tm_channels(self) -> tuple[PartnerSet, ...]:
        return self.state.channel_sets


class Status(enum.Enum):
    CONVERGED_CONSISTENT = "ConvergedConsistent"
    CONVERGED_INCONSISTENT = "ConvergedInconsistent"
    CYCLE_DETECTED = "CycleDetected"
    ITERATION_CAP_REACHED = "IterationCapReached"

    @property
    def converged(self) -> bool:
        return self in (Status.CONVERGED_CONSISTENT, Status.CONVERGED_INCONSISTENT)


@dataclass(frozen=True)
class AllocationOutcome:
    status: Status
    result: PreMatching
    trace: tuple[IterationRecord, ...]
    iterations: int
    cycle: tuple[PreMatching, ...] = ()

    @property
    def matching(self) -> Optional[Matching]:
        if self.status is Status.CONVERGED_CONSISTENT:
            return Matching.from_prematching(self.result)
        return None


def allocate(inst: Instance, cap: int = DEFAULT_CAP) -> AllocationOutcome:
    """Iterate T from the all-channels/no-vehicles start until two iterations agree.

    Any revisit of an older state is reported as a cycle; ``cap`` bounds the
    number of T applications.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    start = initial_state(inst)
    vm, cm = start.vmasks, start.cmasks
    seen = {(vm, cm): 0}
    states = [start]
    trace = []
    for k in range(1, cap + 1):
        u, w, nv, nc = _t_masks(inst, vm, cm)
        state = PreMatching.from_masks(nv, nc)
        trace.append(
            IterationRecord(
                iteration=k,
                U=tuple(PartnerSet(Side.VEHICLE, s) for s in u),
                V=tuple(PartnerSet(Side.CHANNEL, s) for s in w),
                state=state,
            )
        )
        key = (nv, nc)
        if key == (vm, cm):
            status = Status.CONVERGED_CONSISTENT if is_consistent(state) else Status.CONVERGED_INCONSISTENT
            return AllocationOutcome(status, state, tuple(trace), k)
        if key in seen:
            first = seen[key]
            return AllocationOutcome(Status.CYCLE_DETECTED, state, tuple(trace), k, tuple(states[first:]))
        seen[key] = k
        states.append(state)
        vm, cm = nv, nc
    return AllocationOutcome(Status.ITERATION_CAP_REACHED, states[-1], tuple(trace), cap)


def format_set(s: PartnerSet) -> str:
    return "{" + ",".join(str(a) for a in s) + "}"


def format_trace(trace: Iterable[IterationRecord]) -> str:
    """One block per iteration: vehicles ascending with V and TM, then channels with U and TM."""
    lines = []
    for rec in trace:
        lines.append(f"iteration {rec.iteration}")
        for i, (w, tm) in enumerate(zip(rec.V, rec.tm_vehicles)):
            lines.append(f"  {vehicle(i)} V={format_set(w)} TM={format_set(tm)}")
        for i, (u, tm) in enumerate(zip(rec.U, rec.tm_channels)):
            lines.append(f"  {channel(i)} U={format_set(u)} TM={format_set(tm)}")
    return "\n".join(lines) + ("\n" if lines else "")


def trace_digest(trace: Iterable[IterationRecord]) -> str:
    return hashlib.sha256(format_trace(trace).encode()).hexdigest()


def format_prematching(m: PreMatching) -> str:
    """Canonical edge list for a consistent result, per-agent maps otherwise."""
    if is_consistent(m):
        return "\n".join(f"{v} {c}" for v, c in Matching.from_prematching(m).edges())
    return "\n".join(f"{a}: {' '.join(str(p) for p in s)}".rstrip() for a, s in m.items())
