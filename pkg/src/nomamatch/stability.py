"""Stability checks for many-to-many matchings and exhaustive classification.

All searches are exhaustive and deterministic.  Blocking coalitions are
visited smallest first, then in lexicographic order of their sorted members,
so the block a search returns is reproducible.
"""
from __future__ import annotations

import enum
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional

from .matching import Instance, Matching, PreMatching, _t_masks, is_consistent
from .prefcore import AgentId, PartnerSet, Side, Verdict, channel, mask_indices, vehicle

MAX_COALITION_AGENTS = 12
MAX_ENUMERATION_EDGES = 20

ALL_FLAGS = ("ir", "pairwise", "setwise", "core", "fixed_point")


class InstanceTooLarge(ValueError):
    pass


class NotIndividuallyRational(ValueError):
    pass


class BlockKind(enum.Enum):
    INDIVIDUAL_DEVIATION = "IndividualDeviation"
    PAIRWISE_BLOCK = "PairwiseBlock"
    SETWISE_BLOCK = "SetwiseBlock"
    CORE_BLOCK = "CoreBlock"


@dataclass(frozen=True)
class BlockReport:
    """A blocking coalition and the matching that results once it deviates.

    ``proposed`` is the whole matching after the deviation: coalition members
    hold their new sets and outsiders keep whatever the coalition did not
    cancel.
    """

    kind: BlockKind
    vehicles: PartnerSet
    channels: PartnerSet
    proposed: Matching

    def describe(self, original: Optional[Matching] = None) -> str:
        members = [str(a) for a in self.vehicles] + [str(a) for a in self.channels]
        lines = [f"{self.kind.value}: coalition {{{','.join(members)}}}"]
        for agent in list(self.vehicles) + list(self.channels):
            new = self.proposed[agent]
            if original is not None:
                lines.append(f"  {agent}: {original[agent]} -> {new}")
            else:
                lines.append(f"  {agent}: {new}")
        return "\n".join(lines)


@dataclass(frozen=True)
class StabilityClassification:
    is_ir: Optional[bool]
    is_pairwise_stable: Optional[bool]
    is_setwise_stable: Optional[bool]
    is_in_ir_core: Optional[bool]
    is_t_fixed_point: Optional[bool]


def _masks(m: PreMatching, inst: Instance) -> tuple[list[int], list[int]]:
    if len(m.vehicle_sets) != inst.n_vehicles or len(m.channel_sets) != inst.n_channels:
        raise ValueError("matching does not fit the instance")
    if not is_consistent(m):
        raise ValueError("matching is not consistent")
    return list(m.vmasks), list(m.cmasks)


def _edges_to_matching(inst: Instance, vm: list[int]) -> Matching:
    cm = [0] * inst.n_channels
    for v, s in enumerate(vm):
        for c in mask_indices(s):
            cm[c] |= 1 << v
    return Matching.from_masks(vm, cm)


def _ir_witness(inst: Instance, vm, cm) -> Optional[AgentId]:
    vch, cch = inst.vehicle_choice, inst.channel_choice
    for v, s in enumerate(vm):
        if vch[v][s] != s:
            return vehicle(v)
    for c, s in enumerate(cm):
        if cch[c][s] != s:
            return channel(c)
    return None


def is_individually_rational(m: Matching, inst: Instance) -> Verdict:
    """No agent wants to drop part of its own assignment."""
    vm, cm = _masks(m, inst)
    agent = _ir_witness(inst, vm, cm)
    if agent is None:
        return Verdict(True)
    new_vm = list(vm)
    if agent.side is Side.VEHICLE:
        new_vm[agent.index] = inst.vehicle_choice[agent.index][vm[agent.index]]
        coalition = (PartnerSet.of(Side.VEHICLE, [agent.index]), PartnerSet(Side.CHANNEL))
    else:
        keep = inst.channel_choice[agent.index][cm[agent.index]]
        bit = 1 << agent.index
        for v in range(inst.n_vehicles):
            if vm[v] & bit and not keep >> v & 1:
                new_vm[v] &= ~bit
        coalition = (PartnerSet(Side.VEHICLE), PartnerSet.of(Side.CHANNEL, [agent.index]))
    report = BlockReport(BlockKind.INDIVIDUAL_DEVIATION, *coalition, _edges_to_matching(inst, new_vm))
    return Verdict(False, report)


def _pairwise_scan(inst: Instance, vm, cm) -> Optional[tuple[int, int]]:
    vch, cch = inst.vehicle_choice, inst.channel_choice
    for v in range(inst.n_vehicles):
        vb = 1 << v
        for c in range(inst.n_channels):
            cb = 1 << c
            if vm[v] & cb:
                continue
            if vch[v][vm[v] | cb] & cb and cch[c][cm[c] | vb] & vb:
                return v, c
    return None


def find_pairwise_block(m: Matching, inst: Instance) -> Optional[BlockReport]:
    """An unmatched pair that would both add each other, possibly dropping others.

    Raises :class:`NotIndividuallyRational` if ``m`` is not IR, since pairwise
    stability presupposes it.
    """
    vm, cm = _masks(m, inst)
    if _ir_witness(inst, vm, cm) is not None:
        raise NotIndividuallyRational("pairwise stability is only defined for IR matchings")
    pair = _pairwise_scan(inst, vm, cm)
    if pair is None:
        return None
    v, c = pair
    vb, cb = 1 << v, 1 << c
    new_v = inst.vehicle_choice[v][vm[v] | cb]
    new_c = inst.channel_choice[c][cm[c] | vb]
    new_vm = list(vm)
    new_vm[v] = new_v
    for w in range(inst.n_vehicles):
        if w != v and new_vm[w] & cb and not new_c >> w & 1:
            new_vm[w] &= ~cb
    return BlockReport(
        BlockKind.PAIRWISE_BLOCK,
        PartnerSet.of(Side.VEHICLE, [v]),
        PartnerSet.of(Side.CHANNEL, [c]),
        _edges_to_matching(inst, new_vm),
    )


def _guard(inst: Instance) -> None:
    if inst.n_vehicles + inst.n_channels > MAX_COALITION_AGENTS:
        raise InstanceTooLarge(
            f"coalition search limited to {MAX_COALITION_AGENTS} agents, "
            f"instance has {inst.n_vehicles + inst.n_channels}"
        )


def _coalitions(inst: Instance, max_size: int):
    agents = [(0, i) for i in range(inst.n_vehicles)] + [(1, j) for j in range(inst.n_channels)]
    for size in range(1, min(max_size, len(agents)) + 1):
        for combo in itertools.combinations(agents, size):
            vs = [i for side, i in combo if side == 0]
            cs = [j for side, j in combo if side == 1]
            yield vs, cs


def _member_options(choice, keys, current: int, inside: int, kept_pool: int, need_ir: bool) -> dict[int, int]:
    """Map each feasible internal part E to the first outsider part K that works.

    The member's new set is ``E | K`` with ``E`` inside the coalition and ``K``
    among its current outsider partners; it must be strictly better than
    ``current`` and, when ``need_ir``, self-chosen.
    """
    target = keys[current]
    options: dict[int, int] = {}
    outsider_parts = _submasks_asc(kept_pool)
    for e in _submasks_asc(inside):
        for k in outsider_parts:
            x = e | k
            if keys[x] < target and (not need_ir or choice[x] == x):
                options[e] = k
                break
    return options


def _submasks_asc(mask: int) -> list[int]:
    out = []
    s = mask
    while True:
        out.append(s)
        if s == 0:
            break
        s = (s - 1) & mask
    out.reverse()
    return out


def _search_block(inst: Instance, vm, cm, max_size: int, setwise: bool):
    """Shared coalition search; ``setwise`` selects the blocking notion.

    Setwise: members may keep current outsider partners and must end up
    self-chosen. Core: all outsider partners are dropped and only strict
    improvement is required.
    """
    vch, cch = inst.vehicle_choice, inst.channel_choice
    vkeys, ckeys = inst.vehicle_keys, inst.channel_keys
    for vs, cs in _coalitions(inst, max_size):
        vin = sum(1 << i for i in vs)
        cin = sum(1 << j for j in cs)
        rows = []
        for v in vs:
            pool = vm[v] & ~cin if setwise else 0
            opts = _member_options(vch[v], vkeys[v], vm[v], cin, pool, setwise)
            if not opts:
                break
            rows.append(opts)
        else:
            cols = []
            for c in cs:
                pool = cm[c] & ~vin if setwise else 0
                opts = _member_options(cch[c], ckeys[c], cm[c], vin, pool, setwise)
                if not opts:
                    break
                cols.append(opts)
            else:
                found = _match_rows_cols(vs, cs, rows, cols)
                if found is not None:
                    choice_rows, choice_cols = found
                    new_vm = list(vm)
                    for v, (e, k) in zip(vs, choice_rows):
                        new_vm[v] = e | k
                    for c, (e, k) in zip(cs, choice_cols):
                        cb = 1 << c
                        for w in range(inst.n_vehicles):
                            if w in vs:
                                continue
                            if new_vm[w] & cb and not k >> w & 1:
                                new_vm[w] &= ~cb
                    return vs, cs, new_vm
    return None


def _match_rows_cols(vs, cs, rows, cols):
    """Find internal rows whose induced columns are all feasible."""
    row_choices = [list(r.items()) for r in rows]
    for picks in itertools.product(*row_choices):
        ok = True
        col_picks = []
        for ci, c in enumerate(cs):
            col = 0
            for vi, v in enumerate(vs):
                if picks[vi][0] >> c & 1:
                    col |= 1 << v
            k = cols[ci].get(col)
            if k is None:
                ok = False
                break
            col_picks.append((col, k))
        if ok:
            return list(picks), col_picks
    return None


def _report(kind: BlockKind, inst: Instance, found) -> BlockReport:
    vs, cs, new_vm = found
    return BlockReport(
        kind,
        PartnerSet.of(Side.VEHICLE, vs),
        PartnerSet.of(Side.CHANNEL, cs),
        _edges_to_matching(inst, new_vm),
    )


def find_setwise_block(m: Matching, inst: Instance, max_coalition: Optional[int] = None) -> Optional[BlockReport]:
    """A coalition that rematches among itself, possibly cancelling other allocations.

    New pairs must lie inside the coalition, outsiders only lose partners the
    coalition cancels, every member strictly prefers its new set and keeps
    all of it when choosing from it.
    """
    _guard(inst)
    vm, cm = _masks(m, inst)
    size = inst.n_vehicles + inst.n_channels if max_coalition is None else max_coalition
    found = _search_block(inst, vm, cm, size, setwise=True)
    return None if found is None else _report(BlockKind.SETWISE_BLOCK, inst, found)


def is_in_IR_core(m: Matching, inst: Instance) -> Verdict:
    """IR and no coalition can do strictly better by rematching only internally.

    Coalition members drop every partner outside the coalition; the blocking
    allocation carries no IR requirement beyond strict improvement.
    """
    _guard(inst)
    ir = is_individually_rational(m, inst)
    if not ir:
        return ir
    vm, cm = _masks(m, inst)
    found = _search_block(inst, vm, cm, inst.n_vehicles + inst.n_channels, setwise=False)
    if found is None:
        return Verdict(True)
    return Verdict(False, _report(BlockKind.CORE_BLOCK, inst, found))


def is_setwise_stable(m: Matching, inst: Instance) -> bool:
    vm, cm = _masks(m, inst)
    if _ir_witness(inst, vm, cm) is not None or _pairwise_scan(inst, vm, cm) is not None:
        return False
    return find_setwise_block(m, inst) is None


def _matching_masks(edges: int, n: int, k: int) -> tuple[list[int], list[int]]:
    row = (1 << k) - 1
    vm = [(edges >> (v * k)) & row for v in range(n)]
    cm = [0] * k
    for v, s in enumerate(vm):
        while s:
            low = s & -s
            cm[low.bit_length() - 1] |= 1 << v
            s ^= low
    return vm, cm


def _classify_masks(inst: Instance, vm, cm, flags) -> StabilityClassification:
    ir = pairwise = setwise = core = fixed = None
    needs_ir = flags & {"ir", "pairwise", "setwise", "core"}
    if needs_ir:
        ir = _ir_witness(inst, vm, cm) is None
    if flags & {"pairwise", "setwise"}:
        pairwise = ir and _pairwise_scan(inst, vm, cm) is None
    if "setwise" in flags:
        setwise = pairwise and _search_block(inst, vm, cm, inst.n_vehicles + inst.n_channels, True) is None
    if "core" in flags:
        core = ir and _search_block(inst, vm, cm, inst.n_vehicles + inst.n_channels, False) is None
    if "fixed_point" in flags:
        _, _, nv, nc = _t_masks(inst, tuple(vm), tuple(cm))
        fixed = nv == tuple(vm) and nc == tuple(cm)
    return StabilityClassification(
        is_ir=ir if "ir" in flags else None,
        is_pairwise_stable=pairwise if "pairwise" in flags else None,
        is_setwise_stable=setwise,
        is_in_ir_core=core,
        is_t_fixed_point=fixed,
    )


def _classify_range(inst: Instance, start: int, stop: int, flags: frozenset):
    out = []
    for edges in range(start, stop):
        vm, cm = _matching_masks(edges, inst.n_vehicles, inst.n_channels)
        out.append((edges, _classify_masks(inst, vm, cm, flags)))
    return out


def enumerate_classification(
    inst: Instance,
    flags: Optional[Iterable[str]] = None,
    workers: int = 1,
) -> dict[Matching, StabilityClassification]:
    """Classify every consistent matching of ``inst``.

    Matchings are keyed in ascending order of their edge bitmask (bit
    ``v * n_channels + c``).  ``flags`` restricts which of ``ir``,
    ``pairwise``, ``setwise``, ``core`` and ``fixed_point`` are computed;
    skipped flags are ``None``.  ``workers > 1`` splits the edge range across
    processes; the merged result is identical to the sequential one.
    """
    n_edges = inst.n_vehicles * inst.n_channels
    if n_edges > MAX_ENUMERATION_EDGES:
        raise InstanceTooLarge(f"enumeration limited to {MAX_ENUMERATION_EDGES} possible edges, instance has {n_edges}")
    flags = frozenset(ALL_FLAGS if flags is None else flags)
    unknown = flags - set(ALL_FLAGS)
    if unknown:
        raise ValueError(f"unknown flags {sorted(unknown)}")
    if flags & {"setwise", "core"}:
        _guard(inst)
    total = 1 << n_edges
    if workers <= 1 or total < 1024:
        parts = [_classify_range(inst, 0, total, flags)]
    else:
        step = -(-total // workers)
        bounds = [(lo, min(lo + step, total)) for lo in range(0, total, step)]
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_classify_range, inst, lo, hi, flags) for lo, hi in bounds]
            parts = [f.result() for f in futures]
    result = {}
    for part in parts:
        for edges, cls in part:
            vm, cm = _matching_masks(edges, inst.n_vehicles, inst.n_channels)
            result[Matching.from_masks(vm, cm)] = cls
    return result
