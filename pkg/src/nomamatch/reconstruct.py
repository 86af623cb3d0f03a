"""Recover a full preference profile for the 5x3 worked example.

The worked example gives v1's ranking and the per-iteration U, V and TM
values, but not the other seven rankings.  Every example value is a fact
about one agent's choice function, so the trace turns into per-agent
constraints and each agent's ranking can be searched for independently.

One given datum contradicts the rest: v3's V set in iteration 2 omits
c2, yet iteration 3 includes it although every channel holds the same set
in both iterations.  V depends on the channel-side assignments only, so no
profile produces both.  :func:`derive_constraints` reports such clashes and
keeps the later iteration's value.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .matching import AllocationOutcome, Instance
from .prefcore import (
    AgentId,
    PartnerSet,
    RankedPreference,
    Side,
    is_substitutable,
    mask_key,
)

VEHICLES = ("v1", "v2", "v3", "v4", "v5")
CHANNELS = ("c1", "c2", "c3")
ALL_V = "v1 v2 v3 v4 v5"
ALL_C = "c1 c2 c3"

# v1's ranking as given in the worked example, best first.
V1_RANKING = ("c1 c2 c3", "c1 c2", "c1 c3", "c2 c3", "c1", "c2", "c3")

# Per iteration: U per channel, V per vehicle, TM per agent ("" is the empty set).
WORKED_EXAMPLE_TRACE = (
    {
        "U": {"c1": ALL_V, "c2": ALL_V, "c3": ALL_V},
        "V": {v: ALL_C for v in VEHICLES},
        "TM": {**{v: ALL_C for v in VEHICLES}, "c1": "v1 v2", "c2": "v2 v3", "c3": "v3 v4"},
    },
    {
        "U": {"c1": ALL_V, "c2": ALL_V, "c3": ALL_V},
        "V": {"v1": "c1", "v2": "c1 c2", "v3": "c3", "v4": "c3", "v5": ""},
        "TM": {"v1": "c1", "v2": "c1 c2", "v3": "c3", "v4": "c3", "v5": "",
               "c1": "v1 v2", "c2": "v2 v3", "c3": "v3 v4"},
    },
    {
        "U": {"c1": ALL_V, "c2": ALL_V, "c3": ALL_V},
        "V": {"v1": "c1", "v2": "c1 c2", "v3": "c2 c3", "v4": "c3", "v5": ""},
        "TM": {"v1": "c1", "v2": "c1 c2", "v3": "c2 c3", "v4": "c3", "v5": "",
               "c1": "v1 v2", "c2": "v2 v3", "c3": "v3 v4"},
    },
)
# The fourth iteration repeats the third.
WORKED_EXAMPLE_ITERATIONS = 4


def parse_set(text: str, side: Side) -> PartnerSet:
    agents = [AgentId.parse(t) for t in text.split()]
    return PartnerSet.from_agents(agents, side)


def worked_example_records() -> list[dict]:
    """The example iterations as partner sets, including the repeated fourth."""
    out = []
    for it in WORKED_EXAMPLE_TRACE + (WORKED_EXAMPLE_TRACE[-1],):
        out.append(
            {
                "U": {AgentId.parse(c): parse_set(s, Side.VEHICLE) for c, s in it["U"].items()},
                "V": {AgentId.parse(v): parse_set(s, Side.CHANNEL) for v, s in it["V"].items()},
                "TM": {
                    AgentId.parse(a): parse_set(s, Side.CHANNEL if a[0] == "v" else Side.VEHICLE)
                    for a, s in it["TM"].items()
                },
            }
        )
    return out


@dataclass(frozen=True)
class Constraint:
    """A fact about one agent's choice from ``offered``.

    ``kind`` is ``"eq"`` (choice equals ``target``), ``"in"`` or ``"out"``
    (partner index ``target`` is or is not chosen).
    """

    agent: AgentId
    offered: int
    kind: str
    target: int
    iteration: int
    source: str

    def holds(self, chosen: int) -> bool:
        if self.kind == "eq":
            return chosen == self.target
        inside = bool(chosen >> self.target & 1)
        return inside if self.kind == "in" else not inside

    def describe(self) -> str:
        side = self.agent.side.other
        offered = PartnerSet(side, self.offered)
        if self.kind == "eq":
            return f"ch_{self.agent}({offered}) = {PartnerSet(side, self.target)}  [{self.source}]"
        sym = "in" if self.kind == "in" else "not in"
        return f"{AgentId(side, self.target)} {sym} ch_{self.agent}({offered})  [{self.source}]"


@dataclass
class ConstraintSet:
    constraints: list[Constraint]
    dropped: list[tuple[Constraint, Constraint]] = field(default_factory=list)


def derive_constraints(records: Optional[list[dict]] = None) -> ConstraintSet:
    """Translate the example iterations into choice-function facts.

    Membership facts that clash with a later iteration are dropped; each
    dropped fact is returned with the later fact that overrode it.
    """
    records = worked_example_records() if records is None else records
    n_v, n_c = len(VEHICLES), len(CHANNELS)
    vm = [(1 << n_c) - 1] * n_v
    cm = [0] * n_c
    facts: list[Constraint] = []
    for k, rec in enumerate(records, 1):
        for c in range(n_c):
            cid = AgentId(Side.CHANNEL, c)
            u = rec["U"][cid].mask
            for v in range(n_v):
                kind = "in" if u >> v & 1 else "out"
                facts.append(Constraint(AgentId(Side.VEHICLE, v), vm[v] | 1 << c, kind, c, k, f"iteration {k}, U({cid})"))
        for v in range(n_v):
            vid = AgentId(Side.VEHICLE, v)
            w = rec["V"][vid].mask
            for c in range(n_c):
                kind = "in" if w >> c & 1 else "out"
                facts.append(Constraint(AgentId(Side.CHANNEL, c), cm[c] | 1 << v, kind, v, k, f"iteration {k}, V({vid})"))
        for v in range(n_v):
            vid = AgentId(Side.VEHICLE, v)
            facts.append(Constraint(vid, rec["V"][vid].mask, "eq", rec["TM"][vid].mask, k, f"iteration {k}, TM({vid})"))
        for c in range(n_c):
            cid = AgentId(Side.CHANNEL, c)
            facts.append(Constraint(cid, rec["U"][cid].mask, "eq", rec["TM"][cid].mask, k, f"iteration {k}, TM({cid})"))
        vm = [rec["TM"][AgentId(Side.VEHICLE, v)].mask for v in range(n_v)]
        cm = [rec["TM"][AgentId(Side.CHANNEL, c)].mask for c in range(n_c)]

    latest: dict[tuple, Constraint] = {}
    for f in facts:
        if f.kind != "eq":
            latest[(f.agent, f.offered, f.target)] = f
    kept, dropped = [], []
    for f in facts:
        if f.kind != "eq":
            last = latest[(f.agent, f.offered, f.target)]
            if last.kind != f.kind:
                dropped.append((f, last))
                continue
        kept.append(f)
    unique = list(dict.fromkeys(kept))
    return ConstraintSet(unique, dropped)


def _forced_sets(constraints: list[Constraint]) -> set[int]:
    """Sets any satisfying ranking must list."""
    forced = set()
    for f in constraints:
        if f.kind == "eq" and f.target:
            forced.add(f.target)
        elif f.kind == "in" and f.offered == 1 << f.target:
            forced.add(f.offered)
    return forced


def search_rankings(
    agent: AgentId,
    n_partners: int,
    constraints: list[Constraint],
    *,
    require_substitutable: bool = True,
    max_length: Optional[int] = None,
) -> list[RankedPreference]:
    """All shortest rankings satisfying ``constraints``, in canonical order.

    Depth-first over candidate sets in canonical order with two prunings: a
    placed set immediately decides every constraint whose offered set
    contains it, and the slots left must cover the sets that are forced but
    not yet placed.
    """
    side = agent.side.other
    universe = PartnerSet.full(side, n_partners)
    candidates = sorted(range(1, 1 << n_partners), key=mask_key)
    forced = _forced_sets(constraints)
    limit = (1 << n_partners) - 1 if max_length is None else max_length
    for length in range(len(forced), limit + 1):
        found: list[RankedPreference] = []
        prefix: list[int] = []
        decided = [False] * len(constraints)

        def leaf() -> None:
            for i, f in enumerate(constraints):
                if not decided[i] and not f.holds(0):
                    return
            pref = RankedPreference(agent, tuple(PartnerSet(side, s) for s in prefix))
            if not require_substitutable or is_substitutable(pref, universe):
                found.append(pref)

        def extend() -> None:
            if len(prefix) == length:
                leaf()
                return
            missing = forced.difference(prefix)
            slots = length - len(prefix)
            if len(missing) > slots:
                return
            pool = sorted(missing, key=mask_key) if len(missing) == slots else candidates
            for s in pool:
                if s in prefix:
                    continue
                newly = []
                ok = True
                for i, f in enumerate(constraints):
                    if decided[i] or s & ~f.offered:
                        continue
                    if not f.holds(s):
                        ok = False
                        break
                    newly.append(i)
                if not ok:
                    continue
                for i in newly:
                    decided[i] = True
                prefix.append(s)
                extend()
                prefix.pop()
                for i in newly:
                    decided[i] = False

        extend()
        if found:
            return found
    return []


@dataclass
class Reconstruction:
    instance: Instance
    completions: dict[AgentId, int]
    dropped: list[tuple[Constraint, Constraint]]

    @property
    def total_completions(self) -> int:
        out = 1
        for n in self.completions.values():
            out *= n
        return out


def reconstruct() -> Reconstruction:
    """Canonically smallest substitutable completion of the worked example.

    v1 keeps its given ranking; every other agent gets the first of its
    shortest substitutable rankings consistent with the trace.  The count of
    such shortest completions per agent is reported alongside.
    """
    cs = derive_constraints()
    n_v, n_c = len(VEHICLES), len(CHANNELS)
    prefs = {}
    counts = {}
    v1 = AgentId.parse("v1")
    for agent in [AgentId(Side.VEHICLE, i) for i in range(n_v)] + [AgentId(Side.CHANNEL, j) for j in range(n_c)]:
        mine = [f for f in cs.constraints if f.agent == agent]
        if agent == v1:
            pref = RankedPreference(v1, tuple(parse_set(s, Side.CHANNEL) for s in V1_RANKING))
            broken = [f for f in mine if not f.holds(pref.choose_mask(f.offered))]
            if broken:
                raise RuntimeError("v1's ranking violates " + "; ".join(f.describe() for f in broken))
            prefs[agent] = pref
            counts[agent] = 1
            continue
        n_partners = n_c if agent.side is Side.VEHICLE else n_v
        found = search_rankings(agent, n_partners, mine)
        if not found:
            raise RuntimeError(f"no ranking for {agent} satisfies the trace")
        prefs[agent] = found[0]
        counts[agent] = len(found)
    return Reconstruction(Instance(n_v, n_c, prefs), counts, cs.dropped)


def compare_with_worked_example(outcome: AllocationOutcome) -> list[str]:
    """Every example value the allocation trace does not reproduce."""
    problems = []
    records = worked_example_records()
    for k, rec in enumerate(records, 1):
        if k > len(outcome.trace):
            problems.append(f"iteration {k}: in the example, but the run stopped after {len(outcome.trace)}")
            continue
        got = outcome.trace[k - 1]
        for cid, s in rec["U"].items():
            if got.U[cid.index] != s:
                problems.append(f"iteration {k}: U({cid}) expected {s}, got {got.U[cid.index]}")
        for vid, s in rec["V"].items():
            if got.V[vid.index] != s:
                problems.append(f"iteration {k}: V({vid}) expected {s}, got {got.V[vid.index]}")
        for a, s in rec["TM"].items():
            if got.state[a] != s:
                problems.append(f"iteration {k}: TM({a}) expected {s}, got {got.state[a]}")
    if outcome.iterations != WORKED_EXAMPLE_ITERATIONS:
        problems.append(f"iterations: expected {WORKED_EXAMPLE_ITERATIONS}, got {outcome.iterations}")
    return problems


def reconstructed_scenario():
    """The shipped scenario file: reconstructed profile plus golden block."""
    from .matching import Matching, allocate, trace_digest
    from .scenarios import Golden, ScenarioFile

    rec = reconstruct()
    outcome = allocate(rec.instance)
    edges = tuple(Matching.from_prematching(outcome.result).edges())
    per_agent = ", ".join(f"{a}: {n}" for a, n in rec.completions.items())
    comments = (
        "Worked example: 5 vehicles, 3 channels.",
        "v1's ranking is the given one. The other seven rankings are the",
        "canonically smallest substitutable completion consistent with the",
        "example trace; it is one consistent completion, not the original profile.",
        f"Shortest substitutable completions per agent: {per_agent}.",
        "Dropped example datum: " + "; ".join(d.describe() for d, _ in rec.dropped) + ".",
    )
    return ScenarioFile(rec.instance, Golden(edges, trace_digest(outcome.trace)), comments)
