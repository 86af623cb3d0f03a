"""Instance generators and the scenario text format.

Format (line oriented, ``#`` starts a comment line)::

    nomamatch-scenario 1 vehicles 2 channels 2
    agent v1 RANKED
    c1 c2
    c1
    agent v2 UTILITY
    c1 0.75
    c2 0.5
    quota 1
    ...
    golden
    v1 c1
    digest 3f9a...

Ranked blocks list acceptable partner sets best first, one per line.  Utility
blocks list ``partner value`` lines followed by one ``quota`` line.  Tags are
written in capitals and read in any case.  The
optional golden block holds the expected final matching edges and the digest
of the allocation trace.
"""
from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .matching import Instance, PreMatching
from .prefcore import (
    AgentId,
    PartnerSet,
    Preference,
    RankedPreference,
    ResponsivePreference,
    Side,
    channel,
    is_strongly_substitutable,
    is_substitutable,
    mask_key,
    vehicle,
)

FORMAT_VERSION = 1
HEADER = "nomamatch-scenario"
MAX_SIDE = 16


class ScenarioError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Golden:
    edges: tuple[tuple[AgentId, AgentId], ...]
    digest: str


@dataclass(frozen=True)
class ScenarioFile:
    instance: Instance
    golden: Optional[Golden] = None
    comments: tuple[str, ...] = ()


# ---------------------------------------------------------------- serialization


def _format_value(x: float) -> str:
    return repr(float(x))


def dumps(scenario: Union[ScenarioFile, Instance]) -> str:
    if isinstance(scenario, Instance):
        scenario = ScenarioFile(scenario)
    inst = scenario.instance
    lines = [f"# {c}" if c else "#" for c in scenario.comments]
    lines.append(f"{HEADER} {FORMAT_VERSION} vehicles {inst.n_vehicles} channels {inst.n_channels}")
    for agent in inst.agents:
        pref = inst.prefs[agent]
        if isinstance(pref, RankedPreference):
            lines.append(f"agent {agent} RANKED")
            for s in pref.ranking:
                lines.append(" ".join(str(p) for p in s))
        elif isinstance(pref, ResponsivePreference):
            lines.append(f"agent {agent} UTILITY")
            for partner, value in pref.utility.items():
                lines.append(f"{partner} {_format_value(value)}")
            lines.append(f"quota {pref.quota}")
        else:
            raise TypeError(f"cannot serialize {type(pref).__name__}")
    if scenario.golden is not None:
        lines.append("golden")
        for v, c in scenario.golden.edges:
            lines.append(f"{v} {c}")
        lines.append(f"digest {scenario.golden.digest}")
    return "\n".join(lines) + "\n"


def _parse_agent(token: str, lineno: int, n_v: int, n_c: int, side: Optional[Side] = None) -> AgentId:
    try:
        agent = AgentId.parse(token)
    except ValueError:
        raise ScenarioError(f"bad agent id {token!r}", lineno) from None
    if side is not None and agent.side is not side:
        raise ScenarioError(f"{agent} is not a {side.name.lower()}", lineno)
    limit = n_v if agent.side is Side.VEHICLE else n_c
    if agent.index >= limit:
        raise ScenarioError(f"unknown agent {agent}", lineno)
    return agent


def loads(text: str) -> ScenarioFile:
    """Parse a scenario; every error carries the offending line number."""
    comments = []
    lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if not lines:
                comments.append(stripped[1:].strip())
            continue
        lines.append((lineno, stripped.split()))
    if not lines:
        raise ScenarioError("empty scenario file")
    lineno, head = lines[0]
    if len(head) != 6 or head[0] != HEADER or head[2] != "vehicles" or head[4] != "channels":
        raise ScenarioError(f"expected '{HEADER} <version> vehicles <n> channels <m>'", lineno)
    try:
        version, n_v, n_c = int(head[1]), int(head[3]), int(head[5])
    except ValueError:
        raise ScenarioError("version and sizes must be integers", lineno) from None
    if version != FORMAT_VERSION:
        raise ScenarioError(f"unsupported format version {version}", lineno)
    if not (0 <= n_v <= MAX_SIDE and 0 <= n_c <= MAX_SIDE):
        raise ScenarioError(f"side sizes must lie in [0, {MAX_SIDE}]", lineno)

    prefs: dict[AgentId, Preference] = {}
    golden_edges = None
    digest = None
    i = 1
    while i < len(lines):
        lineno, tok = lines[i]
        if tok[0] == "agent":
            tag = tok[2].upper() if len(tok) == 3 else None
            if tag not in ("RANKED", "UTILITY"):
                raise ScenarioError("expected 'agent <id> RANKED|UTILITY'", lineno)
            agent = _parse_agent(tok[1], lineno, n_v, n_c)
            if agent in prefs:
                raise ScenarioError(f"second block for {agent}", lineno)
            body = []
            i += 1
            while i < len(lines) and lines[i][1][0] not in ("agent", "golden"):
                body.append(lines[i])
                i += 1
            if tag == "RANKED":
                prefs[agent] = _parse_ranked(agent, body, n_v, n_c, lineno)
            else:
                prefs[agent] = _parse_utility(agent, body, n_v, n_c, lineno)
        elif tok[0] == "golden":
            if golden_edges is not None:
                raise ScenarioError("second golden block", lineno)
            golden_edges = []
            i += 1
            while i < len(lines) and lines[i][1][0] not in ("agent", "golden"):
                ln, t = lines[i]
                if t[0] == "digest":
                    if len(t) != 2:
                        raise ScenarioError("expected 'digest <hex>'", ln)
                    digest = t[1]
                elif len(t) == 2:
                    golden_edges.append(
                        (
                            _parse_agent(t[0], ln, n_v, n_c, Side.VEHICLE),
                            _parse_agent(t[1], ln, n_v, n_c, Side.CHANNEL),
                        )
                    )
                else:
                    raise ScenarioError("expected '<vehicle> <channel>' edge", ln)
                i += 1
        else:
            raise ScenarioError(f"unexpected line {' '.join(tok)!r}", lineno)

    expected = [vehicle(k) for k in range(n_v)] + [channel(k) for k in range(n_c)]
    missing = [a for a in expected if a not in prefs]
    if missing:
        raise ScenarioError(f"no preference block for {', '.join(map(str, missing))}")
    golden = None
    if golden_edges is not None:
        if digest is None:
            raise ScenarioError("golden block without digest")
        golden = Golden(tuple(sorted(golden_edges)), digest)
    try:
        inst = Instance(n_v, n_c, prefs)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    return ScenarioFile(inst, golden, tuple(comments))


def _parse_ranked(agent, body, n_v, n_c, header_line) -> RankedPreference:
    other = agent.side.other
    ranking = []
    seen = set()
    for ln, tok in body:
        members = [_parse_agent(t, ln, n_v, n_c, other) for t in tok]
        if len(set(members)) != len(members):
            raise ScenarioError("repeated member in ranked set", ln)
        s = PartnerSet.from_agents(members, other)
        if s.mask in seen:
            raise ScenarioError(f"set {s} ranked twice", ln)
        seen.add(s.mask)
        ranking.append(s)
    return RankedPreference(agent, tuple(ranking))


def _parse_utility(agent, body, n_v, n_c, header_line) -> ResponsivePreference:
    other = agent.side.other
    utility = {}
    quota = None
    for ln, tok in body:
        if tok[0] == "quota":
            if quota is not None or len(tok) != 2:
                raise ScenarioError("expected a single 'quota <n>' line", ln)
            try:
                quota = int(tok[1])
            except ValueError:
                raise ScenarioError("quota must be an integer", ln) from None
            if quota < 1:
                raise ScenarioError("quota must be at least 1", ln)
            continue
        if len(tok) != 2:
            raise ScenarioError("expected '<partner> <value>'", ln)
        partner = _parse_agent(tok[0], ln, n_v, n_c, other)
        if partner in utility:
            raise ScenarioError(f"second utility for {partner}", ln)
        try:
            value = float(tok[1])
        except ValueError:
            raise ScenarioError(f"bad utility value {tok[1]!r}", ln) from None
        if not math.isfinite(value):
            raise ScenarioError("utility must be finite", ln)
        utility[partner] = value
    if quota is None:
        raise ScenarioError(f"utility block of {agent} has no quota line", header_line)
    return ResponsivePreference(agent, utility, quota)


def load(path: Union[str, Path]) -> ScenarioFile:
    return loads(Path(path).read_text())


def save(scenario: Union[ScenarioFile, Instance], path: Union[str, Path]) -> None:
    Path(path).write_text(dumps(scenario))


def paper_example_instance() -> Instance:
    """The 5-vehicle, 3-channel worked example with a reconstructed profile.

    Only v1's ranking is given in full by the source example; the other seven
    orderings are one completion found by :mod:`nomamatch.reconstruct` and
    shipped as ``data/paper_example.scn``.
    """
    text = resources.files("nomamatch").joinpath("data/paper_example.scn").read_text()
    return loads(text).instance


# ---------------------------------------------------------------- geolocation


@dataclass(frozen=True)
class GeoScenario:
    vehicle_positions: tuple[tuple[float, float], ...]
    base_station: tuple[float, float]
    channel_gains: tuple[float, ...]
    path_loss_exponent: float = 2.0
    quota_per_channel: int = 2
    quota_per_vehicle: int = 2

    def __post_init__(self):
        object.__setattr__(self, "vehicle_positions", tuple(tuple(p) for p in self.vehicle_positions))
        object.__setattr__(self, "channel_gains", tuple(self.channel_gains))
        if any(not g > 0 for g in self.channel_gains):
            raise ValueError("channel gains must be positive")
        if not self.path_loss_exponent >= 2:
            raise ValueError("path loss exponent must be at least 2")
        if self.quota_per_channel < 1 or self.quota_per_vehicle < 1:
            raise ValueError("quotas must be at least 1")
        if len(self.vehicle_positions) > MAX_SIDE or len(self.channel_gains) > MAX_SIDE:
            raise ValueError(f"at most {MAX_SIDE} agents per side")


def geo_utility(s: GeoScenario, v: int, c: int) -> float:
    """Log-rate proxy ``log(1 + gain / distance**exponent)``."""
    d = math.dist(s.vehicle_positions[v], s.base_station)
    if d == 0:
        raise ValueError(f"vehicle v{v + 1} sits on the base station")
    return math.log1p(s.channel_gains[c] / d ** s.path_loss_exponent)


def from_geo(s: GeoScenario) -> Instance:
    n_v, n_c = len(s.vehicle_positions), len(s.channel_gains)
    u = [[geo_utility(s, v, c) for c in range(n_c)] for v in range(n_v)]
    prefs: dict[AgentId, Preference] = {}
    for v in range(n_v):
        prefs[vehicle(v)] = ResponsivePreference(
            vehicle(v), {channel(c): u[v][c] for c in range(n_c)}, s.quota_per_vehicle
        )
    for c in range(n_c):
        prefs[channel(c)] = ResponsivePreference(
            channel(c), {vehicle(v): u[v][c] for v in range(n_v)}, s.quota_per_channel
        )
    return Instance(n_v, n_c, prefs)


def random_geo(n_vehicles: int, n_channels: int, seed: int, *, area: float = 1000.0,
               exponent: float = 2.0, quota_per_channel: int = 2, quota_per_vehicle: int = 2) -> GeoScenario:
    rng = random.Random(seed)
    positions = []
    for _ in range(n_vehicles):
        while True:
            p = (round(rng.uniform(0, area), 1), round(rng.uniform(0, area), 1))
            if p != (area / 2, area / 2):
                break
        positions.append(p)
    gains = tuple(round(rng.uniform(0.5, 2.0) * area ** exponent, 1) for _ in range(n_channels))
    return GeoScenario(tuple(positions), (area / 2, area / 2), gains, exponent, quota_per_channel, quota_per_vehicle)


# ---------------------------------------------------------------- random instances


class Model(enum.Enum):
    RESPONSIVE_BOTH_SIDES = "responsive"
    RANKED_SUBSTITUTABLE = "ranked-substitutable"
    RANKED_UNRESTRICTED = "ranked-unrestricted"


class PrefKind(enum.Enum):
    RESPONSIVE = "responsive"
    RANKED = "ranked"
    RANKED_SUBSTITUTABLE = "ranked-substitutable"
    RANKED_STRONG = "ranked-strong"


_MODEL_KIND = {
    Model.RESPONSIVE_BOTH_SIDES: PrefKind.RESPONSIVE,
    Model.RANKED_SUBSTITUTABLE: PrefKind.RANKED_SUBSTITUTABLE,
    Model.RANKED_UNRESTRICTED: PrefKind.RANKED,
}

MAX_REJECTIONS = 100_000


def _random_ranking(rng: random.Random, owner: AgentId, n: int) -> RankedPreference:
    side = owner.side.other
    if n == 0:
        return RankedPreference(owner, ())
    # small sets are drawn more often so that short, plausible rankings dominate
    length = rng.randint(1, min((1 << n) - 1, n + 2))
    chosen: list[int] = []
    while len(chosen) < length:
        size = min(n, 1 + int(rng.expovariate(1.2)))
        mask = sum(1 << i for i in rng.sample(range(n), size))
        if mask not in chosen:
            chosen.append(mask)
    return RankedPreference(owner, tuple(PartnerSet(side, m) for m in chosen))


def _random_responsive(rng: random.Random, owner: AgentId, n: int) -> ResponsivePreference:
    side = owner.side.other
    utility = {AgentId(side, i): round(rng.uniform(-0.25, 1.0), 6) for i in range(n)}
    return ResponsivePreference(owner, utility, rng.randint(1, max(1, n)))


def random_preference(rng: random.Random, owner: AgentId, n_partners: int, kind: PrefKind) -> Preference:
    """Draw one preference; the restricted ranked kinds use rejection sampling."""
    if kind is PrefKind.RESPONSIVE:
        return _random_responsive(rng, owner, n_partners)
    if kind is PrefKind.RANKED:
        return _random_ranking(rng, owner, n_partners)
    universe = PartnerSet.full(owner.side.other, n_partners)
    test = is_substitutable if kind is PrefKind.RANKED_SUBSTITUTABLE else is_strongly_substitutable
    for _ in range(MAX_REJECTIONS):
        pref = _random_ranking(rng, owner, n_partners)
        if test(pref, universe):
            return pref
    raise RuntimeError(f"no {kind.value} preference found in {MAX_REJECTIONS} draws")


def random_instance(n_vehicles: int, n_channels: int, seed: int, model: Model) -> Instance:
    return mixed_instance(n_vehicles, n_channels, seed, _MODEL_KIND[model], _MODEL_KIND[model])


def mixed_instance(n_vehicles: int, n_channels: int, seed: int,
                   vehicle_kind: PrefKind, channel_kind: PrefKind) -> Instance:
    """Random instance with an independently chosen preference kind per side."""
    if not (0 <= n_vehicles <= MAX_SIDE and 0 <= n_channels <= MAX_SIDE):
        raise ValueError(f"side sizes must lie in [0, {MAX_SIDE}]")
    rng = random.Random(seed)
    prefs: dict[AgentId, Preference] = {}
    for v in range(n_vehicles):
        prefs[vehicle(v)] = random_preference(rng, vehicle(v), n_channels, vehicle_kind)
    for c in range(n_channels):
        prefs[channel(c)] = random_preference(rng, channel(c), n_vehicles, channel_kind)
    return Instance(n_vehicles, n_channels, prefs)


def ranking_key(pref: RankedPreference) -> tuple:
    """Canonical order of rankings: shorter first, then lexicographic by member lists."""
    return (len(pref.ranking), tuple(mask_key(s.mask) for s in pref.ranking))


# ---------------------------------------------------------------- matching files


def parse_matching(text: str, inst: Instance) -> PreMatching:
    """Read a matching given as ``v c`` edge lines and/or ``agent: partners`` lines.

    Edge lines add the pair to both maps; an ``agent:`` line sets that agent's
    assignment outright, so a file can describe an inconsistent pre-matching.
    Callers decide whether to accept one.
    """
    n_v, n_c = inst.n_vehicles, inst.n_channels
    vm = [0] * n_v
    cm = [0] * n_c
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" in line:
            head, _, rest = line.partition(":")
            agent = _parse_agent(head, lineno, n_v, n_c)
            partners = [_parse_agent(t, lineno, n_v, n_c, agent.side.other) for t in rest.split()]
            mask = PartnerSet.from_agents(partners, agent.side.other).mask
            if agent.side is Side.VEHICLE:
                vm[agent.index] = mask
            else:
                cm[agent.index] = mask
            continue
        tok = line.split()
        if len(tok) != 2:
            raise ScenarioError("expected '<vehicle> <channel>' or '<agent>: <partners>'", lineno)
        v = _parse_agent(tok[0], lineno, n_v, n_c, Side.VEHICLE)
        c = _parse_agent(tok[1], lineno, n_v, n_c, Side.CHANNEL)
        vm[v.index] |= 1 << c.index
        cm[c.index] |= 1 << v.index
    return PreMatching.from_masks(vm, cm)
