"""Agents, partner sets, preferences over partner sets and their choice functions.

Subsets of one side are stored as integer bitmasks (bit ``i`` is the agent
with index ``i``); :class:`PartnerSet` wraps a mask together with the side it
belongs to so that side mismatches are caught at the API boundary.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Optional, Union

MAX_UNIVERSE = 16


class Side(enum.Enum):
    VEHICLE = "v"
    CHANNEL = "c"

    @property
    def other(self) -> "Side":
        return Side.CHANNEL if self is Side.VEHICLE else Side.VEHICLE


_SIDE_ORDER = {Side.VEHICLE: 0, Side.CHANNEL: 1}


@functools.total_ordering
@dataclass(frozen=True)
class AgentId:
    side: Side
    index: int

    def __post_init__(self):
        if not 0 <= self.index < MAX_UNIVERSE:
            raise ValueError(f"agent index {self.index} outside [0, {MAX_UNIVERSE})")

    def __lt__(self, other: "AgentId") -> bool:
        if not isinstance(other, AgentId):
            return NotImplemented
        return (_SIDE_ORDER[self.side], self.index) < (_SIDE_ORDER[other.side], other.index)

    def __str__(self) -> str:
        return f"{self.side.value}{self.index + 1}"

    __repr__ = __str__

    @classmethod
    def parse(cls, text: str) -> "AgentId":
        """Parse the 1-based labels used in output, e.g. ``"v3"`` or ``"c1"``."""
        text = text.strip()
        if len(text) < 2 or text[0] not in "vc" or not text[1:].isdigit():
            raise ValueError(f"bad agent id {text!r}")
        number = int(text[1:])
        if number < 1:
            raise ValueError(f"bad agent id {text!r}")
        return cls(Side(text[0]), number - 1)


def vehicle(i: int) -> AgentId:
    return AgentId(Side.VEHICLE, i)


def channel(i: int) -> AgentId:
    return AgentId(Side.CHANNEL, i)


def mask_indices(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def mask_key(mask: int) -> tuple[int, ...]:
    """Canonical sort key of a subset: its ascending member indices."""
    return tuple(mask_indices(mask))


@dataclass(frozen=True)
class PartnerSet:
    """An exact subset of one side's agents."""

    side: Side
    mask: int = 0

    def __post_init__(self):
        if self.mask < 0 or self.mask >> MAX_UNIVERSE:
            raise ValueError("partner set exceeds the 16-agent universe")

    @classmethod
    def of(cls, side: Side, indices: Iterable[int] = ()) -> "PartnerSet":
        mask = 0
        for i in indices:
            if not 0 <= i < MAX_UNIVERSE:
                raise ValueError(f"index {i} outside [0, {MAX_UNIVERSE})")
            mask |= 1 << i
        return cls(side, mask)

    @classmethod
    def from_agents(cls, agents: Iterable[AgentId], side: Optional[Side] = None) -> "PartnerSet":
        agents = list(agents)
        if side is None:
            if not agents:
                raise ValueError("side is required for an empty partner set")
            side = agents[0].side
        for a in agents:
            if a.side is not side:
                raise ValueError(f"{a} is not a {side.name.lower()}")
        return cls.of(side, (a.index for a in agents))

    @classmethod
    def full(cls, side: Side, n: int) -> "PartnerSet":
        return cls(side, (1 << n) - 1)

    def indices(self) -> list[int]:
        return mask_indices(self.mask)

    def __iter__(self) -> Iterator[AgentId]:
        return (AgentId(self.side, i) for i in self.indices())

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __bool__(self) -> bool:
        return self.mask != 0

    def __contains__(self, agent: object) -> bool:
        return (
            isinstance(agent, AgentId)
            and agent.side is self.side
            and bool(self.mask >> agent.index & 1)
        )

    def _same_side(self, other: "PartnerSet") -> None:
        if other.side is not self.side:
            raise ValueError("partner sets belong to different sides")

    def __or__(self, other: Union["PartnerSet", AgentId]) -> "PartnerSet":
        if isinstance(other, AgentId):
            other = PartnerSet.of(other.side, [other.index])
        self._same_side(other)
        return PartnerSet(self.side, self.mask | other.mask)

    def __and__(self, other: "PartnerSet") -> "PartnerSet":
        self._same_side(other)
        return PartnerSet(self.side, self.mask & other.mask)

    def __sub__(self, other: Union["PartnerSet", AgentId]) -> "PartnerSet":
        if isinstance(other, AgentId):
            other = PartnerSet.of(other.side, [other.index])
        self._same_side(other)
        return PartnerSet(self.side, self.mask & ~other.mask)

    def issubset(self, other: "PartnerSet") -> bool:
        self._same_side(other)
        return self.mask & ~other.mask == 0

    __le__ = issubset

    def sort_key(self) -> tuple[int, ...]:
        return mask_key(self.mask)

    def __str__(self) -> str:
        if not self.mask:
            return "{}"
        return "{" + ",".join(str(a) for a in self) + "}"

    __repr__ = __str__


class Comparison(enum.Enum):
    BETTER = "better"
    WORSE = "worse"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


class Verdict(NamedTuple):
    """Outcome of a yes/no check plus an optional witness when it fails."""

    holds: bool
    witness: object = None
    note: str = ""

    def __bool__(self) -> bool:
        return self.holds


class Preference:
    """Common behaviour of both preference representations.

    Subclasses implement ``choose_mask`` and ``rank_key``.  ``rank_key`` maps a
    subset to a number where smaller is better; two unlisted (unacceptable)
    subsets of a ranked preference both map to ``inf`` and are incomparable.
    """

    owner: AgentId

    @property
    def partner_side(self) -> Side:
        return self.owner.side.other

    def choose_mask(self, offered: int) -> int:
        raise NotImplementedError

    def rank_key(self, subset: int) -> float:
        raise NotImplementedError

    def compare_masks(self, a: int, b: int) -> Comparison:
        if a == b:
            return Comparison.EQUAL
        ka, kb = self.rank_key(a), self.rank_key(b)
        if ka == math.inf and kb == math.inf:
            return Comparison.INCOMPARABLE
        if ka < kb:
            return Comparison.BETTER
        if ka > kb:
            return Comparison.WORSE
        return Comparison.EQUAL

    def choice_table(self, n: int) -> tuple[int, ...]:
        """``choose_mask`` tabulated over every subset of an ``n``-agent universe."""
        cache = self.__dict__.setdefault("_tables", {})
        if n not in cache:
            cache[n] = tuple(self.choose_mask(s) for s in range(1 << n))
        return cache[n]

    def key_table(self, n: int) -> tuple[float, ...]:
        cache = self.__dict__.setdefault("_keys", {})
        if n not in cache:
            cache[n] = tuple(self.rank_key(s) for s in range(1 << n))
        return cache[n]

    def _check_side(self, subset: PartnerSet) -> None:
        if subset.side is not self.partner_side:
            raise ValueError(
                f"preference of {self.owner} ranks {self.partner_side.name.lower()} sets, "
                f"got a {subset.side.name.lower()} set"
            )


@dataclass(frozen=True, eq=True)
class RankedPreference(Preference):
    """Explicit ranking of acceptable partner sets, best first.

    The empty set sits strictly below every listed set; unlisted nonempty sets
    are unacceptable (worse than the empty set) and mutually incomparable.
    """

    owner: AgentId
    ranking: tuple[PartnerSet, ...]
    _position: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "ranking", tuple(self.ranking))
        position = {}
        for i, s in enumerate(self.ranking):
            self._check_side(s)
            if not s.mask:
                raise ValueError("the empty set is implicit and may not be listed")
            if s.mask in position:
                raise ValueError(f"{s} listed twice in the ranking of {self.owner}")
            position[s.mask] = i
        object.__setattr__(self, "_position", position)

    def choose_mask(self, offered: int) -> int:
        for s in self.ranking:
            if s.mask & ~offered == 0:
                return s.mask
        return 0

    def rank_key(self, subset: int) -> float:
        if subset == 0:
            return len(self.ranking)
        return self._position.get(subset, math.inf)

    def is_listed(self, subset: PartnerSet) -> bool:
        return subset.mask in self._position


@dataclass(frozen=True, eq=False)
class ResponsivePreference(Preference):
    """Additive utilities with a quota.

    A set is worth the total utility of its top-``quota`` positive-utility
    members; choice keeps those members, ties broken by ascending index.
    """

    owner: AgentId
    utility: Mapping[AgentId, float]
    quota: int
    _order: tuple = field(init=False, repr=False)
    _util: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.quota < 1:
            raise ValueError("quota must be at least 1")
        util = {}
        for agent, value in self.utility.items():
            if agent.side is not self.partner_side:
                raise ValueError(f"utility keyed by {agent} in preference of {self.owner}")
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"non-finite utility for {agent}")
            util[agent.index] = value
        object.__setattr__(self, "utility", dict(sorted(self.utility.items())))
        object.__setattr__(self, "_util", util)
        order = sorted((i for i, u in util.items() if u > 0), key=lambda i: (-util[i], i))
        object.__setattr__(self, "_order", tuple(order))

    def __eq__(self, other):
        if not isinstance(other, ResponsivePreference):
            return NotImplemented
        return (self.owner, self._util, self.quota) == (other.owner, other._util, other.quota)

    def __hash__(self):
        return hash((self.owner, tuple(sorted(self._util.items())), self.quota))

    def choose_mask(self, offered: int) -> int:
        chosen = 0
        taken = 0
        for i in self._order:
            if offered >> i & 1:
                chosen |= 1 << i
                taken += 1
                if taken == self.quota:
                    break
        return chosen

    def value(self, subset: int) -> float:
        return sum(self._util[i] for i in mask_indices(self.choose_mask(subset)))

    def rank_key(self, subset: int) -> float:
        return -self.value(subset)


def choose(pref: Preference, offered: PartnerSet) -> PartnerSet:
    """The most preferred subset of ``offered``."""
    pref._check_side(offered)
    return PartnerSet(offered.side, pref.choose_mask(offered.mask))


def prefers(pref: Preference, a: PartnerSet, b: PartnerSet) -> Comparison:
    """How ``pref`` ranks ``a`` relative to ``b``."""
    pref._check_side(a)
    pref._check_side(b)
    return pref.compare_masks(a.mask, b.mask)


def _universe_bits(universe: PartnerSet) -> list[int]:
    return [1 << i for i in universe.indices()]


def _subsets(mask: int) -> Iterator[int]:
    """All submasks of ``mask`` in ascending numeric order."""
    bits = _subsets_desc(mask)
    return reversed(bits)


def _subsets_desc(mask: int) -> list[int]:
    out = []
    s = mask
    while True:
        out.append(s)
        if s == 0:
            break
        s = (s - 1) & mask
    return out


def is_substitutable(pref: Preference, universe: PartnerSet) -> Verdict:
    """Exhaustive substitutability check.

    A partner chosen from a set must still be chosen from every subset that
    contains it.  By induction on set size it suffices to test removal of a
    single other member; the witness is ``(S, S_prime, x)`` with ``S`` a subset
    of ``S_prime`` such that ``x`` is chosen from ``S_prime + x`` but not from
    ``S + x``.
    """
    pref._check_side(universe)
    side = universe.side
    bits = _universe_bits(universe)
    for t in _subsets(universe.mask):
        chosen = pref.choose_mask(t)
        for xb in bits:
            if not chosen & xb:
                continue
            for yb in bits:
                if yb == xb or not t & yb:
                    continue
                smaller = t & ~yb
                if not pref.choose_mask(smaller) & xb:
                    x = AgentId(side, xb.bit_length() - 1)
                    return Verdict(False, (PartnerSet(side, smaller), PartnerSet(side, t), x))
    return Verdict(True)


def is_strongly_substitutable(pref: Preference, universe: PartnerSet) -> Verdict:
    """Exhaustive strong-substitutability check over comparable pairs.

    Fails when some ``x`` is chosen from ``A + x`` but not from ``B + x`` for a
    pair with ``A`` strictly better than ``B``; witness ``(A, B, x)``.  Pairs the
    preference cannot compare are skipped and counted in ``note``.
    """
    pref._check_side(universe)
    side = universe.side
    subsets = list(_subsets(universe.mask))
    keys = {s: pref.rank_key(s) for s in subsets}
    skipped = 0
    for xb in _universe_bits(universe):
        accepting = [s for s in subsets if pref.choose_mask(s | xb) & xb]
        rejecting = [s for s in subsets if not pref.choose_mask(s | xb) & xb]
        for a in accepting:
            ka = keys[a]
            for b in rejecting:
                kb = keys[b]
                if ka == math.inf and kb == math.inf:
                    skipped += 1
                    continue
                if ka < kb:
                    x = AgentId(side, xb.bit_length() - 1)
                    return Verdict(
                        False,
                        (PartnerSet(side, a), PartnerSet(side, b), x),
                        _strong_note(skipped),
                    )
    return Verdict(True, None, _strong_note(skipped))


def _strong_note(skipped: int) -> str:
    return f"comparable pairs only; {skipped} incomparable (accepting, rejecting) pairs skipped"
