"""Two-stage offer/selection game between channels and vehicles.

Stage 1: every channel offers itself to a subset of vehicles, all at once.
Stage 2: each vehicle picks from the channels that offered to it.  A pair is
matched when the channel offered and the vehicle picked it.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

from .matching import Instance, Matching
from .prefcore import AgentId, PartnerSet, Side
from .stability import InstanceTooLarge

MAX_GAME_VEHICLES = 4
MAX_GAME_CHANNELS = 3


@dataclass(frozen=True)
class ChannelStrategyProfile:
    offers: tuple[PartnerSet, ...]  # per channel, a set of vehicles

    def __post_init__(self):
        object.__setattr__(self, "offers", tuple(self.offers))
        for s in self.offers:
            if s.side is not Side.VEHICLE:
                raise ValueError("channels offer to sets of vehicles")

    @classmethod
    def from_masks(cls, masks) -> "ChannelStrategyProfile":
        return cls(tuple(PartnerSet(Side.VEHICLE, m) for m in masks))


@dataclass(frozen=True)
class GameOutcome:
    matching: Matching
    profile: ChannelStrategyProfile


def stage2_response(v: AgentId, offers: PartnerSet, inst: Instance) -> PartnerSet:
    """A vehicle's optimal selection is its choice among the channels that offered."""
    if v.side is not Side.VEHICLE or v.index >= inst.n_vehicles:
        raise ValueError(f"{v} is not a vehicle of the instance")
    if offers.side is not Side.CHANNEL:
        raise ValueError("offers must be a set of channels")
    return PartnerSet(Side.CHANNEL, inst.vehicle_choice[v.index][offers.mask])


def _play_masks(inst: Instance, offer_masks) -> list[int]:
    """Vehicle-side assignment masks for a profile of offer masks."""
    vch = inst.vehicle_choice
    out = []
    for v in range(inst.n_vehicles):
        offered = 0
        for c, o in enumerate(offer_masks):
            if o >> v & 1:
                offered |= 1 << c
        out.append(vch[v][offered])
    return out


def _channel_sets(vm: list[int], n_channels: int) -> list[int]:
    cm = [0] * n_channels
    for v, s in enumerate(vm):
        for c in range(n_channels):
            if s >> c & 1:
                cm[c] |= 1 << v
    return cm


def play(profile: ChannelStrategyProfile, inst: Instance) -> GameOutcome:
    if len(profile.offers) != inst.n_channels:
        raise ValueError("profile needs exactly one offer set per channel")
    for s in profile.offers:
        if s.mask >> inst.n_vehicles:
            raise ValueError(f"offer {s} names unknown vehicles")
    vm = _play_masks(inst, [s.mask for s in profile.offers])
    return GameOutcome(Matching.from_masks(vm, _channel_sets(vm, inst.n_channels)), profile)


def enumerate_spne_outcomes(inst: Instance) -> frozenset[Matching]:
    """Matchings reached by subgame-perfect equilibria in pure strategies.

    Vehicles answer every offer set with their choice, so only the channels'
    stage-1 game remains.  A profile survives when no channel can reach a
    matched set it strictly prefers by changing its own offer; deviations to
    a set the channel cannot rank against its current one do not count.
    """
    if inst.n_vehicles > MAX_GAME_VEHICLES or inst.n_channels > MAX_GAME_CHANNELS:
        raise InstanceTooLarge(
            f"game enumeration limited to {MAX_GAME_VEHICLES} vehicles and {MAX_GAME_CHANNELS} channels"
        )
    n, k = inst.n_vehicles, inst.n_channels
    ckeys = inst.channel_keys
    all_offers = range(1 << n)

    @functools.cache
    def channel_payoff(profile: tuple[int, ...], c: int) -> float:
        vm = _play_masks(inst, profile)
        got = sum(1 << v for v in range(n) if vm[v] >> c & 1)
        return ckeys[c][got]

    outcomes = set()
    for profile in itertools.product(all_offers, repeat=k):
        stable = True
        for c in range(k):
            current = channel_payoff(profile, c)
            for alt in all_offers:
                if alt == profile[c]:
                    continue
                deviated = profile[:c] + (alt,) + profile[c + 1:]
                if channel_payoff(deviated, c) < current:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            vm = _play_masks(inst, profile)
            outcomes.add(Matching.from_masks(vm, _channel_sets(vm, k)))
    return frozenset(outcomes)

