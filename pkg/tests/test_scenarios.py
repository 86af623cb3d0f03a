import math
from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nomamatch import reconstruct, scenarios
from nomamatch.matching import Matching, allocate, trace_digest
from nomamatch.prefcore import PartnerSet, Side, channel, is_substitutable, vehicle
from nomamatch.scenarios import (
    GeoScenario,
    Model,
    ScenarioError,
    dumps,
    from_geo,
    geo_utility,
    loads,
    parse_matching,
    random_instance,
)

GOOD = """\
nomamatch-scenario 1 vehicles 2 channels 1
agent v1 RANKED
c1
agent v2 UTILITY
c1 0.5
quota 1
agent c1 ranked
v1 v2
v1
"""


def test_loads_and_round_trip():
    sc = loads(GOOD)
    assert sc.instance.n_vehicles == 2
    assert loads(dumps(sc)) == sc
    assert dumps(loads(dumps(sc))) == dumps(sc)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 10**6), st.sampled_from(list(Model)))
def test_round_trip_random(nv, nc, seed, model):
    inst = random_instance(nv, nc, seed, model)
    text = dumps(inst)
    assert loads(text).instance == inst
    assert dumps(loads(text)) == text


def test_comments_and_golden_survive():
    sc = scenarios.ScenarioFile(loads(GOOD).instance, scenarios.Golden(((vehicle(0), channel(0)),), "ab12"), ("hello", ""))
    assert loads(dumps(sc)) == sc


@pytest.mark.parametrize("text, line, fragment", [
    ("", None, "empty"),
    ("nomamatch-scenario 2 vehicles 1 channels 1\n", 1, "version"),
    ("nomamatch-scenario 1 vehicles 1 channels 1\nagent v1 RANKED\nc2\nagent c1 RANKED\n", 3, "unknown agent c2"),
    ("nomamatch-scenario 1 vehicles 1 channels 1\nagent v1 RANKED\nv1\nagent c1 RANKED\n", 3, "not a channel"),
    ("nomamatch-scenario 1 vehicles 1 channels 1\nagent v1 RANKED\nc1\nc1\nagent c1 RANKED\n", 4, "ranked twice"),
    ("nomamatch-scenario 1 vehicles 1 channels 1\nagent v1 UTILITY\nc1 x\nquota 1\nagent c1 RANKED\n", 3, "bad utility"),
    ("nomamatch-scenario 1 vehicles 1 channels 1\nagent v1 UTILITY\nc1 1.0\nagent c1 RANKED\n", 2, "no quota"),
    ("nomamatch-scenario 1 vehicles 1 channels 1\nagent v1 UTILITY\nc1 1.0\nquota 0\nagent c1 RANKED\n", 4, "at least 1"),
    ("nomamatch-scenario 1 vehicles 1 channels 1\nagent v1 SORTED\n", 2, "RANKED|UTILITY"),
    ("nomamatch-scenario 1 vehicles 1 channels 1\nagent v1 RANKED\n", None, "no preference block for c1"),
    ("nomamatch-scenario 1 vehicles 1 channels 1\nagent v1 RANKED\nagent v1 RANKED\n", 3, "second block"),
    ("nomamatch-scenario 1 vehicles 1 channels 1\nbogus\n", 2, "unexpected"),
])
def test_parse_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ScenarioError) as err:
        loads(text)
    assert err.value.line == line
    assert fragment in str(err.value)
    if line is not None:
        assert str(err.value).startswith(f"line {line}:")


def test_shipped_example_is_the_reconstruction():
    shipped = resources.files("nomamatch").joinpath("data/paper_example.scn").read_text()
    assert shipped == dumps(reconstruct.reconstructed_scenario())


def test_shipped_example_replays_its_golden_block():
    sc = loads(resources.files("nomamatch").joinpath("data/paper_example.scn").read_text())
    out = allocate(sc.instance)
    assert tuple(Matching.from_prematching(out.result).edges()) == sc.golden.edges
    assert trace_digest(out.trace) == sc.golden.digest


def test_reconstruction_keeps_given_ranking_and_is_substitutable():
    inst = scenarios.paper_example_instance()
    v1 = inst.pref(vehicle(0))
    assert [str(s) for s in v1.ranking] == [
        "{c1,c2,c3}", "{c1,c2}", "{c1,c3}", "{c2,c3}", "{c1}", "{c2}", "{c3}",
    ]
    for a in inst.agents:
        assert is_substitutable(inst.pref(a), inst.universe(a.side.other))


def test_reconstruction_reports_counts_and_dropped_fact():
    rec = reconstruct.reconstruct()
    assert rec.completions[vehicle(0)] == 1
    assert all(rec.completions[vehicle(i)] == 48 for i in range(1, 5))
    assert all(rec.completions[channel(i)] == 12 for i in range(3))
    assert len(rec.dropped) == 1


def test_search_finds_canonical_smallest_first():
    cs = reconstruct.derive_constraints()
    mine = [f for f in cs.constraints if f.agent == channel(0)]
    found = reconstruct.search_rankings(channel(0), 5, mine)
    assert len(found) == 12
    assert found[0] == scenarios.paper_example_instance().pref(channel(0))
    assert all(len(p.ranking) == len(found[0].ranking) for p in found)
    for pref in found:
        assert all(f.holds(pref.choose_mask(f.offered)) for f in mine)


def test_random_instance_is_deterministic():
    for model in Model:
        assert random_instance(3, 3, 42, model) == random_instance(3, 3, 42, model)
    assert dumps(random_instance(3, 3, 1, Model.RESPONSIVE_BOTH_SIDES)) != dumps(
        random_instance(3, 3, 2, Model.RESPONSIVE_BOTH_SIDES))


def test_responsive_generator_is_substitutable():
    for seed in range(1000):
        inst = random_instance(1 + seed % 4, 1 + seed % 3, seed, Model.RESPONSIVE_BOTH_SIDES)
        for a in inst.agents:
            assert is_substitutable(inst.pref(a), inst.universe(a.side.other))


def test_ranked_substitutable_generator_passes_checker():
    for seed in range(50):
        inst = random_instance(3, 3, seed, Model.RANKED_SUBSTITUTABLE)
        for a in inst.agents:
            assert is_substitutable(inst.pref(a), inst.universe(a.side.other))


def test_unrestricted_generator_produces_complements():
    seen = False
    for seed in range(200):
        inst = random_instance(2, 2, seed, Model.RANKED_UNRESTRICTED)
        if not all(is_substitutable(inst.pref(a), inst.universe(a.side.other)) for a in inst.agents):
            seen = True
            break
    assert seen


def test_geo_utility_values():
    geo = GeoScenario(((3.0, 4.0),), (0.0, 0.0), (25.0, 50.0), 2.0, 1, 1)
    assert geo_utility(geo, 0, 0) == pytest.approx(math.log(2.0))
    assert geo_utility(geo, 0, 1) == pytest.approx(math.log(3.0))
    inst = from_geo(geo)
    assert inst.pref(vehicle(0)).utility[channel(1)] == inst.pref(channel(1)).utility[vehicle(0)]
    assert from_geo(geo) == inst


def test_geo_quota_one_picks_single_partner():
    inst = from_geo(scenarios.random_geo(4, 3, 9, quota_per_channel=1, quota_per_vehicle=1))
    m = allocate(inst).matching
    assert all(len(m[a]) <= 1 for a in inst.agents)


def test_geo_validation():
    with pytest.raises(ValueError):
        GeoScenario(((1.0, 1.0),), (0.0, 0.0), (0.0,))
    with pytest.raises(ValueError):
        GeoScenario(((1.0, 1.0),), (0.0, 0.0), (1.0,), 1.5)
    with pytest.raises(ValueError):
        GeoScenario(((1.0, 1.0),), (0.0, 0.0), (1.0,), 2.0, 0, 1)
    with pytest.raises(ValueError):
        geo_utility(GeoScenario(((0.0, 0.0),), (0.0, 0.0), (1.0,)), 0, 0)


def test_parse_matching_formats():
    inst = loads(GOOD).instance
    m = parse_matching("# comment\nv1 c1\n\n", inst)
    assert m.is_consistent() and m[vehicle(0)] == PartnerSet.of(Side.CHANNEL, [0])
    odd = parse_matching("v1: c1\n", inst)
    assert not odd.is_consistent()
    with pytest.raises(ScenarioError) as err:
        parse_matching("v1 c1\nv3 c1\n", inst)
    assert err.value.line == 2
