import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nomamatch import reconstruct, scenarios
from nomamatch.matching import (
    Instance,
    Matching,
    PreMatching,
    Status,
    allocate,
    apply_T,
    compute_U,
    compute_V,
    format_trace,
    initial_state,
    is_consistent,
    trace_digest,
)
from nomamatch.prefcore import PartnerSet, RankedPreference, Side, channel, choose, vehicle
from nomamatch.scenarios import Model, random_instance

CYCLING = """\
nomamatch-scenario 1 vehicles 2 channels 2
agent v1 ranked
c1
agent v2 ranked
c1 c2
agent c1 ranked
v1 v2
agent c2 ranked
v2
"""


def vs(*idx):
    return PartnerSet.of(Side.VEHICLE, [i - 1 for i in idx])


def cs(*idx):
    return PartnerSet.of(Side.CHANNEL, [i - 1 for i in idx])


@pytest.fixture(scope="module")
def example():
    return scenarios.paper_example_instance()


# oracles for U and V written directly from their definitions


def oracle_U(c, m, inst):
    return PartnerSet.from_agents(
        [v for v in inst.vehicles if c in choose(inst.pref(v), m[v] | PartnerSet.of(Side.CHANNEL, [c.index]))],
        Side.VEHICLE,
    )


def oracle_V(v, m, inst):
    return PartnerSet.from_agents(
        [c for c in inst.channels if v in choose(inst.pref(c), m[c] | PartnerSet.of(Side.VEHICLE, [v.index]))],
        Side.CHANNEL,
    )


def oracle_T(m, inst):
    vsets = [choose(inst.pref(v), oracle_V(v, m, inst)) for v in inst.vehicles]
    csets = [choose(inst.pref(c), oracle_U(c, m, inst)) for c in inst.channels]
    return PreMatching(vsets, csets)


@st.composite
def instances_with_state(draw):
    nv, nc = draw(st.integers(1, 3)), draw(st.integers(1, 3))
    model = draw(st.sampled_from(list(Model)))
    inst = random_instance(nv, nc, draw(st.integers(0, 10_000)), model)
    vm = draw(st.lists(st.integers(0, (1 << nc) - 1), min_size=nv, max_size=nv))
    cm = draw(st.lists(st.integers(0, (1 << nv) - 1), min_size=nc, max_size=nc))
    return inst, PreMatching.from_masks(vm, cm)


def test_initial_state(example):
    start = initial_state(example)
    assert all(s == cs(1, 2, 3) for s in start.vehicle_sets)
    assert all(s == vs() for s in start.channel_sets)


def test_first_iteration_matches_example(example):
    rec = allocate(example).trace[0]
    assert rec.U == (vs(1, 2, 3, 4, 5),) * 3
    assert rec.V == (cs(1, 2, 3),) * 5
    assert rec.tm_vehicles == (cs(1, 2, 3),) * 5
    assert rec.tm_channels == (vs(1, 2), vs(2, 3), vs(3, 4))


def test_fixed_point_matches_example(example):
    out = allocate(example)
    rec = out.trace[-1]
    assert rec.V == (cs(1), cs(1, 2), cs(2, 3), cs(3), cs())
    assert rec.tm_vehicles == (cs(1), cs(1, 2), cs(2, 3), cs(3), cs())
    assert rec.tm_channels == (vs(1, 2), vs(2, 3), vs(3, 4))
    assert out.status is Status.CONVERGED_CONSISTENT
    assert [(str(v), str(c)) for v, c in out.matching.edges()] == [
        ("v1", "c1"), ("v2", "c1"), ("v2", "c2"), ("v3", "c2"), ("v3", "c3"), ("v4", "c3"),
    ]


def test_example_trace_is_not_reproducible_by_any_profile(example):
    # V depends only on the channel-side sets, and those are identical going
    # into the example's second and third iterations; yet the example lists
    # different V(v3) for them.  No preference profile can produce both.
    tr = reconstruct.WORKED_EXAMPLE_TRACE
    ch_before_2 = {c: tr[0]["TM"][c] for c in reconstruct.CHANNELS}
    ch_before_3 = {c: tr[1]["TM"][c] for c in reconstruct.CHANNELS}
    assert ch_before_2 == ch_before_3
    assert tr[1]["V"]["v3"] != tr[2]["V"]["v3"]

    state = allocate(example).trace[0].state
    shuffled = PreMatching(tuple(cs() for _ in range(5)), state.channel_sets)
    for v in example.vehicles:
        assert compute_V(v, state, example) == compute_V(v, shuffled, example)


def test_compare_with_example_lists_known_gaps(example):
    problems = reconstruct.compare_with_worked_example(allocate(example))
    assert problems == [
        "iteration 2: V(v3) expected {c3}, got {c2,c3}",
        "iteration 2: TM(v3) expected {c3}, got {c2,c3}",
        "iteration 4: in the example, but the run stopped after 3",
        "iterations: expected 4, got 3",
    ]


def test_allocate_is_deterministic(example):
    a, b = allocate(example), allocate(example)
    assert format_trace(a.trace) == format_trace(b.trace)
    assert trace_digest(a.trace) == trace_digest(b.trace)


def test_trace_format(example):
    text = format_trace(allocate(example).trace)
    lines = text.splitlines()
    assert lines[0] == "iteration 1"
    assert lines[1] == "  v1 V={c1,c2,c3} TM={c1,c2,c3}"
    assert lines[6] == "  c1 U={v1,v2,v3,v4,v5} TM={v1,v2}"


def test_compute_rejects_wrong_side(example):
    m = initial_state(example)
    with pytest.raises(ValueError):
        compute_U(vehicle(0), m, example)
    with pytest.raises(ValueError):
        compute_V(channel(0), m, example)


def test_empty_instance():
    inst = Instance(0, 0, {})
    out = allocate(inst)
    assert out.status is Status.CONVERGED_CONSISTENT
    assert out.iterations == 1
    assert out.matching.edges() == []


def test_cycle_detected():
    inst = scenarios.loads(CYCLING).instance
    out = allocate(inst)
    assert out.status is Status.CYCLE_DETECTED
    assert len(out.cycle) == 2
    assert out.matching is None
    # the cycle really repeats under T
    a, b = out.cycle
    assert apply_T(a, inst) == b and apply_T(b, inst) == a


def test_iteration_cap(example):
    out = allocate(example, cap=2)
    assert out.status is Status.ITERATION_CAP_REACHED
    assert out.iterations == 2
    with pytest.raises(ValueError):
        allocate(example, cap=0)


def test_instance_validation():
    p = RankedPreference(vehicle(0), (cs(2),))
    with pytest.raises(ValueError):
        Instance(1, 1, {vehicle(0): p, channel(0): RankedPreference(channel(0), ())})
    with pytest.raises(ValueError):
        Instance(1, 1, {vehicle(0): RankedPreference(vehicle(0), ())})


def test_matching_rejects_inconsistent_maps():
    with pytest.raises(ValueError):
        Matching((cs(1),), (vs(),))
    assert not is_consistent(PreMatching((cs(1),), (vs(),)))
    assert Matching((cs(1),), (vs(1),)) == PreMatching((cs(1),), (vs(1),))


@settings(max_examples=200, deadline=None)
@given(instances_with_state())
def test_T_matches_definition(data):
    inst, m = data
    for c in inst.channels:
        assert compute_U(c, m, inst) == oracle_U(c, m, inst)
    for v in inst.vehicles:
        assert compute_V(v, m, inst) == oracle_V(v, m, inst)
    assert apply_T(m, inst) == oracle_T(m, inst)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10**6), st.sampled_from(list(Model)))
def test_converged_results_are_consistent_fixed_points(nv, nc, seed, model):
    inst = random_instance(nv, nc, seed, model)
    out = allocate(inst)
    assert out.status is not Status.CONVERGED_INCONSISTENT
    if out.status is Status.CONVERGED_CONSISTENT:
        assert apply_T(out.result, inst) == out.result
        assert is_consistent(out.result)
    if model is not Model.RANKED_UNRESTRICTED:
        assert out.status is Status.CONVERGED_CONSISTENT
