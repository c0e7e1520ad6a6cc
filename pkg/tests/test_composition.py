"""Composition, substitution, projection, and local-property checking."""

import random

import pytest

from metaphorsim import (
    Action,
    Binding,
    EnvironmentSpec,
    Exponential,
    InterfacePoint,
    LocalProperty,
    LocationGraph,
    LocationNode,
    ModelSpec,
    Payload,
    Prefix,
    ResourceKind,
    RunConfig,
    Scope,
    check_local_property,
    compose_models,
    marker_rule,
    project_trace,
    run_model,
    substitute_environment,
    validate_model,
)
from metaphorsim.engine import EventRecord
from metaphorsim.errors import (
    IncompatibleInterface,
    InsufficientEventCoverage,
    UnknownScopeName,
)


def office_model(name, locations, iface_loc, emitted=(), accepted=()):
    nodes = [LocationNode(n) for n in locations]
    edges = [(locations[i], locations[i + 1]) for i in range(len(locations) - 1)]
    return ModelSpec(
        name=name,
        graph=LocationGraph(nodes, edges),
        kinds={"tok": ResourceKind("tok")},
        interfaces=[InterfacePoint(iface_loc, frozenset(accepted), frozenset(emitted))],
    )


def test_compose_merges_bound_nodes():
    # oracle: |V| = |V1| + |V2| - bound pairs; edges all survive
    a = office_model("officeA", ["office", "entryway"], "entryway",
                     emitted={"person_out"})
    b = office_model("officeB", ["entryway", "street"], "entryway",
                     accepted={"person_out"})
    c = compose_models(a, b, Binding(pairs=(("entryway", "entryway"),)))
    assert len(c.graph.nodes) == len(a.graph.nodes) + len(b.graph.nodes) - 1
    assert ("office", "entryway") in c.graph.edges
    assert ("entryway", "street") in c.graph.edges
    assert validate_model(c) == []


def test_compose_renames_colliding_noninterface_names():
    a = office_model("A", ["lobby", "gate"], "gate", emitted={"x"})
    b = office_model("B", ["lobby", "gate"], "gate", accepted={"x"})
    c = compose_models(a, b, Binding(pairs=(("gate", "gate"),)))
    assert "A.lobby" in c.graph.nodes
    assert "B.lobby" in c.graph.nodes
    assert "gate" in c.graph.nodes
    assert len(c.graph.nodes) == 3


def test_compose_requires_shared_event_types():
    a = office_model("A", ["x1", "gate"], "gate", emitted={"left"})
    b = office_model("B", ["gate", "y1"], "gate", accepted={"right"})
    with pytest.raises(IncompatibleInterface):
        compose_models(a, b, Binding(pairs=(("gate", "gate"),)))


def test_compose_with_empty_model_is_unit_like():
    a = office_model("A", ["lobby", "gate"], "gate", emitted={"x"})
    empty = ModelSpec(name="empty", graph=LocationGraph())
    c = compose_models(a, empty, Binding())
    assert set(c.graph.nodes) == set(a.graph.nodes)
    assert c.graph.edges == a.graph.edges
    assert validate_model(c) == []


def arrival_model(name, iface, event):
    m = office_model(name, [iface, f"{name}_inner"], iface, emitted={event})
    m.environments = [EnvironmentSpec(
        name=f"{name}_src", interface=iface, inter_arrival=Exponential(1.0),
        event_type=event, emitted_event_types=frozenset({event}))]
    return m


def test_substitute_requires_event_coverage():
    host = arrival_model("host", "door", "visitor")
    host.interfaces = [InterfacePoint("door", accepted_event_types=frozenset({"visitor"}))]
    sub = office_model("sub", ["exit", "back"], "exit", emitted={"unrelated"})
    with pytest.raises(InsufficientEventCoverage):
        substitute_environment(host, "host_src", sub, Binding(pairs=(("door", "exit"),)))


def test_substitute_removes_env_and_composes():
    host = arrival_model("host", "door", "visitor")
    host.interfaces = [InterfacePoint("door", accepted_event_types=frozenset({"visitor"}))]
    sub = office_model("sub", ["exit", "back"], "exit", emitted={"visitor"})
    emit = Prefix(Action("announce", at="exit", event_type="visitor",
                         duration=Exponential(0.5)))
    sub.rules = {"announce": marker_rule("announce")}
    sub.processes = {"announcer": emit}
    sub.environments = [EnvironmentSpec(
        name="pulse", interface="exit", inter_arrival=Exponential(1.0),
        payload=Payload(process="announcer"), event_type="sub_pulse",
        emitted_event_types=frozenset({"sub_pulse"}))]
    composed = substitute_environment(
        host, "host_src", sub, Binding(pairs=(("door", "exit"),)))
    assert all(e.name != "host_src" for e in composed.environments)
    assert validate_model(composed) == []
    r = run_model(composed, RunConfig(seed=5, horizon=50.0))
    assert any(e.event_type == "visitor" for e in r.log)


def fixture_log():
    recs = []
    locs = ["transit", "office", "server"]
    for i in range(20):
        recs.append(EventRecord(
            time=float(i), event_type=f"ev{i % 4}", location=locs[i % 3],
            subject=f"proc#{i % 5}", details={}))
    return tuple(recs)


def test_project_identity_when_scope_is_everything():
    log = fixture_log()
    scope = Scope(locations={"transit", "office", "server"})
    assert project_trace(log, scope) == log


def test_project_filters_by_location_preserving_order():
    # oracle: filter-then-compare on the 20-event fixture
    log = fixture_log()
    got = project_trace(log, Scope(locations={"transit"}))
    expected = tuple(r for r in log if r.location == "transit")
    assert got == expected
    times = [r.time for r in got]
    assert times == sorted(times)


def test_project_empty_scope_rejected():
    with pytest.raises(ValueError):
        Scope()


def test_project_unknown_scope_name():
    log = fixture_log()
    with pytest.raises(UnknownScopeName):
        project_trace(log, Scope(locations={"nowhere"}),
                      known_locations={"transit", "office", "server"})


def test_ordering_property():
    log = (
        EventRecord(1.0, "iv_end", "bay", "patient#1", {}),
        EventRecord(2.0, "advanced_airway_start", "bay", "patient#1", {}),
        EventRecord(3.0, "advanced_airway_start", "bay", "patient#2", {}),
    )
    prop = LocalProperty("dag", Scope(locations={"bay"}), "ordering",
                         {"first": "iv_end", "later": "advanced_airway_start"})
    verdict = check_local_property(log[:2], prop)
    assert verdict.holds
    verdict = check_local_property(log, prop)
    assert not verdict.holds
    assert verdict.witnesses[0].subject == "patient#2"


def test_absence_property():
    log = fixture_log()
    ok = LocalProperty("no_ev9", Scope(locations={"transit", "office", "server"}),
                       "absence", {"event_type": "ev9"})
    assert check_local_property(log, ok).holds
    bad = LocalProperty("no_ev1", Scope(locations={"transit", "office", "server"}),
                        "absence", {"event_type": "ev1"})
    verdict = check_local_property(log, bad)
    assert not verdict.holds
    assert verdict.witnesses[0].event_type == "ev1"


def test_count_property_with_witness():
    log = fixture_log()
    prop = LocalProperty("few", Scope(locations={"transit", "office", "server"}),
                         "count", {"event_type": "ev0", "op": "<=", "value": 2})
    verdict = check_local_property(log, prop)
    assert not verdict.holds
    # earliest violating record is the third ev0
    ev0s = [r for r in log if r.event_type == "ev0"]
    assert verdict.witnesses[0] == ev0s[2]


def test_projection_commutes_with_checking():
    # local-reasoning soundness on random scopes: property scope inside the
    # projection scope means identical verdicts
    log = fixture_log()
    rng = random.Random(1234)
    all_locs = ["transit", "office", "server"]
    all_procs = ["proc"]
    for _ in range(100):
        k = rng.randint(1, 3)
        prop_locs = set(rng.sample(all_locs, k))
        extra = set(rng.sample(all_locs, rng.randint(0, 3 - 0)))
        proj_scope = Scope(locations=prop_locs | extra, processes=set(all_procs))
        kind = rng.choice(["count", "absence", "ordering"])
        if kind == "count":
            prop = LocalProperty("p", Scope(locations=prop_locs), "count",
                                 {"event_type": f"ev{rng.randint(0, 4)}",
                                  "op": rng.choice(["<=", ">=", "="]),
                                  "value": rng.randint(0, 6)})
        elif kind == "absence":
            prop = LocalProperty("p", Scope(locations=prop_locs), "absence",
                                 {"event_type": f"ev{rng.randint(0, 4)}"})
        else:
            prop = LocalProperty("p", Scope(locations=prop_locs), "ordering",
                                 {"first": f"ev{rng.randint(0, 4)}",
                                  "later": f"ev{rng.randint(0, 4)}"})
        full = check_local_property(log, prop)
        projected = check_local_property(project_trace(log, proj_scope), prop)
        assert full.holds == projected.holds
