"""Model composition, environment substitution, and local reasoning.

compose_models merges two validated models at bound interface locations;
substitute_environment swaps a stochastic environment for an explicit
model that covers its event types; project_trace and check_local_property
let a property of one sub-model be decided on that sub-model's slice of
the log alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .errors import (
    AttributeConflict,
    IncompatibleInterface,
    InsufficientEventCoverage,
    UnknownScopeName,
)
from .metrics import collect_durations, duration_stats
from .model import (
    AgentSpec,
    EnvironmentSpec,
    InterfacePoint,
    LocationGraph,
    LocationNode,
    MetricDecl,
    ModelSpec,
    Payload,
    validate_model,
)
from .resources import ResourceAtom, ResourceBundle, ResourcePattern
from .terms import (
    Action,
    Choose,
    Claim,
    Move,
    Nil,
    Par,
    Prefix,
    ProcessTerm,
    Release,
    Seq,
    Spawn,
)


@dataclass(frozen=True)
class Binding:
    """How two models connect: bound location pairs and an event-type map.

    ``pairs`` lists (location in A, location in B) to merge.  ``event_map``
    renames B's event types into A's vocabulary.  ``shared`` names entities
    (kinds, rules, processes) both models intentionally have in common;
    unlisted collisions are prefix-renamed, never silently merged.
    """

    pairs: tuple[tuple[str, str], ...] = ()
    event_map: Mapping[str, str] = field(default_factory=dict)
    shared: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        object.__setattr__(self, "event_map", dict(self.event_map))
        object.__setattr__(self, "shared", frozenset(self.shared))


# --- renaming machinery ----------------------------------------------------


@dataclass(frozen=True)
class _NameMap:
    locations: Mapping[str, str] = field(default_factory=dict)
    kinds: Mapping[str, str] = field(default_factory=dict)
    processes: Mapping[str, str] = field(default_factory=dict)
    actions: Mapping[str, str] = field(default_factory=dict)
    environments: Mapping[str, str] = field(default_factory=dict)
    events: Mapping[str, str] = field(default_factory=dict)
    metrics: Mapping[str, str] = field(default_factory=dict)

    def loc(self, name: str) -> str:
        if name.startswith("$"):
            return name
        return self.locations.get(name, name)

    def kind(self, name: str) -> str:
        return self.kinds.get(name, name)

    def proc(self, name: str) -> str:
        return self.processes.get(name, name)

    def action(self, name: str) -> str:
        return self.actions.get(name, name)

    def event(self, name: str | None) -> str | None:
        if name is None:
            return None
        return self.events.get(name, name)


def _rename_pattern(p: ResourcePattern, nm: _NameMap) -> ResourcePattern:
    return replace(p, kind=nm.kind(p.kind))


def _rename_action(a: Action, nm: _NameMap) -> Action:
    return replace(
        a, name=nm.action(a.name), at=nm.loc(a.at), event_type=nm.event(a.event_type))


def _rename_term(t: ProcessTerm, nm: _NameMap) -> ProcessTerm:
    if isinstance(t, Nil):
        return t
    if isinstance(t, Prefix):
        return Prefix(_rename_action(t.action, nm), _rename_term(t.then, nm))
    if isinstance(t, Seq):
        return Seq(_rename_term(t.first, nm), _rename_term(t.second, nm))
    if isinstance(t, Par):
        return Par(_rename_term(t.left, nm), _rename_term(t.right, nm))
    if isinstance(t, Choose):
        return Choose(tuple((w, _rename_term(b, nm)) for w, b in t.branches))
    if isinstance(t, Move):
        return Move(_rename_pattern(t.pattern, nm), nm.loc(t.src), nm.loc(t.dst),
                    _rename_term(t.then, nm), nm.event(t.event_type), dict(t.details))
    if isinstance(t, Claim):
        return Claim(_rename_pattern(t.pattern, nm), nm.loc(t.at),
                     _rename_term(t.then, nm), nm.event(t.event_type))
    if isinstance(t, Release):
        return Release(t.binding, nm.loc(t.at), _rename_term(t.then, nm),
                       nm.event(t.event_type))
    if isinstance(t, Spawn):
        return Spawn(nm.proc(t.process), _rename_term(t.then, nm), dict(t.params))
    raise TypeError(f"unknown term {t!r}")


def _rename_payload(p: Payload, nm: _NameMap) -> Payload:
    return Payload(
        process=nm.proc(p.process) if p.process else None,
        templates=tuple(
            (replace(a, kind=nm.kind(a.kind)), nm.loc(place) if place != "interface" else place)
            for a, place in p.templates),
        agent=p.agent,
        params=dict(p.params),
    )


def rename_model(m: ModelSpec, nm: _NameMap) -> ModelSpec:
    """Rebuild a model under a namespace mapping; unmapped names pass through."""
    graph = LocationGraph(
        (replace(node, name=nm.loc(node.name)) for node in m.graph.nodes.values()),
        ((nm.loc(s), nm.loc(d)) for s, d in m.graph.edges),
    )
    kinds = {}
    for kind in m.kinds.values():
        renamed = replace(
            kind, name=nm.kind(kind.name),
            incompatible_with=frozenset(nm.kind(k) for k in kind.incompatible_with))
        kinds[renamed.name] = renamed
    rules = {}
    for rule in m.rules.values():
        renamed_rule = replace(rule, action_name=nm.action(rule.action_name))
        rules[renamed_rule.action_name] = renamed_rule
    processes = {nm.proc(name): _rename_term(term, nm) for name, term in m.processes.items()}
    agents = [
        replace(agent,
                marker=replace(agent.marker, kind=nm.kind(agent.marker.kind)),
                behaviour=nm.proc(agent.behaviour),
                carried=nm.loc(agent.carried), memory=nm.loc(agent.memory),
                start=nm.loc(agent.start) if agent.start else None)
        for agent in m.agents
    ]
    environments = [
        replace(env,
                name=nm.environments.get(env.name, env.name),
                interface=nm.loc(env.interface),
                payload=_rename_payload(env.payload, nm),
                emitted_event_types=frozenset(
                    nm.event(e) for e in env.emitted_event_types),
                event_type=nm.event(env.event_type))
        for env in m.environments
    ]
    placement = {}
    for loc, bundle in m.initial_placement.items():
        placement[nm.loc(loc)] = ResourceBundle(
            replace(a, kind=nm.kind(a.kind)) for a in bundle)
    interfaces = [
        InterfacePoint(nm.loc(p.location),
                       frozenset(nm.event(e) for e in p.accepted_event_types),
                       frozenset(nm.event(e) for e in p.emitted_event_types))
        for p in m.interfaces
    ]
    metrics = [replace(d, name=nm.metrics.get(d.name, d.name)) for d in m.metrics]
    on_event = {
        (nm.loc(loc), nm.event(event_type)): _rename_payload(payload, nm)
        for (loc, event_type), payload in m.on_event.items()
    }
    return ModelSpec(
        name=m.name, graph=graph, kinds=kinds, rules=rules, processes=processes,
        agents=agents, environments=environments, initial_placement=placement,
        interfaces=interfaces, metrics=metrics, on_event=on_event,
        duration_fns=dict(m.duration_fns), event_types=frozenset(
            nm.event(e) for e in m.event_types),
        metadata=dict(m.metadata),
    )


def _collision_maps(a: ModelSpec, b: ModelSpec, bind: Binding):
    """Build per-model rename maps for colliding non-interface names."""
    bound_a = {pa for pa, _ in bind.pairs}
    bound_b = {pb for _, pb in bind.pairs}

    def clashes(names_a, names_b, exempt_a=frozenset(), exempt_b=frozenset()):
        return (set(names_a) - exempt_a - bind.shared) & (set(names_b) - exempt_b - bind.shared)

    loc_clash = clashes(a.graph.nodes, b.graph.nodes, bound_a, bound_b)
    kind_clash = clashes(a.kinds, b.kinds)
    proc_clash = clashes(a.processes, b.processes)
    action_clash = clashes(a.rules, b.rules)
    env_clash = clashes({e.name for e in a.environments}, {e.name for e in b.environments})
    metric_clash = clashes({d.name for d in a.metrics}, {d.name for d in b.metrics})

    def prefixed(names, model_name):
        return {n: f"{model_name}.{n}" for n in names}

    map_a = _NameMap(
        locations=prefixed(loc_clash, a.name), kinds=prefixed(kind_clash, a.name),
        processes=prefixed(proc_clash, a.name), actions=prefixed(action_clash, a.name),
        environments=prefixed(env_clash, a.name), metrics=prefixed(metric_clash, a.name),
    )
    map_b = _NameMap(
        locations=prefixed(loc_clash, b.name), kinds=prefixed(kind_clash, b.name),
        processes=prefixed(proc_clash, b.name), actions=prefixed(action_clash, b.name),
        environments=prefixed(env_clash, b.name), metrics=prefixed(metric_clash, b.name),
        events=dict(bind.event_map),
    )
    return map_a, map_b


def _merge_nodes(na: LocationNode, nb: LocationNode) -> LocationNode:
    if na.kind != nb.kind:
        raise AttributeConflict(
            f"bound locations {na.name!r}/{nb.name!r} disagree on kind: "
            f"{na.kind} vs {nb.kind}")
    attrs = dict(na.attributes)
    for key, value in nb.attributes.items():
        if key in attrs and attrs[key] != value:
            raise AttributeConflict(
                f"bound locations {na.name!r}/{nb.name!r} disagree on "
                f"attribute {key!r}: {attrs[key]!r} vs {value!r}")
        attrs[key] = value
    return LocationNode(name=na.name, kind=na.kind, attributes=attrs)


def compose_models(a: ModelSpec, b: ModelSpec, bind: Binding) -> ModelSpec:
    """Merge two valid models at bound interface locations.

    Bound pairs collapse to single nodes carrying both attribute sets;
    all other colliding names are prefix-renamed with their source model
    name.  The result validates before being returned.
    """
    for m in (a, b):
        diags = validate_model(m)
        if diags:
            raise ValueError(f"model {m.name!r} invalid before composition: "
                             + "; ".join(str(d) for d in diags))

    a_ifaces = {p.location: p for p in a.interfaces}
    b_ifaces = {p.location: p for p in b.interfaces}
    for loc_a, loc_b in bind.pairs:
        if loc_a not in a_ifaces:
            raise IncompatibleInterface(f"{loc_a!r} is not an interface of {a.name!r}")
        if loc_b not in b_ifaces:
            raise IncompatibleInterface(f"{loc_b!r} is not an interface of {b.name!r}")
        pa, pb = a_ifaces[loc_a], b_ifaces[loc_b]
        mapped_emitted = {bind.event_map.get(e, e) for e in pb.emitted_event_types}
        mapped_accepted = {bind.event_map.get(e, e) for e in pb.accepted_event_types}
        crossing = (pa.accepted_event_types & mapped_emitted) | (
            pa.emitted_event_types & mapped_accepted)
        if not crossing:
            raise IncompatibleInterface(
                f"bound pair ({loc_a!r}, {loc_b!r}) shares no event types after mapping")

    map_a, map_b = _collision_maps(a, b, bind)
    ra = rename_model(a, map_a)
    # fold the bound-pair merge into b's location map
    merged_loc_map = dict(map_b.locations)
    for loc_a, loc_b in bind.pairs:
        merged_loc_map[loc_b] = map_a.loc(loc_a)
    map_b = replace(map_b, locations=merged_loc_map)
    rb = rename_model(b, map_b)

    graph = ra.graph.copy()
    for name, node in rb.graph.nodes.items():
        if name in graph.nodes:
            graph.add_node(_merge_nodes(graph.nodes[name], node))
        else:
            graph.add_node(node)
    for edge in rb.graph.edges:
        graph.edges.add(edge)

    kinds = dict(ra.kinds)
    for name, kind in rb.kinds.items():
        if name in kinds and kinds[name] != kind:
            raise AttributeConflict(f"shared kind {name!r} differs between models")
        kinds[name] = kind
    rules = dict(ra.rules)
    for name, rule in rb.rules.items():
        if name in rules and rules[name] is not rule and rules[name].effect is not rule.effect:
            raise AttributeConflict(f"shared rule {name!r} differs between models")
        rules.setdefault(name, rule)
    processes = dict(ra.processes)
    for name, term in rb.processes.items():
        if name in processes and processes[name] != term:
            raise AttributeConflict(f"shared process {name!r} differs between models")
        processes.setdefault(name, term)

    placement = {loc: bundle for loc, bundle in ra.initial_placement.items()}
    for loc, bundle in rb.initial_placement.items():
        if loc in placement:
            placement[loc] = ResourceBundle(placement[loc].atoms + bundle.atoms)
        else:
            placement[loc] = bundle

    interfaces: dict[str, InterfacePoint] = {p.location: p for p in ra.interfaces}
    for p in rb.interfaces:
        if p.location in interfaces:
            existing = interfaces[p.location]
            interfaces[p.location] = InterfacePoint(
                p.location,
                existing.accepted_event_types | p.accepted_event_types,
                existing.emitted_event_types | p.emitted_event_types)
        else:
            interfaces[p.location] = p

    on_event = dict(ra.on_event)
    for key, payload in rb.on_event.items():
        if key in on_event:
            raise AttributeConflict(f"both models handle event {key!r}")
        on_event[key] = payload

    duration_fns = dict(ra.duration_fns)
    duration_fns.update(rb.duration_fns)

    composed = ModelSpec(
        name=f"{a.name}+{b.name}",
        graph=graph, kinds=kinds, rules=rules, processes=processes,
        agents=list(ra.agents) + list(rb.agents),
        environments=list(ra.environments) + list(rb.environments),
        initial_placement=placement,
        interfaces=list(interfaces.values()),
        metrics=list(ra.metrics) + list(rb.metrics),
        on_event=on_event,
        duration_fns=duration_fns,
        event_types=ra.event_types | rb.event_types,
        metadata={"composed_from": [a.name, b.name]},
    )
    diags = validate_model(composed)
    if diags:
        raise ValueError("composition produced an invalid model: "
                         + "; ".join(str(d) for d in diags))
    return composed


def substitute_environment(m: ModelSpec, env_name: str, sub: ModelSpec,
                           bind: Binding) -> ModelSpec:
    """Replace an environment with an explicit model at the same interface.

    The substituted model must emit, at its bound interface, at least the
    event types the environment declared (after mapping).
    """
    env = next((e for e in m.environments if e.name == env_name), None)
    if env is None:
        raise ValueError(f"model {m.name!r} has no environment {env_name!r}")
    sub_emitted: set[str] = set()
    bound_sub_locs = {pb for _, pb in bind.pairs}
    for point in sub.interfaces:
        if point.location in bound_sub_locs:
            sub_emitted.update(bind.event_map.get(e, e) for e in point.emitted_event_types)
    missing = set(env.emitted_event_types) - sub_emitted
    if missing:
        raise InsufficientEventCoverage(missing)
    stripped = ModelSpec(
        name=m.name, graph=m.graph.copy(), kinds=dict(m.kinds), rules=dict(m.rules),
        processes=dict(m.processes), agents=list(m.agents),
        environments=[e for e in m.environments if e.name != env_name],
        initial_placement=dict(m.initial_placement),
        interfaces=list(m.interfaces), metrics=list(m.metrics),
        on_event=dict(m.on_event), duration_fns=dict(m.duration_fns),
        event_types=m.event_types, metadata=dict(m.metadata),
    )
    return compose_models(stripped, sub, bind)


# --- local reasoning --------------------------------------------------------


@dataclass(frozen=True)
class Scope:
    """A sub-model's footprint: location names and process (class) names."""

    locations: frozenset[str] = frozenset()
    processes: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "locations", frozenset(self.locations))
        object.__setattr__(self, "processes", frozenset(self.processes))
        if not self.locations and not self.processes:
            raise ValueError("scope must name at least one location or process")

    def covers(self, other: "Scope") -> bool:
        return other.locations <= self.locations and other.processes <= self.processes


def _base_name(qualified: str) -> str:
    # strip instance decorations: "bay#3" -> "bay", "triage#2.1" -> "triage"
    return qualified.split("#", 1)[0]


def _in_scope(record, scope: Scope) -> bool:
    if record.location and _base_name(record.location) in scope.locations:
        return True
    subject = record.subject
    if subject.startswith("env:"):
        subject = subject[4:]
    return _base_name(subject) in scope.processes


def project_trace(log: Sequence, scope: Scope,
                  known_locations: Iterable[str] | None = None,
                  known_processes: Iterable[str] | None = None):
    """Order-preserving restriction of a log to one scope."""
    if known_locations is not None:
        unknown = scope.locations - set(known_locations)
        if unknown:
            raise UnknownScopeName(f"unknown locations in scope: {sorted(unknown)}")
    if known_processes is not None:
        unknown = scope.processes - set(known_processes)
        if unknown:
            raise UnknownScopeName(f"unknown processes in scope: {sorted(unknown)}")
    return tuple(r for r in log if _in_scope(r, scope))


@dataclass(frozen=True)
class LocalProperty:
    """A decidable predicate over a finite trace, scoped to a sub-model.

    kinds: "count" (event_type, op in {<,<=,=,!=,>,>=}, value),
    "ordering" (first, later: event type `later` requires an earlier
    `first` for the same subject), "duration" (start_type, end_types,
    bound on the mean, optional scale), "absence" (event_type).
    """

    name: str
    scope: Scope
    kind: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("count", "ordering", "duration", "absence"):
            raise ValueError(f"unknown property kind {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))


@dataclass(frozen=True)
class Verdict:
    holds: bool
    witnesses: tuple = ()
    note: str = ""

    def __bool__(self):
        return self.holds


_COUNT_OPS = {
    "<": lambda x, y: x < y, "<=": lambda x, y: x <= y,
    "=": lambda x, y: x == y, "!=": lambda x, y: x != y,
    ">": lambda x, y: x > y, ">=": lambda x, y: x >= y,
}


def check_local_property(trace: Sequence, prop: LocalProperty) -> Verdict:
    """Decide a property on a finite trace, reporting earliest violations.

    The trace is first narrowed to the property's own scope, so a verdict
    never depends on records outside it — this is what makes checking on a
    wider projection agree with checking on the full log.
    """
    scoped = project_trace(trace, prop.scope)
    p = prop.params
    if prop.kind == "absence":
        for record in scoped:
            if record.event_type == p["event_type"]:
                return Verdict(False, (record,), f"{p['event_type']} occurred")
        return Verdict(True)
    if prop.kind == "count":
        op = p.get("op", "<=")
        bound = p["value"]
        n = 0
        crossing = None
        for record in scoped:
            if record.event_type == p["event_type"]:
                n += 1
                if crossing is None and op in ("<", "<=", "=") and not _COUNT_OPS[op](n, bound):
                    crossing = record
        ok = _COUNT_OPS[op](n, bound)
        if ok:
            return Verdict(True, note=f"count={n}")
        return Verdict(False, (crossing,) if crossing else (), f"count={n} violates {op} {bound}")
    if prop.kind == "ordering":
        first_seen: set[str] = set()
        seen_by_subject: dict[str, set[str]] = {}
        for record in scoped:
            subject_events = seen_by_subject.setdefault(record.subject, set())
            if record.event_type == p["later"] and p["first"] not in subject_events:
                return Verdict(False, (record,),
                               f"{p['later']} before any {p['first']} for {record.subject}")
            subject_events.add(record.event_type)
        return Verdict(True)
    if prop.kind == "duration":
        durations, unpaired = collect_durations(scoped, p["start_type"], p["end_types"])
        scale = p.get("scale", 1.0)
        stats = duration_stats([d / scale for d in durations], unpaired)
        bound = p["bound"]
        stat = p.get("stat", "mean")
        value = stats[stat]
        if stats["count"] == 0:
            return Verdict(True, note="no complete pairs")
        ok = value <= bound
        return Verdict(ok, note=f"{stat}={value:.6g} vs bound {bound}")
    raise AssertionError(prop.kind)
