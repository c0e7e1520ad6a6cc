"""Whole-model specification: location graphs, agents, environments, metrics.

A ModelSpec is a passive description; running it is the engine's job.
validate_model collects every diagnostic rather than stopping at the
first, so a broken document reports all its problems at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping

from .distributions import Computed, DistributionSpec, Exponential
from .resources import ResourceAtom, ResourceBundle, ResourceKind, ResourcePattern
from .terms import (
    CARRIED,
    HERE,
    MEMORY,
    Action,
    Choose,
    Claim,
    ModificationRule,
    Move,
    Nil,
    Par,
    Prefix,
    ProcessTerm,
    Release,
    Seq,
    Spawn,
)

LOCATION_KINDS = ("physical", "logical", "abstract")


@dataclass(frozen=True)
class LocationNode:
    name: str
    kind: str = "physical"
    attributes: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LOCATION_KINDS:
            raise ValueError(f"location kind must be one of {LOCATION_KINDS}")
        object.__setattr__(self, "attributes", dict(self.attributes))


class LocationGraph:
    """Directed graph of named locations; edges constrain resource movement."""

    def __init__(self, nodes: Iterable[LocationNode] = (), edges: Iterable[tuple[str, str]] = ()):
        self.nodes: dict[str, LocationNode] = {}
        for node in nodes:
            if node.name in self.nodes:
                raise ValueError(f"duplicate location name {node.name!r}")
            self.nodes[node.name] = node
        self.edges: set[tuple[str, str]] = set(tuple(e) for e in edges)

    def has_edge(self, src: str, dst: str) -> bool:
        return (src, dst) in self.edges or src == dst

    def add_node(self, node: LocationNode):
        self.nodes[node.name] = node

    def add_edge(self, src: str, dst: str, both_ways: bool = False):
        self.edges.add((src, dst))
        if both_ways:
            self.edges.add((dst, src))

    def copy(self) -> "LocationGraph":
        return LocationGraph(self.nodes.values(), self.edges)

    def __contains__(self, name: str) -> bool:
        return name in self.nodes

    def __eq__(self, other):
        if not isinstance(other, LocationGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges


@dataclass(frozen=True)
class Payload:
    """What one environment arrival (or accepted event) injects into a run.

    ``templates`` are (atom template, placement) pairs where placement is a
    location name or one of the carried/memory sentinels.  ``agent`` names
    an agent class to instantiate; its behaviour process then runs bound to
    a fresh marker.  ``process`` starts a plain instance.
    """

    process: str | None = None
    templates: tuple[tuple[ResourceAtom, str], ...] = ()
    agent: str | None = None
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))


@dataclass(frozen=True)
class AgentSpec:
    """An agent class: a position marker, a behaviour, and private locations."""

    name: str
    marker: ResourceAtom
    behaviour: str
    carried: str
    memory: str
    count: int = 0
    start: str | None = None


@dataclass(frozen=True)
class EnvironmentSpec:
    """Stochastic event source at an interface location.

    Arrival timing comes from ``inter_arrival``, or from ``phases`` (a
    piecewise-constant rate profile of (start_hour, rate) segments), or
    from ``burst`` (exactly n simultaneous arrivals at one instant).
    """

    name: str
    interface: str
    inter_arrival: DistributionSpec | None = None
    payload: Payload = Payload()
    emitted_event_types: frozenset[str] = frozenset()
    event_type: str | None = None
    phases: tuple[tuple[float, float], ...] | None = None
    burst: tuple[float, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "emitted_event_types", frozenset(self.emitted_event_types))
        if self.phases is not None:
            object.__setattr__(self, "phases", tuple(tuple(p) for p in self.phases))

    @property
    def arrival_type(self) -> str:
        if self.event_type:
            return self.event_type
        if self.emitted_event_types:
            return sorted(self.emitted_event_types)[0]
        return f"{self.name}_arrival"


@dataclass(frozen=True)
class InterfacePoint:
    location: str
    accepted_event_types: frozenset[str] = frozenset()
    emitted_event_types: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "accepted_event_types", frozenset(self.accepted_event_types))
        object.__setattr__(self, "emitted_event_types", frozenset(self.emitted_event_types))


@dataclass(frozen=True)
class MetricDecl:
    """Declares one run metric.

    kind "counter": params event_type, optional where (details equality
    filter), optional sum_field (sum a numeric details field instead of
    counting records).
    kind "duration": params start_type, end_types (list; earliest match
    ends a pair), optional scale (divide hours by this).
    kind "time_weighted": params resource_kind, location.
    kind "field_stats": params event_type, detail_field, optional where —
    summary statistics over a numeric details field.
    """

    name: str
    kind: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("counter", "duration", "time_weighted", "field_stats"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))


@dataclass
class ModelSpec:
    """A complete model: graph, kinds, rules, processes, agents, environments."""

    name: str
    graph: LocationGraph
    kinds: dict[str, ResourceKind] = field(default_factory=dict)
    rules: dict[str, ModificationRule] = field(default_factory=dict)
    processes: dict[str, ProcessTerm] = field(default_factory=dict)
    agents: list[AgentSpec] = field(default_factory=list)
    environments: list[EnvironmentSpec] = field(default_factory=list)
    initial_placement: dict[str, ResourceBundle] = field(default_factory=dict)
    interfaces: list[InterfacePoint] = field(default_factory=list)
    metrics: list[MetricDecl] = field(default_factory=list)
    on_event: dict[tuple[str, str], Payload] = field(default_factory=dict)
    duration_fns: dict[str, Callable] = field(default_factory=dict)
    event_types: frozenset[str] = frozenset()
    metadata: dict = field(default_factory=dict)

    def incompatibility(self):
        pairs = set()
        for kind in self.kinds.values():
            for other in kind.incompatible_with:
                pairs.add(frozenset((kind.name, other)))
        return frozenset(pairs)

    def agent_class(self, name: str) -> AgentSpec | None:
        for agent in self.agents:
            if agent.name == name:
                return agent
        return None

    def private_locations(self) -> set[str]:
        out = set()
        for agent in self.agents:
            out.add(agent.carried)
            out.add(agent.memory)
        return out


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    where: str = ""

    def __str__(self):
        prefix = f"[{self.code}]"
        if self.where:
            prefix += f" {self.where}:"
        return f"{prefix} {self.message}"


_LOCATION_SENTINELS = (HERE, CARRIED, MEMORY)


def _resolvable_location(name: str) -> bool:
    return name.startswith("$binding:") or name in _LOCATION_SENTINELS


def _walk_term_paths(term: ProcessTerm, bound: frozenset[str], diags, where: str, m: ModelSpec):
    """Check name resolution and claim/release pairing along every path."""
    if isinstance(term, Nil):
        return
    if isinstance(term, Prefix):
        action = term.action
        if action.name not in m.rules:
            diags.append(Diagnostic("UnknownRule", f"action {action.name!r} has no registered rule", where))
        if isinstance(action.duration, Computed) and action.duration.fn_name not in m.duration_fns:
            diags.append(Diagnostic("UnknownDurationFn", f"duration fn {action.duration.fn_name!r} not registered", where))
        if action.at not in m.graph.nodes and not _resolvable_location(action.at):
            diags.append(Diagnostic("UnknownLocation", f"action {action.name!r} at unknown location {action.at!r}", where))
        _walk_term_paths(term.then, bound, diags, where, m)
        return
    if isinstance(term, Seq):
        # bindings made in `first` are visible in `second`; collect them
        _walk_term_paths(term.first, bound, diags, where, m)
        _walk_term_paths(term.second, bound | _bindings_made(term.first), diags, where, m)
        return
    if isinstance(term, Par):
        _walk_term_paths(term.left, bound, diags, where, m)
        _walk_term_paths(term.right, bound, diags, where, m)
        return
    if isinstance(term, Choose):
        total = sum(w for w, _ in term.branches)
        if total <= 0:
            diags.append(Diagnostic("NonPositiveWeights", "Choose weights sum to 0", where))
        for _, branch in term.branches:
            _walk_term_paths(branch, bound, diags, where, m)
        return
    if isinstance(term, Move):
        for loc, role in ((term.src, "source"), (term.dst, "destination")):
            if loc not in m.graph.nodes and not _resolvable_location(loc):
                diags.append(Diagnostic("UnknownLocation", f"Move {role} {loc!r} does not exist", where))
        if term.pattern.kind not in m.kinds:
            diags.append(Diagnostic("UnknownKind", f"Move pattern kind {term.pattern.kind!r}", where))
        _walk_term_paths(term.then, bound, diags, where, m)
        return
    if isinstance(term, Claim):
        if term.at not in m.graph.nodes and not _resolvable_location(term.at):
            diags.append(Diagnostic("UnknownLocation", f"Claim at unknown location {term.at!r}", where))
        if term.pattern.kind not in m.kinds:
            diags.append(Diagnostic("UnknownKind", f"Claim pattern kind {term.pattern.kind!r}", where))
        new_bound = bound | ({term.pattern.binding} if term.pattern.binding else frozenset())
        _walk_term_paths(term.then, new_bound, diags, where, m)
        return
    if isinstance(term, Release):
        if term.at not in m.graph.nodes and not _resolvable_location(term.at):
            diags.append(Diagnostic("UnknownLocation", f"Release at unknown location {term.at!r}", where))
        if term.binding not in bound:
            diags.append(Diagnostic("ReleaseWithoutClaim", f"Release of {term.binding!r} has no earlier Claim on this path", where))
        _walk_term_paths(term.then, bound, diags, where, m)
        return
    if isinstance(term, Spawn):
        if term.process not in m.processes:
            diags.append(Diagnostic("UnknownProcess", f"Spawn of unknown process {term.process!r}", where))
        _walk_term_paths(term.then, bound, diags, where, m)
        return
    diags.append(Diagnostic("UnknownTerm", f"unrecognised term node {term!r}", where))


def _bindings_made(term: ProcessTerm) -> frozenset[str]:
    names = set()
    stack = [term]
    while stack:
        node = stack.pop()
        if isinstance(node, Claim) and node.pattern.binding:
            names.add(node.pattern.binding)
        if isinstance(node, Prefix):
            stack.append(node.then)
        elif isinstance(node, Seq):
            stack.extend((node.first, node.second))
        elif isinstance(node, Par):
            stack.extend((node.left, node.right))
        elif isinstance(node, Choose):
            stack.extend(b for _, b in node.branches)
        elif isinstance(node, (Move, Claim, Release, Spawn)):
            stack.append(node.then)
    return frozenset(names)


def validate_model(m: ModelSpec) -> list[Diagnostic]:
    """Check every model invariant; returns all diagnostics, empty when ok."""
    diags: list[Diagnostic] = []

    for src, dst in m.graph.edges:
        for endpoint in (src, dst):
            if endpoint not in m.graph.nodes:
                diags.append(Diagnostic("UnknownLocation", f"edge endpoint {endpoint!r} names no node", "graph"))

    for kind in m.kinds.values():
        for other in kind.incompatible_with:
            if other not in m.kinds:
                diags.append(Diagnostic("UnknownKind", f"kind {kind.name!r} declares incompatibility with unknown {other!r}", "kinds"))

    for pname, term in m.processes.items():
        _walk_term_paths(term, frozenset(), diags, f"process {pname!r}", m)

    for agent in m.agents:
        for loc, label in ((agent.carried, "carried"), (agent.memory, "memory")):
            if loc not in m.graph.nodes:
                diags.append(Diagnostic("UnknownLocation", f"agent {agent.name!r} {label} location {loc!r} missing", "agents"))
        if agent.start is not None and agent.start not in m.graph.nodes:
            diags.append(Diagnostic("UnknownLocation", f"agent {agent.name!r} start location {agent.start!r} missing", "agents"))
        if agent.behaviour not in m.processes:
            diags.append(Diagnostic("UnknownProcess", f"agent {agent.name!r} behaviour {agent.behaviour!r} missing", "agents"))
        if agent.marker.kind not in m.kinds:
            diags.append(Diagnostic("UnknownKind", f"agent {agent.name!r} marker kind {agent.marker.kind!r}", "agents"))

    env_names = set()
    for env in m.environments:
        if env.name in env_names:
            diags.append(Diagnostic("DuplicateName", f"environment {env.name!r} declared twice", "environments"))
        env_names.add(env.name)
        if env.interface not in m.graph.nodes:
            diags.append(Diagnostic("UnknownLocation", f"environment {env.name!r} interface {env.interface!r} missing", "environments"))
        if env.inter_arrival is None and env.phases is None and env.burst is None:
            diags.append(Diagnostic("NoArrivalSpec", f"environment {env.name!r} has no timing specification", "environments"))
        _check_payload(env.payload, m, diags, f"environment {env.name!r}")

    for (loc, event_type), payload in m.on_event.items():
        if loc not in m.graph.nodes:
            diags.append(Diagnostic("UnknownLocation", f"on_event location {loc!r} missing", "on_event"))
        _check_payload(payload, m, diags, f"on_event {event_type!r}@{loc!r}")

    for point in m.interfaces:
        if point.location not in m.graph.nodes:
            diags.append(Diagnostic("UnknownLocation", f"interface location {point.location!r} missing", "interfaces"))

    for loc, bundle in m.initial_placement.items():
        if loc not in m.graph.nodes:
            diags.append(Diagnostic("UnknownLocation", f"initial placement at unknown location {loc!r}", "placement"))
        for atom in bundle:
            kind = m.kinds.get(atom.kind)
            if kind is None:
                diags.append(Diagnostic("UnknownKind", f"placed atom of unknown kind {atom.kind!r} at {loc!r}", "placement"))
            elif not atom.conforms_to(kind):
                diags.append(Diagnostic("SchemaViolation", f"atom of kind {atom.kind!r} at {loc!r} violates its schema", "placement"))

    metric_names = set()
    for metric in m.metrics:
        if metric.name in metric_names:
            diags.append(Diagnostic("DuplicateName", f"metric {metric.name!r} declared twice", "metrics"))
        metric_names.add(metric.name)
        if m.event_types:
            referenced = []
            if metric.kind == "counter":
                referenced = [metric.params.get("event_type")]
            elif metric.kind == "duration":
                referenced = [metric.params.get("start_type"), *metric.params.get("end_types", [])]
            for event_type in referenced:
                if event_type and event_type not in m.event_types:
                    diags.append(Diagnostic("UnknownMetricEvent", f"metric {metric.name!r} references undeclared event type {event_type!r}", "metrics"))
        if metric.kind == "time_weighted":
            if metric.params.get("location") not in m.graph.nodes:
                diags.append(Diagnostic("UnknownLocation", f"metric {metric.name!r} location missing", "metrics"))
            if metric.params.get("resource_kind") not in m.kinds:
                diags.append(Diagnostic("UnknownKind", f"metric {metric.name!r} resource kind missing", "metrics"))

    return diags


def _check_payload(payload: Payload, m: ModelSpec, diags: list, where: str):
    if payload.process is not None and payload.process not in m.processes:
        diags.append(Diagnostic("UnknownProcess", f"payload process {payload.process!r} missing", where))
    if payload.agent is not None and m.agent_class(payload.agent) is None:
        diags.append(Diagnostic("UnknownAgent", f"payload agent class {payload.agent!r} missing", where))
    for atom, placement in payload.templates:
        if atom.kind not in m.kinds:
            diags.append(Diagnostic("UnknownKind", f"payload template kind {atom.kind!r}", where))
        if placement not in m.graph.nodes and placement not in (CARRIED, MEMORY, "interface"):
            diags.append(Diagnostic("UnknownLocation", f"payload placement {placement!r}", where))
