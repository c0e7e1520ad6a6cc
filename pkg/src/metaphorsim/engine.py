"""Deterministic seeded discrete-event executor.

One run is single-threaded and a pure function of (ModelSpec, RunConfig):
the future event list orders on (time, seq), every random draw comes from
a named stream under the master seed, and all ties break on allocation
order, so equal inputs give byte-identical logs.

Environments stop generating new arrivals at the horizon; already-running
processes drain to completion (flagged in run metadata when they pass the
horizon).
"""

from __future__ import annotations

import heapq
import time as _wallclock
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

from .distributions import Computed, Exponential, RngStream, sample
from .errors import EngineError
from .model import AgentSpec, EnvironmentSpec, ModelSpec, Payload, validate_model
from .resources import ResourceAtom, ResourceBundle, ResourcePattern, match_pattern
from .terms import (
    CARRIED,
    HERE,
    MEMORY,
    SELF_MARKER,
    Action,
    Choose,
    Claim,
    EffectContext,
    IdAllocator,
    Move,
    Nil,
    Par,
    Prefix,
    ProcessTerm,
    Release,
    Seq,
    Spawn,
    apply_modification_detailed,
)


@dataclass(frozen=True)
class EventRecord:
    time: float
    event_type: str
    location: str
    subject: str
    details: Mapping[str, object] = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "t": self.time,
            "type": self.event_type,
            "loc": self.location,
            "subject": self.subject,
            "details": dict(self.details),
        }


@dataclass(frozen=True)
class RunConfig:
    seed: int
    horizon: float
    overrides: Mapping[str, object] = field(default_factory=dict)
    metric_selection: tuple[str, ...] | None = None
    debug_conservation: bool = False
    max_events: int = 5_000_000

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        object.__setattr__(self, "overrides", dict(self.overrides))


@dataclass
class RunResult:
    config: dict
    log: tuple[EventRecord, ...]
    metrics: dict
    wall_time: float
    metadata: dict = field(default_factory=dict)
    initial_counts: dict = field(default_factory=dict)


class _Instance:
    __slots__ = (
        "id", "process", "subject", "term", "stack", "bindings", "claimed",
        "params", "aliases", "location", "marker_id", "stream_key", "parent",
        "open_children", "state", "enqueue_time",
    )

    def __init__(self, id, process, subject, term, params, location, stream_key,
                 aliases=None, marker_id=None, parent=None, bindings=None):
        self.id = id
        self.process = process
        self.subject = subject
        self.term: ProcessTerm = term
        self.stack: list[ProcessTerm] = []
        self.bindings: dict[str, tuple[ResourceAtom, ...]] = dict(bindings or {})
        self.claimed: dict[int, ResourceAtom] = {}
        self.params: dict = dict(params)
        self.aliases: dict[str, str] = dict(aliases or {})
        self.location = location
        self.marker_id = marker_id
        self.stream_key = stream_key
        self.parent: _Instance | None = parent
        self.open_children = 0
        self.state = "ready"  # ready | blocked | waiting_children | done


class _Waiter:
    __slots__ = ("instance", "pattern", "location", "since", "node")

    def __init__(self, instance, pattern, location, since, node):
        self.instance = instance
        self.pattern = pattern
        self.location = location
        self.since = since
        self.node: Claim = node


class _Engine:
    def __init__(self, m: ModelSpec, cfg: RunConfig):
        self.m = m
        self.cfg = cfg
        self.graph = m.graph.copy()  # extended with per-instance private clones
        self.store: dict[str, dict[int, ResourceAtom]] = {
            name: {} for name in self.graph.nodes
        }
        self.queue: list = []
        self.seq = 0
        self.now = 0.0
        self.alloc = IdAllocator()
        self.log: list[EventRecord] = []
        self.wait_queues: dict[str, list[_Waiter]] = {}
        self.streams: dict[str, RngStream] = {}
        self.instance_counts: Counter = Counter()
        self.live: set[_Instance] = set()
        self.clone_counts: Counter = Counter()
        self.destroyed_ids: set[int] = set()
        self.placed_ids: set[int] = set()
        self.alloc_start = 1
        self.capped = False
        self.initial_counts: dict = {}

    # -- plumbing ---------------------------------------------------------

    def _push(self, time: float, tag: str, payload):
        heapq.heappush(self.queue, (time, self.seq, tag, payload))
        self.seq += 1

    def _stream(self, key: str) -> RngStream:
        stream = self.streams.get(key)
        if stream is None:
            stream = RngStream(self.cfg.seed, key)
            self.streams[key] = stream
        return stream

    def _bundle_at(self, loc: str) -> ResourceBundle:
        return ResourceBundle(self.store[loc].values())

    def _log_event(self, event_type: str, location: str, subject: str, details: dict):
        self.log.append(EventRecord(self.now, event_type, location, subject, details))
        handler = self.m.on_event.get((location, event_type))
        if handler is not None:
            self._inject_payload(handler, location, origin=f"handler:{event_type}",
                                 extra_params=details)

    def _resolve_location(self, name: str, inst: _Instance) -> str:
        if name == HERE:
            return inst.location
        if name in (CARRIED, MEMORY):
            concrete = inst.aliases.get(name)
            if concrete is None:
                raise EngineError(f"instance {inst.id} has no {name} location", self.now, inst.id)
            return concrete
        if name.startswith("$binding:"):
            ref = name[len("$binding:"):]
            bname, _, attr = ref.partition(".")
            atoms = inst.bindings.get(bname)
            if not atoms:
                raise EngineError(f"location reference {name!r}: no binding {bname!r}", self.now, inst.id)
            value = atoms[0].attributes.get(attr)
            if not isinstance(value, str):
                raise EngineError(f"location reference {name!r}: attribute {attr!r} is {value!r}", self.now, inst.id)
            return self._resolve_location(value, inst)
        return inst.aliases.get(name, name)

    def _concretize_pattern(self, pattern: ResourcePattern, inst: _Instance) -> ResourcePattern:
        if not pattern.constraints:
            return pattern
        resolved = []
        changed = False
        for attr, op, value in pattern.constraints:
            if value == SELF_MARKER:
                value = inst.marker_id
                changed = True
            elif isinstance(value, str) and value.startswith("$param:"):
                value = inst.params.get(value[len("$param:"):])
                changed = True
            resolved.append((attr, op, value))
        if not changed:
            return pattern
        return ResourcePattern(
            kind=pattern.kind, constraints=tuple(resolved),
            quantity=pattern.quantity, binding=pattern.binding,
        )

    @staticmethod
    def _kind_counts(atoms) -> dict[str, int]:
        counts: Counter = Counter(a.kind for a in atoms)
        return dict(sorted(counts.items()))

    # -- setup ------------------------------------------------------------

    def setup(self):
        explicit = [a.id for b in self.m.initial_placement.values()
                    for a in b if a.id is not None]
        if explicit:
            self.alloc = IdAllocator(start=max(explicit) + 1)
        self.alloc_start = self.alloc.high_water
        for loc in sorted(self.m.initial_placement):
            bundle = self.m.initial_placement[loc]
            for atom in bundle:
                concrete = atom if atom.id is not None else atom.with_id(self.alloc.next_id())
                self.store[loc][concrete.id] = concrete
                self.placed_ids.add(concrete.id)
        for agent in self.m.agents:
            for _ in range(agent.count):
                start = agent.start or agent.carried
                self._instantiate_agent(agent, start, origin="init", params={})
        for env in self.m.environments:
            self._schedule_env(env, first=True)

    def _instantiate_agent(self, agent: AgentSpec, at: str, origin: str, params: dict) -> _Instance:
        self.clone_counts[agent.name] += 1
        n = self.clone_counts[agent.name]
        aliases = {}
        for template, sentinel in ((agent.carried, CARRIED), (agent.memory, MEMORY)):
            clone = f"{template}#{n}"
            if clone not in self.store:
                node = self.graph.nodes[template]
                self.graph.add_node(type(node)(name=clone, kind=node.kind, attributes=dict(node.attributes)))
                for src, dst in list(self.graph.edges):
                    if src == template:
                        self.graph.add_edge(clone, dst)
                    if dst == template:
                        self.graph.add_edge(src, clone)
                self.store[clone] = {}
            aliases[template] = clone
            aliases[sentinel] = clone
        marker = agent.marker.with_id(self.alloc.next_id())
        self.store[at][marker.id] = marker
        inst = self._new_instance(
            agent.behaviour, self.m.processes[agent.behaviour],
            params={**params, "agent": agent.name},
            location=at, stream_key=f"{origin}/{agent.name}",
            aliases=aliases, marker_id=marker.id,
        )
        self._push(self.now, "step", inst)
        return inst

    def _new_instance(self, process, term, params, location, stream_key,
                      aliases=None, marker_id=None, parent=None, bindings=None,
                      subject=None) -> _Instance:
        self.instance_counts[process] += 1
        iid = f"{process}#{self.instance_counts[process]}"
        inst = _Instance(
            id=iid, process=process, subject=subject or iid, term=term,
            params=params, location=location, stream_key=stream_key,
            aliases=aliases, marker_id=marker_id, parent=parent, bindings=bindings,
        )
        self.live.add(inst)
        return inst

    def _schedule_env(self, env: EnvironmentSpec, first: bool):
        if env.burst is not None:
            if first:
                at, count = env.burst
                for i in range(count):
                    self._push(at, "env", (env, i))
            return
        stream = self._stream(f"env/{env.name}")
        if env.phases is not None:
            t = self._next_phase_arrival(env, stream)
        else:
            gap = sample(env.inter_arrival, stream)
            if gap <= 0:
                raise EngineError(f"environment {env.name!r} produced nonpositive gap")
            t = self.now + gap
        if t <= self.cfg.horizon:
            self._push(t, "env", (env, None))

    def _next_phase_arrival(self, env: EnvironmentSpec, stream: RngStream) -> float:
        # piecewise-constant rate: sample within the current phase and
        # restart at each boundary (valid by memorylessness)
        t = self.now
        phases = sorted(env.phases)
        while t <= self.cfg.horizon:
            rate = 0.0
            boundary = self.cfg.horizon
            for i, (start, phase_rate) in enumerate(phases):
                if t >= start:
                    rate = phase_rate
                    boundary = phases[i + 1][0] if i + 1 < len(phases) else self.cfg.horizon
            if rate <= 0:
                upcoming = [s for s, _ in phases if s > t]
                if not upcoming:
                    return self.cfg.horizon + 1.0
                t = min(upcoming)
                continue
            candidate = t + sample(Exponential(rate), stream)
            if candidate <= boundary:
                return candidate
            t = boundary
            if boundary >= self.cfg.horizon:
                break
        return self.cfg.horizon + 1.0

    # -- payload / arrival handling ---------------------------------------

    def _env_arrival(self, env: EnvironmentSpec, burst_index):
        self._log_event(env.arrival_type, env.interface, f"env:{env.name}", {"op": "arrival"})
        self._inject_payload(env.payload, env.interface, origin=f"env:{env.name}")
        if burst_index is None:
            self._schedule_env(env, first=False)

    def _inject_payload(self, payload: Payload, at: str, origin: str, extra_params=None):
        params = dict(payload.params)
        if extra_params:
            for key, value in extra_params.items():
                params.setdefault(key, value)
        agent_inst = None
        if payload.agent is not None:
            agent = self.m.agent_class(payload.agent)
            agent_inst = self._instantiate_agent(agent, at, origin, params)
        placed: dict[str, list[ResourceAtom]] = {}
        for template, placement in payload.templates:
            atom = template.with_id(self.alloc.next_id())
            if placement == "interface":
                loc = at
            elif placement in (CARRIED, MEMORY):
                if agent_inst is None:
                    raise EngineError(f"payload places {placement} atoms without an agent", self.now)
                loc = agent_inst.aliases[placement]
            else:
                loc = placement
            self.store[loc][atom.id] = atom
            placed.setdefault(loc, []).append(atom)
        for loc in sorted(placed):
            atoms = placed[loc]
            self._log_event("place", loc, origin, {
                "op": "place", "ids": sorted(a.id for a in atoms),
                "kinds": self._kind_counts(atoms),
            })
            self._wake(loc)
        if payload.process is not None:
            inst = self._new_instance(
                payload.process, self.m.processes[payload.process],
                params=params, location=at,
                stream_key=f"{origin}/{payload.process}",
            )
            if agent_inst is not None:
                inst.aliases = agent_inst.aliases
                inst.marker_id = agent_inst.marker_id
            self._push(self.now, "step", inst)

    # -- instruction dispatch ----------------------------------------------

    def _run(self, inst: _Instance):
        if inst.state == "done":
            return
        inst.state = "ready"
        while True:
            term = inst.term
            if isinstance(term, Nil):
                if inst.stack:
                    inst.term = inst.stack.pop()
                    continue
                self._finish(inst)
                return
            if isinstance(term, Seq):
                inst.stack.append(term.second)
                inst.term = term.first
                continue
            if isinstance(term, Prefix):
                inst.term = term.then
                action = term.action
                duration = self._duration(action, inst)
                if action.log_start:
                    loc = self._resolve_location(action.at, inst)
                    self._log_event(f"{action.record_type}_start", loc, inst.subject,
                                    self._action_details(action, inst))
                self._push(self.now + duration, "action", (inst, action))
                return
            if isinstance(term, Par):
                inst.term = Nil()
                inst.state = "waiting_children"
                inst.open_children = 2
                for slot, branch in (("1", term.left), ("2", term.right)):
                    child = self._new_instance(
                        inst.process, branch, params=dict(inst.params),
                        location=inst.location, stream_key=inst.stream_key,
                        aliases=inst.aliases, marker_id=inst.marker_id,
                        parent=inst, bindings=inst.bindings,
                        subject=inst.subject,
                    )
                    self._push(self.now, "step", child)
                return
            if isinstance(term, Choose):
                total = sum(w for w, _ in term.branches)
                u = self._stream(inst.stream_key).uniform01() * total
                acc = 0.0
                chosen = term.branches[-1][1]
                for weight, branch in term.branches:
                    acc += weight
                    if u < acc:
                        chosen = branch
                        break
                inst.term = chosen
                continue
            if isinstance(term, Move):
                self._do_move(inst, term)
                inst.term = term.then
                continue
            if isinstance(term, Claim):
                pattern = self._concretize_pattern(term.pattern, inst)
                loc = self._resolve_location(term.at, inst)
                matched = match_pattern(pattern, self._bundle_at(loc))
                if matched is not None:
                    self._fulfill_claim(inst, term, pattern, loc, matched, wait=0.0)
                    inst.term = term.then
                    continue
                waiter = _Waiter(inst, pattern, loc, self.now, term)
                self.wait_queues.setdefault(loc, []).append(waiter)
                inst.state = "blocked"
                return
            if isinstance(term, Release):
                self._do_release(inst, term)
                inst.term = term.then
                continue
            if isinstance(term, Spawn):
                child = self._new_instance(
                    term.process, self.m.processes[term.process],
                    params={**inst.params, **term.params},
                    location=inst.location,
                    stream_key=inst.stream_key.rsplit("/", 1)[0] + f"/{term.process}",
                )
                self._push(self.now, "step", child)
                inst.term = term.then
                continue
            raise EngineError(f"unknown term node {term!r}", self.now, inst.id)

    def _duration(self, action: Action, inst: _Instance) -> float:
        dist = action.duration
        if isinstance(dist, Computed):
            fn = self.m.duration_fns[dist.fn_name]
            loc = self._resolve_location(action.at, inst)
            params = {**inst.params, **action.parameters, **dist.params}
            value = float(fn(self._bundle_at(loc), params, inst.bindings))
            if value < 0:
                raise EngineError(f"duration fn {dist.fn_name!r} returned {value}", self.now, inst.id)
            return value
        return max(0.0, sample(dist, self._stream(inst.stream_key)))

    def _action_details(self, action: Action, inst: _Instance) -> dict:
        details = {"op": "action", "action": action.name}
        for key, value in action.parameters.items():
            if isinstance(value, (int, float, str, bool)):
                details[key] = value
        for key in action.parameters.get("detail_keys", ()):  # pragma: no cover
            details[key] = inst.params.get(key)
        return details

    def _complete_action(self, inst: _Instance, action: Action):
        loc = self._resolve_location(action.at, inst)
        rule = self.m.rules[action.name]
        params = {**inst.params, **action.parameters}
        before = self._bundle_at(loc)
        outcome = apply_modification_detailed(
            rule, before, params, ctx=EffectContext(self.alloc), kinds=self.m.kinds,
        )
        if outcome is None:
            self._log_event(f"{action.record_type}_undefined", loc, inst.subject,
                            {"op": "noop", "action": action.name})
        else:
            after, extra = outcome
            details = self._action_details(action, inst)
            details.update(extra)
            before_ids = before.ids()
            after_ids = after.ids()
            created = sorted(after_ids - before_ids)
            destroyed = sorted(before_ids - after_ids)
            if created:
                details["created"] = created
                details["created_kinds"] = self._kind_counts(
                    [after.get(i) for i in created])
            if destroyed:
                details["destroyed"] = destroyed
                details["destroyed_kinds"] = self._kind_counts(
                    [before.get(i) for i in destroyed])
                self.destroyed_ids.update(destroyed)
            self.store[loc] = {a.id: a for a in after}
            if inst.id != inst.subject:
                details["instance"] = inst.id
            self._log_event(action.record_type, loc, inst.subject, details)
            self._wake(loc)
        self._run(inst)

    def _do_move(self, inst: _Instance, term: Move):
        src = self._resolve_location(term.src, inst)
        dst = self._resolve_location(term.dst, inst)
        if not self.graph.has_edge(src, dst):
            raise EngineError(f"Move along missing edge {src!r} -> {dst!r}", self.now, inst.id)
        pattern = self._concretize_pattern(term.pattern, inst)
        matched = match_pattern(pattern, self._bundle_at(src))
        if matched is None:
            return
        for atom in matched:
            del self.store[src][atom.id]
            self.store[dst][atom.id] = atom
            if atom.id == inst.marker_id:
                inst.location = dst
        details = {
            "op": "move", "from": src, "to": dst,
            "ids": sorted(a.id for a in matched),
            "kinds": self._kind_counts(matched),
        }
        details.update(term.details)
        if inst.id != inst.subject:
            details["instance"] = inst.id
        self._log_event(term.event_type or "move", dst, inst.subject, details)
        self._wake(dst)

    def _fulfill_claim(self, inst: _Instance, node: Claim, pattern: ResourcePattern,
                       loc: str, matched, wait: float):
        for atom in matched:
            del self.store[loc][atom.id]
            inst.claimed[atom.id] = atom
        if pattern.binding:
            inst.bindings[pattern.binding] = tuple(matched)
        details = {
            "op": "claim", "at": loc, "ids": sorted(a.id for a in matched),
            "kinds": self._kind_counts(matched), "wait": wait,
        }
        if pattern.binding:
            details["binding"] = pattern.binding
        if inst.id != inst.subject:
            details["instance"] = inst.id
        self._log_event(node.event_type or "claim", loc, inst.subject, details)

    def _do_release(self, inst: _Instance, term: Release):
        atoms = inst.bindings.pop(term.binding, None)
        if atoms is None:
            raise EngineError(f"Release of unknown binding {term.binding!r}", self.now, inst.id)
        loc = self._resolve_location(term.at, inst)
        released = []
        for atom in atoms:
            live = inst.claimed.pop(atom.id, None)
            if live is None:
                continue
            self.store[loc][live.id] = live
            released.append(live)
        details = {
            "op": "release", "at": loc, "ids": sorted(a.id for a in released),
            "kinds": self._kind_counts(released), "binding": term.binding,
        }
        if inst.id != inst.subject:
            details["instance"] = inst.id
        self._log_event(term.event_type or "release", loc, inst.subject, details)
        self._wake(loc)

    def _wake(self, loc: str):
        waiters = self.wait_queues.get(loc)
        if not waiters:
            return
        still_waiting = []
        woke = []
        for waiter in waiters:
            matched = match_pattern(waiter.pattern, self._bundle_at(loc))
            if matched is None:
                still_waiting.append(waiter)
                continue
            self._fulfill_claim(waiter.instance, waiter.node, waiter.pattern,
                                loc, matched, wait=self.now - waiter.since)
            waiter.instance.term = waiter.node.then
            woke.append(waiter.instance)
        self.wait_queues[loc] = still_waiting
        for inst in woke:
            self._push(self.now, "step", inst)

    def _finish(self, inst: _Instance):
        inst.state = "done"
        self.live.discard(inst)
        if inst.claimed:
            leftovers = sorted(inst.claimed.values(), key=lambda a: a.id)
            for atom in leftovers:
                self.store[inst.location][atom.id] = atom
            inst.claimed.clear()
            self._log_event("auto_release", inst.location, inst.subject, {
                "op": "release", "at": inst.location,
                "ids": [a.id for a in leftovers],
                "kinds": self._kind_counts(leftovers),
                "binding": None,
            })
            self._wake(inst.location)
        parent = inst.parent
        if parent is not None:
            parent.open_children -= 1
            if parent.open_children == 0 and parent.state == "waiting_children":
                parent.state = "ready"
                self._push(self.now, "step", parent)

    # -- main loop ----------------------------------------------------------

    def run(self) -> tuple[list[EventRecord], dict]:
        self.setup()
        self.initial_counts = initial_counts_of(self)
        if self.cfg.horizon > 0:
            while self.queue:
                if len(self.log) >= self.cfg.max_events:
                    self.capped = True
                    self.log.append(EventRecord(
                        self.now, "event_cap_reached", "", "engine",
                        {"op": "terminal", "max_events": self.cfg.max_events}))
                    break
                t, _, tag, payload = heapq.heappop(self.queue)
                self.now = t
                if tag == "step":
                    self._run(payload)
                elif tag == "action":
                    inst, action = payload
                    self._complete_action(inst, action)
                elif tag == "env":
                    env, burst_index = payload
                    self._env_arrival(env, burst_index)
                if self.cfg.debug_conservation:
                    self._check_conservation()
            blocked = [i for i in self.live if i.state in ("blocked", "waiting_children")]
            if blocked and not self.capped:
                self.log.append(EventRecord(
                    self.now, "deadlock", "", "engine",
                    {"op": "terminal",
                     "blocked": sorted(i.id for i in blocked)}))
        metadata = {
            "drained_beyond_horizon": bool(self.log) and self.log[-1].time > self.cfg.horizon,
            "final_time": self.now,
            "event_cap_reached": self.capped,
        }
        return self.log, metadata

    def _check_conservation(self):
        seen: list[int] = []
        for atoms in self.store.values():
            seen.extend(atoms.keys())
        for inst in self.live:
            seen.extend(inst.claimed.keys())
        counts = Counter(seen)
        duplicated = [i for i, n in counts.items() if n > 1]
        if duplicated:
            raise EngineError(f"atom ids present twice: {sorted(duplicated)}", self.now)
        expected = (self.placed_ids
                    | set(range(self.alloc_start, self.alloc.high_water))
                    ) - self.destroyed_ids
        if set(seen) != expected:
            missing = expected - set(seen)
            extra = set(seen) - expected
            raise EngineError(
                f"conservation violated: missing={sorted(missing)} extra={sorted(extra)}",
                self.now)


def initial_counts_of(engine: _Engine) -> dict:
    counts: Counter = Counter()
    for loc, atoms in engine.store.items():
        for atom in atoms.values():
            counts[(loc, atom.kind)] += 1
    return dict(counts)


def run_model(m: ModelSpec, cfg: RunConfig) -> RunResult:
    """Execute one seeded run; deterministic in (m, cfg)."""
    from .metrics import summarize_run  # local import to avoid a cycle

    diagnostics = validate_model(m)
    if diagnostics:
        raise EngineError(
            "model failed validation: " + "; ".join(str(d) for d in diagnostics))
    started = _wallclock.perf_counter()
    engine = _Engine(m, cfg)
    log, metadata = engine.run()
    result = RunResult(
        config={
            "model": m.name,
            "seed": cfg.seed,
            "horizon": cfg.horizon,
            "overrides": dict(cfg.overrides),
        },
        log=tuple(log),
        metrics={},
        wall_time=_wallclock.perf_counter() - started,
        metadata=metadata,
        initial_counts=engine.initial_counts,
    )
    decls = m.metrics
    if cfg.metric_selection is not None:
        wanted = set(cfg.metric_selection)
        decls = [d for d in decls if d.name in wanted]
    result.metrics = summarize_run(result, decls, horizon=cfg.horizon)
    return result
