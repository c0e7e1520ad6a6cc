"""Process terms, actions, and the partial modification function.

A process term is a finite tree over nine constructors.  Actions name a
registered ModificationRule; applying a rule rewrites the bundle at one
location, and is undefined (returns None) wherever the rule's guard does
not hold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

from .distributions import Constant, DistributionSpec
from .errors import DuplicateId, EffectViolatesSchema
from .resources import ResourceAtom, ResourceBundle, ResourceKind, ResourcePattern

#: location sentinel resolved to the executing instance's position
HERE = "$here"
#: location sentinels resolved to the instance's private locations
CARRIED = "$carried"
MEMORY = "$memory"
#: pattern constraint value resolved to the instance's own marker id
SELF_MARKER = "$self"


class IdAllocator:
    """Run-scoped monotone id source; ids are never reused within a run."""

    def __init__(self, start: int = 1):
        self._next = start

    def next_id(self) -> int:
        value = self._next
        self._next += 1
        return value

    @property
    def high_water(self) -> int:
        return self._next


@dataclass(frozen=True)
class Action:
    """A named basic action with parameters and a sampled duration.

    ``event_type`` overrides the log record type (defaults to the action
    name); ``log_start`` additionally records a ``<event_type>_start``
    record when execution begins.
    """

    name: str
    parameters: Mapping[str, object] = field(default_factory=dict)
    duration: DistributionSpec = Constant(0.0)
    event_type: str | None = None
    at: str = HERE
    log_start: bool = False

    def __post_init__(self):
        object.__setattr__(self, "parameters", dict(self.parameters))

    @property
    def record_type(self) -> str:
        return self.event_type or self.name


GuardFn = Callable[[ResourceBundle, Mapping], bool]
# effect may return a bundle, or (bundle, details) to surface computed
# values into the event record
EffectFn = Callable[[ResourceBundle, Mapping, "EffectContext"], object]


@dataclass
class EffectContext:
    """What an effect may touch besides the local bundle: fresh ids only."""

    alloc: IdAllocator

    def new_atom(self, kind: str, **attributes) -> ResourceAtom:
        return ResourceAtom(kind=kind, id=self.alloc.next_id(), attributes=attributes)


@dataclass(frozen=True)
class ModificationRule:
    """Guarded local rewrite of one location's bundle."""

    action_name: str
    guard: GuardFn
    effect: EffectFn


def apply_modification(
    rule: ModificationRule,
    local: ResourceBundle,
    params: Mapping,
    ctx: EffectContext | None = None,
    kinds: Mapping[str, ResourceKind] | None = None,
) -> ResourceBundle | None:
    """Apply a rule where its guard holds; None (undefined) elsewhere.

    The input bundle is never mutated.  When a kind table is supplied the
    replacement bundle is checked against it and EffectViolatesSchema is
    raised on any nonconforming atom.
    """
    result = apply_modification_detailed(rule, local, params, ctx, kinds)
    if result is None:
        return None
    return result[0]


def apply_modification_detailed(
    rule: ModificationRule,
    local: ResourceBundle,
    params: Mapping,
    ctx: EffectContext | None = None,
    kinds: Mapping[str, ResourceKind] | None = None,
) -> tuple[ResourceBundle, dict] | None:
    """Like apply_modification but also returns effect-computed details."""
    if not rule.guard(local, params):
        return None
    if ctx is None:
        ctx = EffectContext(alloc=IdAllocator(start=10**9))
    try:
        raw = rule.effect(local, params, ctx)
    except DuplicateId as exc:
        raise EffectViolatesSchema(f"effect of {rule.action_name!r}: {exc}") from exc
    if isinstance(raw, tuple):
        replacement, details = raw
        details = dict(details)
    else:
        replacement, details = raw, {}
    if not isinstance(replacement, ResourceBundle):
        raise EffectViolatesSchema(
            f"effect of {rule.action_name!r} returned {type(replacement).__name__}"
        )
    try:
        ResourceBundle(replacement.atoms)
    except DuplicateId as exc:
        raise EffectViolatesSchema(f"effect of {rule.action_name!r}: {exc}") from exc
    if kinds is not None:
        for atom in replacement:
            kind = kinds.get(atom.kind)
            if kind is None or not atom.conforms_to(kind):
                raise EffectViolatesSchema(
                    f"effect of {rule.action_name!r} produced nonconforming atom "
                    f"{atom.kind!r} id={atom.id} attrs={dict(atom.attributes)}"
                )
    return replacement, details


# --- the process grammar -------------------------------------------------


@dataclass(frozen=True)
class Nil:
    pass


@dataclass(frozen=True)
class Prefix:
    action: Action
    then: "ProcessTerm" = Nil()


@dataclass(frozen=True)
class Seq:
    first: "ProcessTerm"
    second: "ProcessTerm"


@dataclass(frozen=True)
class Par:
    left: "ProcessTerm"
    right: "ProcessTerm"


@dataclass(frozen=True)
class Choose:
    branches: tuple[tuple[float, "ProcessTerm"], ...]

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if any(w < 0 for w, _ in self.branches):
            raise ValueError("Choose weights must be nonnegative")


@dataclass(frozen=True)
class Move:
    """Move pattern-matched atoms along an edge; skips when nothing matches.

    A full match relocates exactly ``pattern.quantity`` atoms; a partial or
    empty match moves nothing and execution continues (opportunistic
    semantics — contention is Claim's job).
    """

    pattern: ResourcePattern
    src: str
    dst: str
    then: "ProcessTerm" = Nil()
    event_type: str | None = None
    details: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Claim:
    """Take matched atoms into the instance's claimed set, blocking FIFO."""

    pattern: ResourcePattern
    at: str
    then: "ProcessTerm" = Nil()
    event_type: str | None = None


@dataclass(frozen=True)
class Release:
    """Deposit an earlier claim's atoms at a location."""

    binding: str
    at: str
    then: "ProcessTerm" = Nil()
    event_type: str | None = None


@dataclass(frozen=True)
class Spawn:
    process: str
    then: "ProcessTerm" = Nil()
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))


ProcessTerm = Union[Nil, Prefix, Seq, Par, Choose, Move, Claim, Release, Spawn]


def seq_all(*terms: ProcessTerm) -> ProcessTerm:
    """Right-fold a sequence; convenience for builders."""
    if not terms:
        return Nil()
    result = terms[-1]
    for term in reversed(terms[:-1]):
        result = Seq(term, result)
    return result


def par_all(*terms: ProcessTerm) -> ProcessTerm:
    """Right-fold a parallel composition; Nil when empty."""
    if not terms:
        return Nil()
    result = terms[-1]
    for term in reversed(terms[:-1]):
        result = Par(term, result)
    return result


def iter_subterms(term: ProcessTerm):
    """Yield every node of a term tree, preorder."""
    stack = [term]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Prefix):
            stack.append(node.then)
        elif isinstance(node, Seq):
            stack.extend((node.second, node.first))
        elif isinstance(node, Par):
            stack.extend((node.right, node.left))
        elif isinstance(node, Choose):
            stack.extend(branch for _, branch in node.branches)
        elif isinstance(node, (Move, Claim, Release, Spawn)):
            stack.append(node.then)


# no-op rule bodies shared by marker actions that only emit events
def always(local: ResourceBundle, params: Mapping) -> bool:
    return True


def identity_effect(local: ResourceBundle, params: Mapping, ctx: EffectContext):
    return local


def marker_rule(action_name: str) -> ModificationRule:
    """A rule that changes nothing; used by actions that exist for their event."""
    return ModificationRule(action_name=action_name, guard=always, effect=identity_effect)
