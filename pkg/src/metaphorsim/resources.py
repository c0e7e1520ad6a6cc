"""Typed resource atoms, bundles, and the algebra over them.

Bundles are multisets of atoms.  Composition is multiset union, partial
where a declared kind incompatibility forbids co-location; the pre-order
is sub-multiset comparison over (kind, attributes), ignoring atom ids.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import DuplicateId, IncompatibleKinds, UnknownKind

#: attribute value types admitted by kind schemas
SCHEMA_TYPES = {"int": int, "float": float, "str": str, "bool": bool}


@dataclass(frozen=True)
class ResourceKind:
    """A named resource type with an attribute schema.

    ``incompatible_with`` lists kind names this kind may not share a
    location with; the relation is treated as symmetric regardless of
    which side declares it.
    """

    name: str
    attribute_schema: Mapping[str, str] = field(default_factory=dict)
    incompatible_with: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        for attr, tname in self.attribute_schema.items():
            if tname not in SCHEMA_TYPES:
                raise ValueError(
                    f"kind {self.name!r}: attribute {attr!r} has unknown type {tname!r}"
                )
        object.__setattr__(self, "incompatible_with", frozenset(self.incompatible_with))


@dataclass(frozen=True)
class ResourceAtom:
    """One concrete resource. ``id=None`` marks a template awaiting allocation."""

    kind: str
    id: int | None = None
    attributes: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "attributes", dict(self.attributes))

    def with_attributes(self, **updates) -> "ResourceAtom":
        merged = dict(self.attributes)
        merged.update(updates)
        return ResourceAtom(kind=self.kind, id=self.id, attributes=merged)

    def with_id(self, new_id: int) -> "ResourceAtom":
        return ResourceAtom(kind=self.kind, id=new_id, attributes=dict(self.attributes))

    def value_key(self):
        """Identity under the pre-order: kind plus attribute values, id ignored."""
        return (self.kind, tuple(sorted(self.attributes.items())))

    def conforms_to(self, kind: ResourceKind) -> bool:
        if kind.name != self.kind:
            return False
        for attr, value in self.attributes.items():
            tname = kind.attribute_schema.get(attr)
            if tname is None:
                return False
            expected = SCHEMA_TYPES[tname]
            if expected is float:
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    return False
            elif expected is int:
                if not isinstance(value, int) or isinstance(value, bool):
                    return False
            elif not isinstance(value, expected):
                return False
        return True


def _sort_key(atom: ResourceAtom):
    # concrete atoms first by id; templates after, ordered by value
    if atom.id is None:
        return (1, 0, atom.value_key())
    return (0, atom.id, atom.value_key())


class ResourceBundle:
    """An immutable multiset of resource atoms."""

    __slots__ = ("_atoms",)

    def __init__(self, atoms: Iterable[ResourceAtom] = ()):
        ordered = tuple(sorted(atoms, key=_sort_key))
        seen: set[int] = set()
        for a in ordered:
            if a.id is None:
                continue
            if a.id in seen:
                raise DuplicateId(f"atom id {a.id} appears twice in one bundle")
            seen.add(a.id)
        object.__setattr__(self, "_atoms", ordered)

    def __setattr__(self, name, value):
        raise AttributeError("ResourceBundle is immutable")

    @property
    def atoms(self) -> tuple[ResourceAtom, ...]:
        return self._atoms

    def __len__(self) -> int:
        return len(self._atoms)

    def __iter__(self) -> Iterator[ResourceAtom]:
        return iter(self._atoms)

    def __bool__(self) -> bool:
        return bool(self._atoms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ResourceBundle):
            return NotImplemented
        return self._atoms == other._atoms

    def __hash__(self):
        return hash(self._atoms)

    def __repr__(self) -> str:
        counts = Counter(a.kind for a in self._atoms)
        inner = ", ".join(f"{k}x{n}" for k, n in sorted(counts.items()))
        return f"ResourceBundle({inner})"

    def ids(self) -> frozenset[int]:
        return frozenset(a.id for a in self._atoms if a.id is not None)

    def kinds(self) -> frozenset[str]:
        return frozenset(a.kind for a in self._atoms)

    def count(self, kind: str) -> int:
        return sum(1 for a in self._atoms if a.kind == kind)

    def of_kind(self, kind: str) -> tuple[ResourceAtom, ...]:
        return tuple(a for a in self._atoms if a.kind == kind)

    def get(self, atom_id: int) -> ResourceAtom | None:
        for a in self._atoms:
            if a.id == atom_id:
                return a
        return None

    def with_added(self, atoms: Iterable[ResourceAtom]) -> "ResourceBundle":
        return ResourceBundle(self._atoms + tuple(atoms))

    def without_ids(self, ids: Iterable[int]) -> "ResourceBundle":
        drop = set(ids)
        return ResourceBundle(a for a in self._atoms if a.id not in drop)

    def value_counts(self) -> Counter:
        return Counter(a.value_key() for a in self._atoms)


EMPTY_BUNDLE = ResourceBundle()


def normalize_incompatibility(
    relation: Mapping[str, Iterable[str]] | Iterable[tuple[str, str]] | None,
) -> frozenset[frozenset[str]]:
    """Symmetric closure of a declared kind-incompatibility relation."""
    pairs: set[frozenset[str]] = set()
    if relation is None:
        return frozenset()
    if isinstance(relation, Mapping):
        for kind, others in relation.items():
            for other in others:
                pairs.add(frozenset((kind, other)))
    else:
        for k1, k2 in relation:
            pairs.add(frozenset((k1, k2)))
    return frozenset(pairs)


def compose_resources(
    a: ResourceBundle,
    b: ResourceBundle,
    incompatibility: Mapping[str, Iterable[str]] | Iterable[tuple[str, str]] | None = None,
) -> ResourceBundle:
    """Multiset union of two bundles; partial over declared incompatibilities.

    Raises DuplicateId when the operands share a concrete atom id and
    IncompatibleKinds when any kind pair across the operands is declared
    incompatible.  With an empty relation the operation is total, so the
    monoid is fully commutative.
    """
    shared = a.ids() & b.ids()
    if shared:
        raise DuplicateId(f"bundles share atom ids: {sorted(shared)}")
    relation = normalize_incompatibility(incompatibility)
    if relation:
        for k1 in a.kinds():
            for k2 in b.kinds():
                if frozenset((k1, k2)) in relation:
                    raise IncompatibleKinds(k1, k2)
    return ResourceBundle(a.atoms + b.atoms)


def resource_leq(a: ResourceBundle, b: ResourceBundle) -> bool:
    """True iff a is a sub-multiset of b under (kind, attributes) identity."""
    need = a.value_counts()
    have = b.value_counts()
    return all(have[key] >= n for key, n in need.items())


COMPARATORS = {
    "=": lambda x, y: x == y,
    "!=": lambda x, y: x != y,
    "<": lambda x, y: x < y,
    "<=": lambda x, y: x <= y,
    ">": lambda x, y: x > y,
    ">=": lambda x, y: x >= y,
}

# unicode aliases accepted in documents
_COMPARATOR_ALIASES = {"==": "=", "≠": "!=", "≤": "<=", "≥": ">="}


def canonical_comparator(op: str) -> str:
    op = _COMPARATOR_ALIASES.get(op, op)
    if op not in COMPARATORS:
        raise ValueError(f"unknown comparator {op!r}")
    return op


@dataclass(frozen=True)
class ResourcePattern:
    """Selects ``quantity`` atoms of one kind meeting attribute constraints.

    Constraints are (attribute, comparator, value) triples; the pseudo
    attribute ``id`` matches the atom id.  Matched atoms are bound under
    ``binding`` in the claiming process instance.
    """

    kind: str
    constraints: tuple[tuple[str, str, object], ...] = ()
    quantity: int = 1
    binding: str | None = None

    def __post_init__(self):
        if self.quantity < 1:
            raise ValueError(f"pattern quantity must be >= 1, got {self.quantity}")
        normalized = tuple(
            (attr, canonical_comparator(op), value) for attr, op, value in self.constraints
        )
        object.__setattr__(self, "constraints", normalized)

    def admits(self, atom: ResourceAtom) -> bool:
        if atom.kind != self.kind:
            return False
        for attr, op, value in self.constraints:
            actual = atom.id if attr == "id" else atom.attributes.get(attr)
            if actual is None:
                return False
            try:
                if not COMPARATORS[op](actual, value):
                    return False
            except TypeError:
                return False
        return True


def match_pattern(
    pattern: ResourcePattern,
    bundle: ResourceBundle,
    known_kinds: Iterable[str] | None = None,
) -> tuple[ResourceAtom, ...] | None:
    """Deterministically select atoms for a pattern, or None if insufficient.

    Candidates are taken in ascending id order, so identical inputs always
    yield identical bindings.
    """
    if known_kinds is not None and pattern.kind not in set(known_kinds):
        raise UnknownKind(f"pattern references unknown kind {pattern.kind!r}")
    chosen: list[ResourceAtom] = []
    for atom in bundle:  # bundle iteration is id-ascending
        if atom.id is None:
            continue
        if pattern.admits(atom):
            chosen.append(atom)
            if len(chosen) == pattern.quantity:
                return tuple(chosen)
    return None
