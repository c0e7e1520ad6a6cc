"""Resource algebra: monoid laws, pre-order, pattern matching."""

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metaphorsim.errors import DuplicateId, IncompatibleKinds, UnknownKind
from metaphorsim.resources import (
    EMPTY_BUNDLE,
    ResourceAtom,
    ResourceBundle,
    ResourcePattern,
    compose_resources,
    match_pattern,
    resource_leq,
)


def atoms(kind, n, start_id=1, **attrs):
    return [ResourceAtom(kind, i, attrs) for i in range(start_id, start_id + n)]


def test_compose_is_multiset_union():
    a = ResourceBundle(atoms("usb", 2))
    b = ResourceBundle(atoms("usb", 1, start_id=10) + atoms("cd", 1, start_id=20))
    c = compose_resources(a, b)
    assert c.count("usb") == 3
    assert c.count("cd") == 1
    assert len(c) == 4


def test_compose_identity():
    b = ResourceBundle(atoms("cd", 3))
    assert compose_resources(EMPTY_BUNDLE, b) == b
    assert compose_resources(b, EMPTY_BUNDLE) == b


def test_compose_incompatible_kinds():
    a = ResourceBundle([ResourceAtom("wet_document", 1)])
    b = ResourceBundle([ResourceAtom("furnace", 2)])
    with pytest.raises(IncompatibleKinds):
        compose_resources(a, b, {"wet_document": {"furnace"}})
    # and symmetrically
    with pytest.raises(IncompatibleKinds):
        compose_resources(b, a, {"wet_document": {"furnace"}})


def test_compose_rejects_shared_ids():
    a = ResourceBundle([ResourceAtom("usb", 1)])
    b = ResourceBundle([ResourceAtom("cd", 1)])
    with pytest.raises(DuplicateId):
        compose_resources(a, b)


def test_leq_submultiset():
    small = ResourceBundle(atoms("usb", 1))
    big = ResourceBundle(atoms("usb", 2, start_id=5) + atoms("cd", 1, start_id=9))
    assert resource_leq(small, big)
    assert not resource_leq(big, small)


def test_leq_reflexive_and_multiplicity():
    b = ResourceBundle(atoms("cd", 2))
    assert resource_leq(b, b)
    one = ResourceBundle(atoms("cd", 1, start_id=7))
    assert resource_leq(one, b)
    assert not resource_leq(b, one)


def test_leq_compares_attributes_not_ids():
    a = ResourceBundle([ResourceAtom("staff", 1, {"skill": 4})])
    b = ResourceBundle([ResourceAtom("staff", 99, {"skill": 4})])
    c = ResourceBundle([ResourceAtom("staff", 99, {"skill": 2})])
    assert resource_leq(a, b)
    assert not resource_leq(a, c)


def test_match_pattern_single_satisfier():
    bundle = ResourceBundle([
        ResourceAtom("staff", 1, {"skill_airway": 2}),
        ResourceAtom("staff", 2, {"skill_airway": 4}),
    ])
    got = match_pattern(ResourcePattern("staff", (("skill_airway", ">=", 3),)), bundle)
    assert [a.id for a in got] == [2]


def test_match_pattern_empty_bundle():
    assert match_pattern(ResourcePattern("bay"), EMPTY_BUNDLE) is None


def test_match_pattern_lexicographically_least_ids():
    # oracle: enumerate all 2-subsets of ids and confirm the chosen pair is
    # the lexicographically least
    bundle = ResourceBundle([ResourceAtom("usb", i) for i in (3, 1, 2)])
    pattern = ResourcePattern("usb", quantity=2)
    got = tuple(a.id for a in match_pattern(pattern, bundle))
    least = min(itertools.combinations(sorted([3, 1, 2]), 2))
    assert got == least == (1, 2)


def test_match_pattern_unknown_kind():
    with pytest.raises(UnknownKind):
        match_pattern(ResourcePattern("ghost"), EMPTY_BUNDLE, known_kinds={"usb"})


def test_match_pattern_insufficient_quantity():
    bundle = ResourceBundle(atoms("usb", 1))
    assert match_pattern(ResourcePattern("usb", quantity=2), bundle) is None


# --- property tests over randomly generated bundles -------------------------

KINDS = ("usb", "cd", "doc", "badge")

atom_st = st.builds(
    ResourceAtom,
    kind=st.sampled_from(KINDS),
    id=st.integers(min_value=1, max_value=10**6),
    attributes=st.fixed_dictionaries({}, optional={"n": st.integers(0, 3)}),
)


@st.composite
def disjoint_bundles(draw, count=3):
    all_atoms = draw(st.lists(atom_st, max_size=12,
                              unique_by=lambda a: a.id))
    cuts = sorted(draw(st.lists(st.integers(0, len(all_atoms)),
                                min_size=count - 1, max_size=count - 1)))
    parts = []
    prev = 0
    for cut in cuts + [len(all_atoms)]:
        parts.append(ResourceBundle(all_atoms[prev:cut]))
        prev = cut
    return parts


@settings(max_examples=200)
@given(disjoint_bundles())
def test_monoid_laws(bundles):
    a, b, c = bundles
    ab_c = compose_resources(compose_resources(a, b), c)
    a_bc = compose_resources(a, compose_resources(b, c))
    assert ab_c == a_bc
    assert compose_resources(a, b) == compose_resources(b, a)
    assert compose_resources(a, EMPTY_BUNDLE) == a


@settings(max_examples=200)
@given(disjoint_bundles(count=2))
def test_preorder_laws(bundles):
    a, b = bundles
    assert resource_leq(a, a)
    assert resource_leq(a, compose_resources(a, b))


@settings(max_examples=200)
@given(disjoint_bundles(count=3))
def test_preorder_transitive(bundles):
    a, b, c = bundles
    ab = compose_resources(a, b)
    abc = compose_resources(ab, c)
    assert resource_leq(a, ab) and resource_leq(ab, abc)
    assert resource_leq(a, abc)


incompat_st = st.sets(
    st.tuples(st.sampled_from(KINDS), st.sampled_from(KINDS)), max_size=4)


@settings(max_examples=200)
@given(disjoint_bundles(count=2), incompat_st)
def test_partiality_is_symmetric(bundles, relation):
    a, b = bundles

    def fails(x, y):
        try:
            compose_resources(x, y, relation)
            return False
        except IncompatibleKinds:
            return True

    assert fails(a, b) == fails(b, a)


@settings(max_examples=100)
@given(disjoint_bundles(count=1), st.integers(1, 3))
def test_match_determinism(bundles, quantity):
    bundle = bundles[0]
    pattern = ResourcePattern("usb", quantity=quantity)
    first = match_pattern(pattern, bundle)
    second = match_pattern(pattern, bundle)
    assert first == second
