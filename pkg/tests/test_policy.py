import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sepal.policy import (
    And,
    AtomicRule,
    Name,
    Not,
    Or,
    PolicyDb,
    PolicyError,
    UnknownName,
    intern_ident,
    resolve,
)

from .oracles import brute_resolve, random_policy


def make_db(types, attrs=None, memberships=None):
    db = PolicyDb()
    for t in types:
        db.declare_type(t)
    for a in attrs or []:
        db.declare_attribute(a)
    db.memberships.update(memberships or {})
    return db


def test_ident_validation():
    assert intern_ident("hal_audio_default") == "hal_audio_default"
    assert intern_ident("a.b$c-d_9") == "a.b$c-d_9"
    for bad in ("", "with space", "semi;colon", "bra{ce"):
        with pytest.raises(PolicyError):
            intern_ident(bad)


def test_ident_interning_bijective():
    a = intern_ident("untrusted" + "_app")
    b = intern_ident("untrusted_app")
    assert a is b


def test_resolve_negation_exclusion():
    # An app-domain attribute minus two excluded members leaves the rest.
    db = make_db(
        ["shell", "con_monitor_app", "untrusted_app"],
        ["appdomain"],
        {"appdomain": Or((Name("shell"), Name("con_monitor_app"), Name("untrusted_app")))},
    )
    expr = And((Name("appdomain"), Not(Or((Name("shell"), Name("con_monitor_app"))))))
    assert resolve(expr, db) == {"untrusted_app"}


def test_resolve_concrete_identity():
    db = make_db(["untrusted_app", "other"])
    assert resolve(Name("untrusted_app"), db) == {"untrusted_app"}


def test_resolve_unknown_name():
    db = make_db(["a"])
    with pytest.raises(UnknownName):
        resolve(Name("ghost"), db)


def test_resolve_random_vs_bruteforce():
    rng = np.random.default_rng(42)
    from .oracles import random_expr

    for _ in range(100):
        db = random_policy(rng)
        names = sorted(db.types) + sorted(db.attributes)
        expr = random_expr(rng, names, depth=3)
        assert resolve(expr, db) == brute_resolve(expr, db)


def test_resolve_monotone_in_memberships():
    # Enlarging an attribute never shrinks positive (Not-free) expressions.
    small = make_db(["a", "b", "c"], ["attr"], {"attr": Name("a")})
    big = make_db(["a", "b", "c"], ["attr"], {"attr": Or((Name("a"), Name("b")))})
    for expr in (Name("attr"), Or((Name("attr"), Name("c"))), And((Name("attr"), Name("attr")))):
        assert resolve(expr, small) <= resolve(expr, big)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_de_morgan_consistency(seed):
    rng = np.random.default_rng(seed)
    db = random_policy(rng)
    from .oracles import random_expr

    names = sorted(db.types) + sorted(db.attributes)
    a = random_expr(rng, names, depth=2)
    b = random_expr(rng, names, depth=2)
    lhs = resolve(Not(And((a, b))), db)
    rhs = resolve(Or((Not(a), Not(b))), db)
    assert lhs == rhs


def test_atomic_ordering_total_and_stable():
    atoms = [
        AtomicRule("b", "x", "file", "read", "allow"),
        AtomicRule("a", "z", "file", "read", "allow"),
        AtomicRule("a", "y", "dir", "write", "neverallow"),
        AtomicRule("a", "y", "dir", "read", "allow"),
    ]
    once = sorted(atoms)
    again = sorted(list(reversed(atoms)))
    assert once == again
    assert [a.subject for a in once] == ["a", "a", "a", "b"]
    # Strict total order: no two distinct atoms compare equal.
    for i, x in enumerate(once):
        for y in once[i + 1 :]:
            assert x < y


def test_type_attribute_disjoint():
    db = PolicyDb()
    db.declare_type("thing")
    with pytest.raises(PolicyError):
        db.declare_attribute("thing")


def test_auto_declare_unknown_vs_strict():
    db = make_db(["a"])
    db.ensure_declared("vendor_private")
    assert "vendor_private" in db.types
    assert db.warnings
    with pytest.raises(UnknownName):
        db.ensure_declared("another_ghost", strict=True)


def test_membership_cycle_reaches_fixpoint():
    db = make_db(["t1", "t2"], ["a1", "a2"])
    db.memberships["a1"] = Or((Name("t1"), Name("a2")))
    db.memberships["a2"] = Or((Name("t2"), Name("a1")))
    assert resolve(Name("a1"), db) == {"t1", "t2"}
    assert resolve(Name("a2"), db) == {"t1", "t2"}
