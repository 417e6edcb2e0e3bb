import numpy as np

from sepal.atomic import (
    augment_from_negations,
    choose_augment_cap,
    dedupe_corpus,
    diff,
    expand,
    expand_with_sources,
)
from sepal.parsers import parse_cil, parse_flat
from sepal.policy import ALLOW, NEVERALLOW, AtomicRule, Name, PolicyDb, PolicyRule

from .oracles import brute_expand, random_policy

CIL_APP_DATA = """
(type bluetooth)
(type platform_app)
(type untrusted_app)
(type app_data_file)
(typeattribute base_typeattr_97)
(typeattributeset base_typeattr_97 (bluetooth platform_app untrusted_app))
(allow base_typeattr_97 app_data_file (file (getattr open read ioctl lock map)))
"""

NEGATION_CIL = """
(type shell)
(type con_monitor_app)
(type untrusted_app)
(typeattribute appdomain)
(typeattributeset appdomain (shell con_monitor_app untrusted_app))
(typeattribute base_typeattr_293)
(typeattributeset base_typeattr_293 (and (appdomain) not (shell con_monitor_app)))
(neverallow base_typeattr_293 con_monitor_app (file (read)))
"""


def test_expand_attribute_rule_counts():
    atoms = expand(parse_cil(CIL_APP_DATA))
    assert len(atoms) == 18  # 3 members x 6 permissions
    assert AtomicRule("bluetooth", "app_data_file", "file", "open", ALLOW) in atoms


def test_expand_concrete_rule_is_itself():
    db = PolicyDb()
    db.declare_type("a")
    db.declare_type("b")
    db.rules.append(PolicyRule(ALLOW, Name("a"), Name("b"), "file", frozenset({"read"})))
    assert expand(db) == {AtomicRule("a", "b", "file", "read", ALLOW)}


def test_expand_self_target():
    db = parse_cil(
        "(type x)(type y)(typeattribute procs)(typeattributeset procs (x y))"
        "(allow procs self (process (fork)))"
    )
    atoms = expand(db)
    assert atoms == {
        AtomicRule("x", "x", "process", "fork", ALLOW),
        AtomicRule("y", "y", "process", "fork", ALLOW),
    }


def test_expand_matches_bruteforce_enumerator():
    rng = np.random.default_rng(7)
    for _ in range(40):
        db = random_policy(rng)
        assert expand(db) == brute_expand(db)


def test_expand_idempotent():
    atoms = expand(parse_cil(CIL_APP_DATA))
    db2 = PolicyDb()
    for a in atoms:
        db2.declare_type(a.subject)
        db2.declare_type(a.target)
        db2.rules.append(PolicyRule(a.label, Name(a.subject), Name(a.target), a.klass, frozenset({a.perm})))
    assert expand(db2) == atoms


def test_labels_follow_rule_op():
    db = parse_flat("allow a b:c d;\nneverallow e f:g h;")
    labels = {a.subject: a.label for a in expand(db)}
    assert labels == {"a": ALLOW, "e": NEVERALLOW}


def test_augment_negation_walkthrough():
    inferred = augment_from_negations(parse_cil(NEGATION_CIL))
    assert inferred == {
        AtomicRule("shell", "con_monitor_app", "file", "read", ALLOW),
        AtomicRule("con_monitor_app", "con_monitor_app", "file", "read", ALLOW),
    }


def test_augment_without_negation_is_empty():
    db = parse_cil(
        "(type a)(type b)(typeattribute appdomain)(typeattributeset appdomain (a b))"
        "(neverallow appdomain b (file (read)))"
    )
    assert augment_from_negations(db) == set()


def test_augment_cap_truncates_canonically():
    inferred = augment_from_negations(parse_cil(NEGATION_CIL), cap=1)
    assert inferred == {AtomicRule("con_monitor_app", "con_monitor_app", "file", "read", ALLOW)}


def test_augment_standard_not_list_form():
    # Same negation written with `not` as a list head instead of inline.
    db = parse_cil(
        "(type shell)(type con_monitor_app)(type untrusted_app)"
        "(typeattribute appdomain)"
        "(typeattributeset appdomain (shell con_monitor_app untrusted_app))"
        "(typeattribute grp)"
        "(typeattributeset grp (and (appdomain) (not (or (shell) (con_monitor_app)))))"
        "(neverallow grp con_monitor_app (file (read)))"
    )
    inferred = augment_from_negations(db)
    assert {a.subject for a in inferred} == {"shell", "con_monitor_app"}


def test_augment_not_nested_inside_or():
    # Not one level under an Or operand also counts as an exclusion shape.
    db = parse_cil(
        "(type a)(type b)(type c)"
        "(typeattribute everyone)(typeattributeset everyone (a b c))"
        "(typeattribute grp)"
        "(typeattributeset grp (and (everyone) (or (a) not (b))))"
        "(neverallow grp c (file (read)))"
    )
    inferred = augment_from_negations(db)
    assert {x.subject for x in inferred} == {"b"}
    assert all(x.label == ALLOW and x.target == "c" for x in inferred)


def test_augment_drops_contradictions():
    # A second neverallow already covers shell's access, so the inferred
    # allow for shell would contradict it and must be dropped.
    db = parse_cil(
        NEGATION_CIL + "(neverallow shell con_monitor_app (file (read)))"
    )
    inferred = augment_from_negations(db)
    assert AtomicRule("shell", "con_monitor_app", "file", "read", ALLOW) not in inferred
    assert AtomicRule("con_monitor_app", "con_monitor_app", "file", "read", ALLOW) in inferred
    assert any("contradicting" in w for w in db.warnings)


def test_augment_skips_deep_negation_shapes_with_count():
    db = parse_cil(
        "(type a)(type b)(type c)(typeattribute g)(typeattributeset g (a b c))"
        "(typeattribute h)(typeattributeset h (and (g) (and (g) not (a))))"
        "(neverallow h c (file (read)))"
    )
    assert augment_from_negations(db) == set()
    assert any("nested negation" in w for w in db.warnings)


def test_choose_augment_cap_balances():
    assert choose_augment_cap(100, 1900, available=5000) == 1800
    assert choose_augment_cap(100, 1900, available=600) == 600
    assert choose_augment_cap(2000, 1900, available=600) == 0


def test_diff_identical_sets_empty():
    atoms = expand(parse_cil(CIL_APP_DATA))
    assert diff(atoms, atoms) == set()


def test_diff_singleton_extra():
    reference = expand(parse_cil(CIL_APP_DATA))
    extra = AtomicRule("untrusted_app", "proc_stat", "file", "read", ALLOW)
    assert diff(reference | {extra}, reference) == {extra}


def test_diff_attribute_vs_concrete_writing():
    # Same access written through a vendor attribute and through concrete
    # types cancels after expansion.
    device = expand(
        parse_cil(
            "(type x)(type y)(type f)(typeattribute vnd)(typeattributeset vnd (x y))"
            "(allow vnd f (file (read)))"
        )
    )
    reference = expand(parse_flat("allow x f:file read;\nallow y f:file read;"))
    assert diff(device, reference) == set()


def test_diff_ignores_labels():
    dev = {AtomicRule("a", "b", "c", "p", ALLOW)}
    ref = {AtomicRule("a", "b", "c", "p", NEVERALLOW)}
    # Four-tuple equality: the device rule is not customized.
    assert diff(dev, ref) == set()


def test_diff_antimonotone_in_reference():
    rng = np.random.default_rng(3)
    device = brute_expand(random_policy(rng))
    ref_small = brute_expand(random_policy(rng))
    ref_big = ref_small | brute_expand(random_policy(rng))
    assert diff(device, ref_big) <= diff(device, ref_small)


def test_dedupe_corpus_counts():
    a = AtomicRule("a", "b", "c", "p", ALLOW)
    unique, occurrence = dedupe_corpus([{a}, {a}])
    assert unique == {a} and occurrence[a] == 2


def test_dedupe_disjoint_sizes():
    img1 = {AtomicRule(f"s{i}", "t", "c", "p", ALLOW) for i in range(3)}
    img2 = {AtomicRule(f"u{i}", "t", "c", "p", ALLOW) for i in range(4)}
    unique, occurrence = dedupe_corpus([img1, img2])
    assert len(unique) == 7
    assert all(count == 1 for count in occurrence.values())


def test_dedupe_matches_naive_concatenation():
    rng = np.random.default_rng(11)
    images = [brute_expand(random_policy(rng)) for _ in range(5)]
    unique, occurrence = dedupe_corpus(images)
    naive = sorted(set().union(*images))
    assert sorted(unique) == naive
    for atom in naive:
        assert occurrence[atom] == sum(1 for img in images if atom in img)


def test_expand_with_sources_tracks_origin():
    db = parse_flat("allow a b:c d;", file="device.txt")
    atoms, sources = expand_with_sources(db)
    (atom,) = atoms
    assert sources[atom] == "device.txt:1"
