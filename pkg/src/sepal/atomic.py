"""Expansion of policy rules into atomic rules, and set-level analyses.

An atomic rule is the unit everything downstream works on: one concrete
subject type, one concrete target type, one class, one permission, plus the
allow/neverallow label of the rule it came from. Attribute definitions vary
between devices but the concrete types they contain are stable, so comparing
policies at atomic granularity is insensitive to how rules were grouped.
"""

from __future__ import annotations

from .policy import (
    ALLOW,
    NEVERALLOW,
    SELF,
    And,
    AtomicRule,
    Name,
    Not,
    Or,
    PolicyDb,
    PolicyRule,
    SetExpr,
    resolve,
)


def expand_rule(rule: PolicyRule, db: PolicyDb) -> set[AtomicRule]:
    subjects = sorted(resolve(rule.subject, db))
    self_target = isinstance(rule.target, Name) and rule.target.name == SELF
    targets = None if self_target else sorted(resolve(rule.target, db))
    out = set()
    for s in subjects:
        for t in [s] if self_target else targets:
            for p in rule.permissions:
                out.add(AtomicRule(s, t, rule.klass, p, rule.op))
    return out


def expand(db: PolicyDb) -> set[AtomicRule]:
    """Every rule, with subjects and targets recursively expanded through
    their attribute memberships and permissions split out one per atomic."""
    out: set[AtomicRule] = set()
    for rule in db.rules:
        out |= expand_rule(rule, db)
    return out


def expand_with_sources(db: PolicyDb) -> tuple[set[AtomicRule], dict[AtomicRule, str]]:
    """Like expand, but also map each atomic to the origin of a rule that
    produced it (the canonically first origin wins on collisions)."""
    out: set[AtomicRule] = set()
    sources: dict[AtomicRule, str] = {}
    for rule in db.rules:
        origin = str(rule.origin) if rule.origin else ""
        for atom in expand_rule(rule, db):
            if atom not in out or (origin and origin < sources.get(atom, "￿")):
                sources[atom] = origin
            out.add(atom)
    return out, sources


# --- augmentation from negations --------------------------------------------


def _negated_sets(expr: SetExpr) -> list[SetExpr]:
    """Negated subexpressions in the shapes we handle: Not operands of a
    top-level And, and Not nested one level inside an Or."""
    hits = []
    if isinstance(expr, Not):
        hits.append(expr.part)
    elif isinstance(expr, And):
        for part in expr.parts:
            if isinstance(part, Not):
                hits.append(part.part)
            elif isinstance(part, Or):
                hits.extend(p.part for p in part.parts if isinstance(p, Not))
    elif isinstance(expr, Or):
        hits.extend(p.part for p in expr.parts if isinstance(p, Not))
    return hits


def augment_from_negations(db: PolicyDb, cap: int | None = None) -> set[AtomicRule]:
    """Infer allow-labeled atomics from the exclusions of neverallow subjects.

    A neverallow over ``(and (attr) not (x y))`` forbids the attribute's
    members except x and y, which reads as: x and y may perform the access.
    Each excluded concrete type therefore yields allow atomics over the
    rule's resolved targets and permissions. Inferred atomics that collide
    with a neverallow atomic from the expansion are contradictions and are
    dropped with a warning. The cap truncates in canonical order, keeping
    the output deterministic while letting callers tune the label balance.
    """
    never_keys = {a.key() for a in expand(db) if a.label == NEVERALLOW}
    inferred: set[AtomicRule] = set()
    dropped = 0
    deep_skipped = 0
    for rule in db.rules:
        if rule.op != NEVERALLOW:
            continue
        # CIL rules name a synthetic attribute whose membership holds the
        # negation shape; dereference one level to reach it.
        subject = rule.subject
        if isinstance(subject, Name) and subject.name in db.memberships:
            subject = db.memberships[subject.name]
        negated = _negated_sets(subject)
        if not negated:
            if _has_deep_negation(subject):
                deep_skipped += 1
            continue
        self_target = isinstance(rule.target, Name) and rule.target.name == SELF
        targets = None if self_target else sorted(resolve(rule.target, db))
        for neg in negated:
            for x in sorted(resolve(neg, db)):
                for t in [x] if self_target else targets:
                    for p in rule.permissions:
                        atom = AtomicRule(x, t, rule.klass, p, ALLOW)
                        if atom.key() in never_keys:
                            dropped += 1
                            continue
                        inferred.add(atom)
    if dropped:
        db.warnings.append(f"dropped {dropped} inferred atomics contradicting neverallow expansion")
    if deep_skipped:
        db.warnings.append(f"skipped {deep_skipped} neverallow rules with nested negation shapes")
    if cap is not None and len(inferred) > cap:
        inferred = set(sorted(inferred)[:cap])
    return inferred


def _has_deep_negation(expr: SetExpr, depth: int = 0) -> bool:
    if isinstance(expr, Not):
        return depth > 1 or _has_deep_negation(expr.part, depth + 1)
    if isinstance(expr, (And, Or)):
        return any(_has_deep_negation(p, depth + 1) for p in expr.parts)
    return False


def choose_augment_cap(n_allow: int, n_neverallow: int, available: int) -> int:
    """Cap that brings allow labels closest to half the training set.

    Reference expansions are dominated by neverallow atomics, so training
    needs inferred allows; past the break-even point more of them would tip
    the balance the other way.
    """
    want = max(0, n_neverallow - n_allow)
    return min(want, available)


# --- differential analysis ---------------------------------------------------


def diff(device: set[AtomicRule], reference: set[AtomicRule]) -> set[AtomicRule]:
    """Device atomics not present in the reference, by four-tuple equality.

    Labels are ignored so a device rule written through a vendor attribute
    and a reference rule written through concrete types cancel whenever they
    expand to the same tuples.
    """
    ref_keys = {a.key() for a in reference}
    return {a for a in device if a.key() not in ref_keys}


def dedupe_corpus(images: list[set[AtomicRule]]) -> tuple[set[AtomicRule], dict[AtomicRule, int]]:
    """Union of per-image atomic sets with image occurrence counts."""
    unique: set[AtomicRule] = set()
    occurrence: dict[AtomicRule, int] = {}
    for image in images:
        unique |= image
        for atom in image:
            occurrence[atom] = occurrence.get(atom, 0) + 1
    return unique, occurrence
