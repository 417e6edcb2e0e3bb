"""Core domain model: identifiers, set expressions, rules, and the policy database.

Everything here is immutable after construction and safe to share across
threads. No I/O lives in this module.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field

IDENT_RE = re.compile(r"[A-Za-z0-9_.$-]+\Z")

# Reserved target token: a rule whose target is `self` applies to each
# expanded subject paired with itself. It is not a declared type.
SELF = "self"

ALLOW = "allow"
NEVERALLOW = "neverallow"


class PolicyError(Exception):
    """Base class for policy-level errors."""


class UnknownName(PolicyError):
    def __init__(self, name: str):
        super().__init__(f"unknown type or attribute: {name!r}")
        self.name = name


def intern_ident(name: str) -> str:
    """Validate and intern an identifier (type, attribute, class, or permission name)."""
    if not name or not IDENT_RE.match(name):
        raise PolicyError(f"invalid identifier: {name!r}")
    return sys.intern(name)


# --- set expressions -------------------------------------------------------


class SetExpr:
    """A type-set expression: names, attribute references, and and/or/not over them."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Name(SetExpr):
    name: str


@dataclass(frozen=True, slots=True)
class All(SetExpr):
    pass


@dataclass(frozen=True, slots=True)
class And(SetExpr):
    parts: tuple[SetExpr, ...]


@dataclass(frozen=True, slots=True)
class Or(SetExpr):
    parts: tuple[SetExpr, ...]


@dataclass(frozen=True, slots=True)
class Not(SetExpr):
    part: SetExpr


def expr_names(expr: SetExpr) -> set[str]:
    """All identifiers referenced anywhere in the expression."""
    if isinstance(expr, Name):
        return {expr.name}
    if isinstance(expr, All):
        return set()
    if isinstance(expr, Not):
        return expr_names(expr.part)
    if isinstance(expr, (And, Or)):
        out: set[str] = set()
        for p in expr.parts:
            out |= expr_names(p)
        return out
    raise TypeError(f"not a SetExpr: {expr!r}")


# --- rules -----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Origin:
    file: str
    line: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}"


@dataclass(frozen=True, slots=True)
class PolicyRule:
    op: str  # ALLOW or NEVERALLOW
    subject: SetExpr
    target: SetExpr  # Name(SELF) means the reserved self token
    klass: str
    permissions: frozenset[str]
    origin: Origin | None = None

    def __post_init__(self):
        if self.op not in (ALLOW, NEVERALLOW):
            raise PolicyError(f"bad rule op: {self.op!r}")
        if not self.permissions:
            raise PolicyError("rule with empty permission set")


@dataclass(frozen=True, slots=True, order=True)
class AtomicRule:
    """Irreducible four-tuple plus label: one subject type, one target type,
    one class, one permission. Subject and target are always concrete types.

    Ordering is lexicographic over the four names (label breaks ties), which
    gives every atomic set a single canonical serialization.
    """

    subject: str
    target: str
    klass: str
    perm: str
    label: str  # ALLOW or NEVERALLOW

    def key(self) -> tuple[str, str, str, str]:
        """The label-free four-tuple used for differential comparison."""
        return (self.subject, self.target, self.klass, self.perm)


@dataclass(frozen=True, slots=True)
class TypeTransition:
    source: str
    exec_type: str
    klass: str
    result: str


# --- the database ----------------------------------------------------------


@dataclass
class PolicyDb:
    """Declarations, attribute memberships, rules, and type transitions.

    Treated as immutable once a parser hands it out; `resolve` caches the
    attribute fixpoint on first use.
    """

    types: set[str] = field(default_factory=set)
    attributes: set[str] = field(default_factory=set)
    memberships: dict[str, SetExpr] = field(default_factory=dict)
    rules: list[PolicyRule] = field(default_factory=list)
    transitions: list[TypeTransition] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    skipped_forms: dict[str, int] = field(default_factory=dict)
    _attr_cache: dict[str, frozenset[str]] | None = field(default=None, repr=False)

    def declare_type(self, name: str) -> str:
        name = intern_ident(name)
        if name in self.attributes:
            raise PolicyError(f"{name!r} declared both as type and attribute")
        self.types.add(name)
        return name

    def declare_attribute(self, name: str) -> str:
        name = intern_ident(name)
        if name in self.types:
            raise PolicyError(f"{name!r} declared both as type and attribute")
        self.attributes.add(name)
        return name

    def ensure_declared(self, name: str, strict: bool = False) -> str:
        """Auto-declare unknown names as concrete types (warning), or raise in strict mode.

        Real firmware dumps frequently reference vendor-private names that
        were never declared in the fragments we see.
        """
        name = intern_ident(name)
        if name in self.types or name in self.attributes or name == SELF:
            return name
        if strict:
            raise UnknownName(name)
        self.types.add(name)
        self.warnings.append(f"auto-declared undeclared name {name!r} as a type")
        return name

    def merge(self, other: "PolicyDb") -> None:
        """Fold another fragment into this one. Later membership entries win."""
        self.types |= other.types
        self.attributes |= other.attributes
        self.memberships.update(other.memberships)
        self.rules.extend(other.rules)
        self.transitions.extend(other.transitions)
        self.warnings.extend(other.warnings)
        for k, v in other.skipped_forms.items():
            self.skipped_forms[k] = self.skipped_forms.get(k, 0) + v
        self._attr_cache = None

    # -- resolution ---------------------------------------------------------

    def _attr_table(self) -> dict[str, frozenset[str]]:
        """Concrete membership of every attribute, computed to a fixpoint.

        Memberships may reference other attributes (including under Not), so
        all attributes are iterated simultaneously until stable. Policies in
        the wild are acyclic and converge in a few rounds; a cycle that fails
        to stabilize keeps the last iterate and records a warning.
        """
        if self._attr_cache is not None:
            return self._attr_cache
        universe = frozenset(self.types)
        table: dict[str, frozenset[str]] = {a: frozenset() for a in self.attributes}
        bound = len(self.attributes) + 2
        for _ in range(bound):
            changed = False
            for attr in sorted(self.attributes):
                expr = self.memberships.get(attr)
                new = frozenset() if expr is None else frozenset(_eval(expr, universe, table))
                if new != table[attr]:
                    table[attr] = new
                    changed = True
            if not changed:
                break
        else:
            self.warnings.append("attribute membership did not stabilize; keeping last iterate")
        self._attr_cache = table
        return table

    def resolve_attr(self, attr: str) -> frozenset[str]:
        if attr not in self.attributes:
            raise UnknownName(attr)
        return self._attr_table()[attr]


def _eval(expr: SetExpr, universe: frozenset[str], table: dict[str, frozenset[str]]) -> set[str]:
    if isinstance(expr, Name):
        if expr.name in universe:
            return {expr.name}
        if expr.name in table:
            return set(table[expr.name])
        raise UnknownName(expr.name)
    if isinstance(expr, All):
        return set(universe)
    if isinstance(expr, And):
        out = set(universe)
        for p in expr.parts:
            out &= _eval(p, universe, table)
        return out
    if isinstance(expr, Or):
        out: set[str] = set()
        for p in expr.parts:
            out |= _eval(p, universe, table)
        return out
    if isinstance(expr, Not):
        return set(universe) - _eval(expr.part, universe, table)
    raise TypeError(f"not a SetExpr: {expr!r}")


def resolve(expr: SetExpr, db: PolicyDb) -> set[str]:
    """The concrete type set denoted by `expr`.

    Attributes are replaced by their resolved memberships; `All` is every
    declared concrete type; Not complements against that same universe.
    Raises UnknownName for identifiers declared nowhere.
    """
    return _eval(expr, frozenset(db.types), db._attr_table())
