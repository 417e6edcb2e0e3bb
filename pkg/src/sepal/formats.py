"""On-disk formats shared by the CLI subcommands.

* policy database: a single JSON document (types, attributes, memberships as
  nested expression arrays, rules, transitions)
* atomic corpus: JSON lines with subject/target/class/permission/label/source,
  canonically sorted so equal sets serialize identically
* uid map: two-column TSV
* document vectors: one line per document, unit and polarity first, then the
  300 decimal components
* findings: JSON lines, one finding each
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .docvec import DocVector
from .policy import (
    All,
    And,
    AtomicRule,
    Name,
    Not,
    Or,
    Origin,
    PolicyDb,
    PolicyRule,
    SetExpr,
    TypeTransition,
)
from .report import Finding
from .uids import UidBucket


# --- set expressions as JSON ------------------------------------------------


def expr_to_json(expr: SetExpr):
    if isinstance(expr, Name):
        return expr.name
    if isinstance(expr, All):
        return ["all"]
    if isinstance(expr, And):
        return ["and", *[expr_to_json(p) for p in expr.parts]]
    if isinstance(expr, Or):
        return ["or", *[expr_to_json(p) for p in expr.parts]]
    if isinstance(expr, Not):
        return ["not", expr_to_json(expr.part)]
    raise TypeError(f"not a SetExpr: {expr!r}")


def expr_from_json(node) -> SetExpr:
    if isinstance(node, str):
        return Name(node)
    head, *rest = node
    if head == "all":
        return All()
    if head == "and":
        return And(tuple(expr_from_json(p) for p in rest))
    if head == "or":
        return Or(tuple(expr_from_json(p) for p in rest))
    if head == "not":
        return Not(expr_from_json(rest[0]))
    raise ValueError(f"bad expression node: {node!r}")


# --- policy database ----------------------------------------------------------


def save_db(path, db: PolicyDb) -> None:
    doc = {
        "types": sorted(db.types),
        "attributes": sorted(db.attributes),
        "memberships": {a: expr_to_json(e) for a, e in sorted(db.memberships.items())},
        "rules": [
            {
                "op": r.op,
                "subject": expr_to_json(r.subject),
                "target": expr_to_json(r.target),
                "class": r.klass,
                "permissions": sorted(r.permissions),
                "origin": str(r.origin) if r.origin else None,
            }
            for r in db.rules
        ],
        "transitions": [
            [t.source, t.exec_type, t.klass, t.result] for t in db.transitions
        ],
        "warnings": db.warnings,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_db(path) -> PolicyDb:
    doc = json.loads(Path(path).read_text())
    db = PolicyDb()
    db.types = set(doc["types"])
    db.attributes = set(doc["attributes"])
    db.memberships = {a: expr_from_json(e) for a, e in doc["memberships"].items()}
    for r in doc["rules"]:
        origin = None
        if r.get("origin"):
            file, _, line = r["origin"].rpartition(":")
            origin = Origin(file, int(line))
        db.rules.append(
            PolicyRule(
                r["op"],
                expr_from_json(r["subject"]),
                expr_from_json(r["target"]),
                r["class"],
                frozenset(r["permissions"]),
                origin,
            )
        )
    db.transitions = [TypeTransition(*t) for t in doc["transitions"]]
    db.warnings = list(doc.get("warnings", []))
    return db


# --- atomic corpora -------------------------------------------------------------


def save_atomics(path, atomics, sources: dict[AtomicRule, str] | None = None) -> None:
    with open(path, "w") as fh:
        for atom in sorted(atomics):
            rec = {
                "subject": atom.subject,
                "target": atom.target,
                "class": atom.klass,
                "permission": atom.perm,
                "label": atom.label,
                "source": (sources or {}).get(atom, ""),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_atomics(path) -> tuple[set[AtomicRule], dict[AtomicRule, str]]:
    atomics: set[AtomicRule] = set()
    sources: dict[AtomicRule, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            atom = AtomicRule(
                rec["subject"], rec["target"], rec["class"], rec["permission"], rec["label"]
            )
            atomics.add(atom)
            if rec.get("source"):
                sources.setdefault(atom, rec["source"])
    return atomics, sources


# --- uid map ---------------------------------------------------------------------


def save_uid_map(path, uid_map: dict[str, UidBucket]) -> None:
    with open(path, "w") as fh:
        for domain in sorted(uid_map):
            fh.write(f"{domain}\t{uid_map[domain].value}\n")


def load_uid_map(path) -> dict[str, UidBucket]:
    out = {}
    for ln in Path(path).read_text().splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        domain, bucket = ln.split("\t")
        out[domain] = UidBucket(bucket)
    return out


# --- document vectors --------------------------------------------------------------


def save_doc_vectors(path, vectors: list[DocVector]) -> None:
    with open(path, "w") as fh:
        for dv in vectors:
            comps = " ".join(repr(float(x)) for x in dv.vector)
            fh.write(f"{dv.unit} {dv.polarity} {comps}\n")


def load_doc_vectors(path) -> list[DocVector]:
    out = []
    for ln in Path(path).read_text().splitlines():
        if not ln.strip():
            continue
        fields = ln.split(" ")
        unit, polarity = fields[0], fields[1]
        vec = np.array([float(x) for x in fields[2:]], dtype=np.float32)
        out.append(DocVector(unit, polarity, vec))
    return out


# --- findings -------------------------------------------------------------------------


def save_findings(path, findings: list[Finding]) -> None:
    with open(path, "w") as fh:
        for f in sorted(findings, key=lambda f: (f.source_image, f.atomic)):
            rec = {
                "subject": f.atomic.subject,
                "target": f.atomic.target,
                "class": f.atomic.klass,
                "permission": f.atomic.perm,
                "label": f.atomic.label,
                "probability": round(f.probability, 6),
                "source_image": f.source_image,
                "origin": f.origin,
                "categories": sorted(f.categories),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_findings(path) -> list[Finding]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(
                Finding(
                    atomic=AtomicRule(
                        rec["subject"], rec["target"], rec["class"], rec["permission"], rec["label"]
                    ),
                    probability=rec["probability"],
                    source_image=rec.get("source_image", ""),
                    origin=rec.get("origin", ""),
                    categories=set(rec.get("categories", [])),
                )
            )
    return out
