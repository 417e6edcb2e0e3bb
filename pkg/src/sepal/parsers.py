"""Parsers for the policy formats this toolchain consumes.

Four families of input:

* CIL s-expression policy (``*.cil``), the intermediate format shipped on
  Treble devices. Recognized forms: ``type``, ``typeattribute``,
  ``typeattributeset``, ``allow``, ``neverallow``, ``typetransition``.
  Everything else is skipped and counted.
* Flat rule text, one ``allow s t:c perms ;`` statement per semicolon, as
  emitted by binary-policy decompilers.
* TE source files, scanned line-level for comment blocks only (no macro
  expansion): each ``#`` block is routed to the allow or neverallow comment
  document of its unit.
* Android side tables: ``file_contexts``, init ``*.rc`` service blocks, and
  ``seapp_contexts``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .policy import (
    ALLOW,
    NEVERALLOW,
    SELF,
    All,
    And,
    Name,
    Not,
    Or,
    Origin,
    PolicyDb,
    PolicyError,
    PolicyRule,
    SetExpr,
    TypeTransition,
    expr_names,
    intern_ident,
)


class PolicyParseError(Exception):
    def __init__(self, message: str, line: int, col: int = 0, file: str = "<input>"):
        super().__init__(f"{file}:{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.file = file


# --- CIL -------------------------------------------------------------------

_CIL_TOKEN = re.compile(r"\(|\)|;[^\n]*|[^\s()\";]+")


def _tokenize_cil(text: str):
    """Yield (token, line, col); parentheses and symbols, comments dropped."""
    line = 1
    line_start = 0
    for m in _CIL_TOKEN.finditer(text):
        nl = text.count("\n", line_start, m.start())
        if nl:
            line += nl
            line_start = text.rfind("\n", line_start, m.start()) + 1
        tok = m.group()
        if tok.startswith(";"):
            continue
        yield tok, line, m.start() - line_start + 1


def _read_sexprs(text: str, file: str):
    """Parse the whole stream into nested lists of (symbol, line, col) leaves."""
    stack: list[list] = [[]]
    opens: list[tuple[int, int]] = []
    for tok, line, col in _tokenize_cil(text):
        if tok == "(":
            node: list = []
            stack[-1].append(node)
            stack.append(node)
            opens.append((line, col))
        elif tok == ")":
            if len(stack) == 1:
                raise PolicyParseError("unbalanced ')'", line, col, file)
            stack.pop()
            opens.pop()
        else:
            stack[-1].append((tok, line, col))
    if len(stack) != 1:
        line, col = opens[-1]
        raise PolicyParseError("unbalanced '('", line, col, file)
    return stack[0]


def _sym(node) -> str | None:
    return node[0] if isinstance(node, tuple) else None


def _cil_set_expr(node, file: str) -> SetExpr:
    """A CIL type-set expression.

    Handles the operator forms ``(and X Y)`` / ``(or X Y)`` / ``(not X)``,
    the keyword ``all``, bare name lists ``(a b c)`` denoting their union,
    and a bare ``not`` symbol binding the following operand, as compiled
    device policies write inside ``and`` lists.
    """
    if isinstance(node, tuple):
        name, line, col = node
        if name == "all":
            return All()
        return Name(intern_ident(name))
    if not node:
        raise PolicyParseError("empty set expression", 0, 0, file)
    head = _sym(node[0])
    if head in ("and", "or", "not"):
        parts = _cil_expr_list(node[1:], file)
        if head == "not":
            if len(parts) != 1:
                raise PolicyParseError("'not' takes exactly one operand", node[0][1], node[0][2], file)
            return Not(parts[0])
        if len(parts) == 1:
            return parts[0]
        return And(tuple(parts)) if head == "and" else Or(tuple(parts))
    parts = _cil_expr_list(node, file)
    return parts[0] if len(parts) == 1 else Or(tuple(parts))


def _cil_expr_list(nodes, file: str) -> list[SetExpr]:
    out: list[SetExpr] = []
    i = 0
    while i < len(nodes):
        if _sym(nodes[i]) == "not":
            if i + 1 >= len(nodes):
                raise PolicyParseError("dangling 'not'", nodes[i][1], nodes[i][2], file)
            out.append(Not(_cil_set_expr(nodes[i + 1], file)))
            i += 2
        else:
            out.append(_cil_set_expr(nodes[i], file))
            i += 1
    return out


def parse_cil(text: str, file: str = "<cil>", strict: bool = False) -> PolicyDb:
    db = PolicyDb()
    forms = _read_sexprs(text, file)
    _walk_cil_forms(forms, db, file, prefix="", strict=strict)
    # Auto-declaration runs after the whole stream so order of declarations
    # and uses does not matter.
    for rule in db.rules:
        for name in expr_names(rule.subject) | expr_names(rule.target):
            if name != SELF:
                db.ensure_declared(name, strict=strict)
    for expr in db.memberships.values():
        for name in expr_names(expr):
            db.ensure_declared(name, strict=strict)
    for tr in db.transitions:
        db.ensure_declared(tr.source, strict=strict)
        db.ensure_declared(tr.exec_type, strict=strict)
        db.ensure_declared(tr.result, strict=strict)
    return db


def _walk_cil_forms(forms, db: PolicyDb, file: str, prefix: str, strict: bool):
    for form in forms:
        if not isinstance(form, list) or not form or not isinstance(form[0], tuple):
            continue
        head, line, col = form[0]
        args = form[1:]
        if head == "block" and args and isinstance(args[0], tuple):
            # Namespaced declarations flatten to dotted names.
            inner = args[0][0] if not prefix else f"{prefix}.{args[0][0]}"
            _walk_cil_forms(args[1:], db, file, inner, strict)
            continue
        try:
            if head == "type" and len(args) == 1 and isinstance(args[0], tuple):
                db.declare_type(_prefixed(args[0][0], prefix))
            elif head == "typeattribute" and len(args) == 1 and isinstance(args[0], tuple):
                db.declare_attribute(_prefixed(args[0][0], prefix))
            elif head == "typeattributeset" and len(args) == 2 and isinstance(args[0], tuple):
                attr = _prefixed(args[0][0], prefix)
                if attr not in db.attributes:
                    db.declare_attribute(attr)
                db.memberships[attr] = _cil_set_expr(args[1], file)
            elif head in (ALLOW, NEVERALLOW):
                db.rules.append(_cil_rule(head, args, file, line, col))
            elif head == "typetransition" and len(args) == 4 and all(isinstance(a, tuple) for a in args):
                db.transitions.append(
                    TypeTransition(
                        intern_ident(args[0][0]),
                        intern_ident(args[1][0]),
                        intern_ident(args[2][0]),
                        intern_ident(args[3][0]),
                    )
                )
            else:
                db.skipped_forms[head] = db.skipped_forms.get(head, 0) + 1
        except PolicyError as exc:
            raise PolicyParseError(str(exc), line, col, file) from exc


def _prefixed(name: str, prefix: str) -> str:
    return name if not prefix else f"{prefix}.{name}"


def _cil_rule(op: str, args, file: str, line: int, col: int) -> PolicyRule:
    # (allow SUBJ TGT (class (perm ...)))
    if len(args) != 3 or not isinstance(args[2], list) or len(args[2]) != 2:
        raise PolicyParseError(f"malformed {op} rule", line, col, file)
    subject = _cil_set_expr(args[0], file)
    target = _cil_set_expr(args[1], file)
    cp = args[2]
    if not isinstance(cp[0], tuple) or not isinstance(cp[1], list):
        raise PolicyParseError(f"malformed class/permission set in {op}", line, col, file)
    klass = intern_ident(cp[0][0])
    perms = frozenset(intern_ident(p[0]) for p in cp[1] if isinstance(p, tuple))
    if not perms:
        raise PolicyParseError("empty permission list", line, col, file)
    return PolicyRule(op, subject, target, klass, perms, Origin(file, line))


# --- flat ------------------------------------------------------------------

_FLAT_STMT = re.compile(
    r"^\s*(allow|neverallow)\s+(\S+)\s+([^\s:]+)\s*:\s*(\S+)\s+(.+?)\s*$", re.S
)


def parse_flat(text: str, file: str = "<flat>", strict: bool = False, class_perms: dict[str, set[str]] | None = None) -> PolicyDb:
    """One rule per ``;``-terminated statement; ``#`` starts a line comment.

    A ``*`` in permission position stands for every permission the bundled
    class table declares for the statement's class.
    """
    db = PolicyDb()
    stripped = "\n".join(ln.split("#", 1)[0] for ln in text.split("\n"))
    pos = 0
    line = 1
    for chunk in stripped.split(";"):
        stmt_line = line + chunk[: len(chunk) - len(chunk.lstrip())].count("\n")
        line += chunk.count("\n")
        pos += len(chunk) + 1
        body = chunk.strip()
        if not body:
            continue
        m = _FLAT_STMT.match(body)
        if not m:
            raise PolicyParseError(f"malformed statement: {body.splitlines()[0][:60]!r}", stmt_line, 0, file)
        op, subj, tgt, klass, perm_text = m.groups()
        perm_text = perm_text.strip()
        if perm_text.startswith("{"):
            if not perm_text.endswith("}"):
                raise PolicyParseError("unterminated permission set", stmt_line, 0, file)
            perm_text = perm_text[1:-1]
        perms = perm_text.split()
        if perms == ["*"]:
            table = class_perms if class_perms is not None else _bundled_class_perms()
            perms = sorted(table.get(klass, set()))
            if not perms:
                raise PolicyParseError(f"'*' with unknown class {klass!r}", stmt_line, 0, file)
        if not perms:
            raise PolicyParseError("empty permission set", stmt_line, 0, file)
        try:
            subj_name = intern_ident(subj)
            tgt_name = intern_ident(tgt)
            rule = PolicyRule(
                op,
                Name(subj_name),
                Name(tgt_name),
                intern_ident(klass),
                frozenset(intern_ident(p) for p in perms),
                Origin(file, stmt_line),
            )
        except PolicyError as exc:
            raise PolicyParseError(str(exc), stmt_line, 0, file) from exc
        db.rules.append(rule)
        db.ensure_declared(subj_name, strict=strict)
        if tgt_name != SELF:
            db.ensure_declared(tgt_name, strict=strict)
    return db


_CLASS_PERMS_CACHE: dict[str, set[str]] | None = None


def _bundled_class_perms() -> dict[str, set[str]]:
    global _CLASS_PERMS_CACHE
    if _CLASS_PERMS_CACHE is None:
        from .datadir import data_path

        table: dict[str, set[str]] = {}
        for ln in data_path("class_perms.tsv").read_text().splitlines():
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            klass, perms = ln.split("\t", 1)
            table[klass] = set(perms.split())
        _CLASS_PERMS_CACHE = table
    return _CLASS_PERMS_CACHE


# --- canonical flat serialization ------------------------------------------


def atomic_to_flat(atomics) -> str:
    """Serialize atomic rules as canonical flat text (sorted, one per line)."""
    lines = []
    for a in sorted(atomics):
        lines.append(f"{a.label} {a.subject} {a.target}:{a.klass} {a.perm};")
    return "\n".join(lines) + ("\n" if lines else "")


# --- TE comments ------------------------------------------------------------


@dataclass
class CommentDoc:
    unit: str
    polarity: str  # ALLOW or NEVERALLOW
    sentences: list[str] = field(default_factory=list)


_SENTENCE_SPLIT = re.compile(r"[.:\n]")


def _sentences(block_lines: list[str]) -> list[str]:
    """Comment text, lowercased, ASCII only, split at '.', ':' and newlines."""
    text = "\n".join(ln.lstrip("#").strip() for ln in block_lines)
    text = text.encode("ascii", "ignore").decode("ascii").lower()
    out = []
    for piece in _SENTENCE_SPLIT.split(text):
        piece = " ".join(piece.split())
        if piece:
            out.append(piece)
    return out


def parse_te_comments(text: str, unit: str) -> tuple[CommentDoc, CommentDoc]:
    """Attach each run of ``#`` lines to the statement directly below it.

    A statement whose first keyword is ``neverallow`` routes the block to the
    neverallow document; everything else (allow rules, macro calls) routes to
    the allow document. Best effort: blocks with no adjacent statement are
    dropped.
    """
    allow_doc = CommentDoc(unit, ALLOW)
    never_doc = CommentDoc(unit, NEVERALLOW)
    pending: list[str] = []
    for raw in text.split("\n"):
        line = raw.strip()
        if line.startswith("#"):
            pending.append(line)
            continue
        if not line:
            pending = []
            continue
        if pending:
            first = re.split(r"[^A-Za-z0-9_]", line, 1)[0]
            doc = never_doc if first == NEVERALLOW else allow_doc
            doc.sentences.extend(_sentences(pending))
            pending = []
    return allow_doc, never_doc


# --- Android side tables -----------------------------------------------------


@dataclass(frozen=True)
class FileContextEntry:
    path_pattern: str
    label_type: str


@dataclass(frozen=True)
class RcServiceEntry:
    service_name: str
    executable_path: str
    user: str


@dataclass(frozen=True)
class SeappEntry:
    selector: tuple[tuple[str, str], ...]
    domain: str
    assigned_user_class: str


def parse_file_contexts(text: str) -> list[FileContextEntry]:
    out = []
    for raw in text.split("\n"):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 2:
            continue
        context = fields[-1]
        parts = context.split(":")
        if len(parts) < 3:
            continue
        out.append(FileContextEntry(fields[0], parts[2]))
    return out


def parse_rc(text: str) -> list[RcServiceEntry]:
    """Init script service blocks. A service without a ``user`` option runs as root."""
    out = []
    name = path = None
    user = "root"
    for raw in text.split("\n"):
        stripped = raw.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        indented = stripped[:1] in (" ", "\t")
        fields = stripped.split()
        if not indented:
            if name is not None:
                out.append(RcServiceEntry(name, path, user))
                name = path = None
                user = "root"
            if fields[0] == "service" and len(fields) >= 3 and fields[2].startswith("/"):
                name, path = fields[1], fields[2]
        elif name is not None and fields[0] == "user" and len(fields) >= 2:
            user = fields[1]
    if name is not None:
        out.append(RcServiceEntry(name, path, user))
    return out


def parse_seapp(text: str) -> list[SeappEntry]:
    out = []
    for raw in text.split("\n"):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kv = {}
        ok = True
        for field_ in line.split():
            if "=" not in field_:
                ok = False
                break
            k, v = field_.split("=", 1)
            kv[k] = v
        if not ok or "domain" not in kv or not kv["domain"]:
            continue
        out.append(
            SeappEntry(
                selector=tuple(sorted(kv.items())),
                domain=kv["domain"],
                assigned_user_class=kv.get("user", ""),
            )
        )
    return out
