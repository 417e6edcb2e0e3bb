"""Categorization of flagged rules and corpus aggregate statistics.

Categories attach to findings, never remove them: a flagged rule can be the
product of an over-broad attribute, a debug-build leftover, a rule dropped
from newer reference policies, an extra grant to untrusted app domains, or
none of those (uncategorized).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .policy import AtomicRule, PolicyDb, resolve

COARSE = "coarse_attribute"
DEBUG = "debug_rule"
DEPRECATED = "deprecated"
UNTRUSTED = "untrusted_domain"
UNCATEGORIZED = "uncategorized"

DEFAULT_COARSE_THRESHOLD = 20
DEFAULT_UNTRUSTED_DOMAINS = frozenset({"untrusted_app", "isolated_app"})
DEBUG_MACROS = ("userdebug_or_eng(", "build_test_only(")
DEBUG_SUBJECTS = frozenset({"su"})


@dataclass
class Finding:
    atomic: AtomicRule
    probability: float
    source_image: str = ""
    origin: str = ""  # "file:line" of the originating device rule
    categories: set[str] = field(default_factory=set)


def scan_debug_regions(text: str) -> list[tuple[int, int]]:
    """Line ranges lying inside debug-only macro calls, parens matched
    across lines."""
    regions = []
    lines = text.split("\n")
    depth = 0
    start = None
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0]
        if depth == 0:
            hit = None
            for macro in DEBUG_MACROS:
                at = stripped.find(macro)
                if at >= 0 and (hit is None or at < hit[0]):
                    hit = (at, macro)
            if hit is None:
                continue
            start = lineno
            depth = 0
            stripped = stripped[hit[0] + len(hit[1]) - 1 :]
            depth += stripped.count("(") - stripped.count(")")
            if depth <= 0:
                regions.append((start, lineno))
                start = None
                depth = 0
        else:
            depth += stripped.count("(") - stripped.count(")")
            if depth <= 0:
                regions.append((start, lineno))
                start = None
                depth = 0
    if start is not None:
        regions.append((start, len(lines)))
    return regions


def categorize(
    findings: list[Finding],
    db: PolicyDb | None = None,
    te_sources: dict[str, str] | None = None,
    reference_history: list[tuple[str, set[AtomicRule]]] | None = None,
    coarse_threshold: int = DEFAULT_COARSE_THRESHOLD,
    untrusted_domains: frozenset[str] = DEFAULT_UNTRUSTED_DOMAINS,
) -> list[Finding]:
    """Annotate findings in place (and return them). Inputs that are absent
    simply make their category unassignable."""
    debug_regions = {
        name: scan_debug_regions(text) for name, text in (te_sources or {}).items()
    }
    rules_by_origin = {}
    if db is not None:
        for rule in db.rules:
            if rule.origin is not None:
                rules_by_origin[str(rule.origin)] = rule

    history = reference_history or []
    current: set = set()
    older: set = set()
    if history:
        current = {a.key() for a in history[-1][1]}
        for _, atoms in history[:-1]:
            older |= {a.key() for a in atoms}

    for finding in findings:
        atomic = finding.atomic
        if db is not None and finding.origin in rules_by_origin:
            rule = rules_by_origin[finding.origin]
            if (
                len(resolve(rule.subject, db)) > coarse_threshold
                or _target_size(rule, db) > coarse_threshold
            ):
                finding.categories.add(COARSE)
        if atomic.subject in DEBUG_SUBJECTS or _in_debug_region(finding.origin, debug_regions):
            finding.categories.add(DEBUG)
        if history and atomic.key() in older and atomic.key() not in current:
            finding.categories.add(DEPRECATED)
        if atomic.subject in untrusted_domains:
            finding.categories.add(UNTRUSTED)
        if not finding.categories:
            finding.categories.add(UNCATEGORIZED)
    return findings


def _target_size(rule, db: PolicyDb) -> int:
    from .policy import Name, SELF

    if isinstance(rule.target, Name) and rule.target.name == SELF:
        return 1
    return len(resolve(rule.target, db))


def _in_debug_region(origin: str, regions: dict[str, list[tuple[int, int]]]) -> bool:
    if not origin or ":" not in origin:
        return False
    file, _, lineno = origin.rpartition(":")
    try:
        line = int(lineno)
    except ValueError:
        return False
    for name, ranges in regions.items():
        if name == file or file.endswith(name) or name.endswith(file):
            return any(lo <= line <= hi for lo, hi in ranges)
    return False


# --- aggregates ----------------------------------------------------------------


@dataclass(frozen=True)
class ImageMeta:
    image: str
    version: str = ""
    manufacturer: str = ""


@dataclass(frozen=True)
class StatRow:
    group: str
    images: int
    avg_customized: float
    avg_flagged: float
    pct_flagged: float  # flagged over customized, pooled across the group
    empty: bool = False  # no customized atomics anywhere in the group


@dataclass
class CorpusStats:
    rows: list[StatRow]

    def to_csv(self) -> str:
        lines = ["group,images,avg_customized,avg_flagged,pct_flagged"]
        for r in self.rows:
            lines.append(
                f"{r.group},{r.images},{r.avg_customized:.2f},{r.avg_flagged:.2f},{r.pct_flagged:.2f}"
            )
        return "\n".join(lines) + "\n"


def stats(corpus: list[tuple[ImageMeta, int, int]]) -> CorpusStats:
    """Grouped counts over (image meta, customized count, flagged count):
    one row per image, per version, per manufacturer, plus the overall row."""
    rows = []
    for meta, customized, flagged in corpus:
        rows.append(_row(f"image:{meta.image}", [(customized, flagged)]))
    for key in ("version", "manufacturer"):
        groups: dict[str, list[tuple[int, int]]] = {}
        for meta, customized, flagged in corpus:
            value = getattr(meta, key)
            if value:
                groups.setdefault(value, []).append((customized, flagged))
        for value in sorted(groups):
            rows.append(_row(f"{key}:{value}", groups[value]))
    rows.append(_row("all", [(c, f) for _, c, f in corpus]))
    return CorpusStats(rows)


def _row(group: str, pairs: list[tuple[int, int]]) -> StatRow:
    n = len(pairs)
    total_c = sum(c for c, _ in pairs)
    total_f = sum(f for _, f in pairs)
    if total_c < total_f:
        raise ValueError(f"group {group}: flagged exceeds customized")
    pct = (100.0 * total_f / total_c) if total_c else 0.0
    return StatRow(
        group=group,
        images=n,
        avg_customized=total_c / n if n else 0.0,
        avg_flagged=total_f / n if n else 0.0,
        pct_flagged=pct,
        empty=total_c == 0,
    )
