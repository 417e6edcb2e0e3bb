"""Keyword triplet extraction from dependency-parsed comment sentences.

Parses arrive as CoNLL-U produced offline (any parser; golden fixtures ship
with the tests), so this module never shells out. A triplet is
(action, complement, resource): the verb, the modifiers of its object, and
the object itself, kept only when the verb is a known action or the object
a known resource.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .datadir import data_path

# Deprels treated as direct objects. An oblique is only an object when it is
# not a to/into destination (those name recipients, not things acted on).
OBJECT_DEPRELS = {"obj", "dobj", "obl"}
EXCLUDED_CASES = {"to", "into"}
COMPLEMENT_DEPRELS = {"compound", "amod", "nmod"}


class MalformedTree(Exception):
    pass


@dataclass(frozen=True)
class DepToken:
    index: int  # 1-based
    form: str
    lemma: str
    upos: str
    head: int  # 0 = root
    deprel: str


@dataclass(frozen=True, order=True)
class KeywordTriplet:
    action: str
    complement: str
    resource: str


@dataclass(frozen=True)
class Corpus:
    actions: frozenset[str]
    resources: frozenset[str]


def load_corpus(directory: str | Path | None = None) -> Corpus:
    """Bundled corpora plus the static synonym list merged into the actions."""
    if directory is None:
        actions = _read_lemmas(data_path("actions.txt")) | _read_lemmas(data_path("action_synonyms.txt"))
        resources = _read_lemmas(data_path("resources.txt"))
    else:
        directory = Path(directory)
        actions = _read_lemmas(directory / "actions.txt")
        syn = directory / "action_synonyms.txt"
        if syn.exists():
            actions |= _read_lemmas(syn)
        resources = _read_lemmas(directory / "resources.txt")
    if not actions or not resources:
        raise ValueError("corpus files must be non-empty")
    return Corpus(frozenset(actions), frozenset(resources))


def _read_lemmas(path: Path) -> set[str]:
    out = set()
    for ln in path.read_text().splitlines():
        ln = ln.strip().lower()
        if ln and not ln.startswith("#"):
            out.add(ln)
    return out


# --- CoNLL-U ----------------------------------------------------------------


def read_conllu(text: str) -> list[tuple[dict[str, str], list[DepToken]]]:
    """Sentence blocks as (metadata, tokens). Metadata comes from
    ``# key = value`` comment lines; multiword ranges and empty nodes are skipped."""
    sentences = []
    meta: dict[str, str] = {}
    tokens: list[DepToken] = []
    for raw in text.split("\n"):
        line = raw.rstrip()
        if not line:
            if tokens:
                sentences.append((meta, tokens))
            meta, tokens = {}, []
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise MalformedTree(f"expected 10 columns, got {len(cols)}: {line!r}")
        if "-" in cols[0] or "." in cols[0]:
            continue
        tokens.append(
            DepToken(
                index=int(cols[0]),
                form=cols[1],
                lemma=cols[2].lower(),
                upos=cols[3],
                head=int(cols[6]),
                deprel=cols[7],
            )
        )
    if tokens:
        sentences.append((meta, tokens))
    for _, toks in sentences:
        n = len(toks)
        for t in toks:
            if not (0 <= t.head <= n):
                raise MalformedTree(f"head {t.head} out of range for {n} tokens")
    return sentences


# --- triplet extraction -------------------------------------------------------


def extract_triplets(sentence: list[DepToken], corpus: Corpus) -> set[KeywordTriplet]:
    """Keyword triplets of one parsed sentence.

    Verbs and objects are collected first; a verb in the action corpus
    contributes (verb, complement, object) for each of its objects, and an
    object in the resource corpus contributes (predicate, complement, object)
    even when its verb is out of corpus. Duplicates collapse.
    """
    if sum(1 for t in sentence if t.head == 0) != 1:
        raise MalformedTree("sentence must have exactly one root")
    by_index = {t.index: t for t in sentence}
    children: dict[int, list[DepToken]] = {}
    for t in sentence:
        children.setdefault(t.head, []).append(t)

    verbs, objects = _verbs_and_objects(sentence, children)

    triplets: set[KeywordTriplet] = set()
    for verb in verbs:
        if verb.lemma not in corpus.actions:
            continue
        for obj in objects:
            if _governing_verb(obj, by_index) is verb:
                triplets.add(KeywordTriplet(verb.lemma, _complement(obj, children), obj.lemma))
    for obj in objects:
        if obj.lemma not in corpus.resources:
            continue
        predicate = _governing_verb(obj, by_index)
        action = predicate.lemma if predicate is not None else ""
        triplets.add(KeywordTriplet(action, _complement(obj, children), obj.lemma))
    return triplets


def _verbs_and_objects(sentence, children):
    verbs = [t for t in sentence if t.upos == "VERB"]
    objects = []
    for t in sentence:
        if t.deprel in ("obj", "dobj"):
            objects.append(t)
        elif t.deprel == "obl" and not _has_excluded_case(t, children):
            objects.append(t)
    # Conjuncts of an object are objects too ("read files and sockets").
    seen = {t.index for t in objects}
    frontier = list(objects)
    while frontier:
        tok = frontier.pop()
        for child in children.get(tok.index, []):
            if child.deprel == "conj" and child.index not in seen:
                seen.add(child.index)
                objects.append(child)
                frontier.append(child)
    objects.sort(key=lambda t: t.index)
    return verbs, objects


def _has_excluded_case(tok: DepToken, children) -> bool:
    return any(
        c.deprel == "case" and c.lemma in EXCLUDED_CASES for c in children.get(tok.index, [])
    )


def _complement(obj: DepToken, children) -> str:
    mods = [c for c in children.get(obj.index, []) if c.deprel in COMPLEMENT_DEPRELS]
    mods.sort(key=lambda t: t.index)
    return " ".join(m.lemma for m in mods)


def _governing_verb(tok: DepToken, by_index) -> DepToken | None:
    """Nearest verb up the head chain (conj objects attach to a sibling object)."""
    seen = set()
    cur = tok
    while cur.head != 0 and cur.head not in seen:
        seen.add(cur.index)
        cur = by_index[cur.head]
        if cur.upos == "VERB":
            return cur
    return None


def triplet_tokens(triplet: KeywordTriplet) -> list[str]:
    """The triplet as a normalized token sequence for embedding."""
    tokens = []
    if triplet.action:
        tokens.append(triplet.action)
    tokens.extend(triplet.complement.split())
    tokens.append(triplet.resource)
    return tokens


def docs_from_conllu(
    text: str, corpus: Corpus
) -> list[tuple[str, str, list[KeywordTriplet]]]:
    """Group parsed sentences by (unit, polarity) and extract triplets.

    Triplets repeat across sentences on purpose: frequent behaviors should
    weigh more in the document vector.
    """
    grouped: dict[tuple[str, str], list[KeywordTriplet]] = {}
    order: list[tuple[str, str]] = []
    for meta, tokens in read_conllu(text):
        unit = meta.get("unit", "unknown")
        polarity = meta.get("polarity", "allow")
        key = (unit, polarity)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].extend(sorted(extract_triplets(tokens, corpus)))
    return [(unit, pol, grouped[(unit, pol)]) for unit, pol in order]
