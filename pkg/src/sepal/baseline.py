"""Nearest-neighbor rule classification baseline.

Two atomic rules are neighbors when they agree on exactly three of the four
fields. The verdict is the majority label among a target's neighbors in the
training set, unless there are fewer than ``m`` neighbors or the majority is
thinner than ``sigma``, in which case the rule stays unclassified. Exact
ties are unclassified too.
"""

from __future__ import annotations

from dataclasses import dataclass

from .policy import ALLOW, NEVERALLOW, AtomicRule

UNCLASSIFIED = "unclassified"

DEFAULT_M = 10
DEFAULT_SIGMA = 0.55


@dataclass(frozen=True)
class NeighborVerdict:
    verdict: str  # allow / neverallow / unclassified
    neighbor_count: int
    majority_fraction: float


class NeighborIndex:
    """Count-indexed training set: four projections of the tuple, each with
    one field wildcarded, plus the exact tuple, so neighbor counts come out
    of dictionary lookups instead of scans."""

    def __init__(self, train: set[AtomicRule]):
        self.proj: list[dict[tuple, list[int]]] = [dict() for _ in range(4)]
        self.exact: dict[tuple[str, str, str, str], list[int]] = {}
        for atom in train:
            key = atom.key()
            counts = self.exact.setdefault(key, [0, 0])
            counts[0 if atom.label == ALLOW else 1] += 1
            for f in range(4):
                wild = key[:f] + key[f + 1 :]
                slot = self.proj[f].setdefault(wild, [0, 0])
                slot[0 if atom.label == ALLOW else 1] += 1

    def neighbor_counts(self, target: AtomicRule) -> tuple[int, int]:
        """(allow, neverallow) counts among rules agreeing on exactly 3 fields."""
        key = target.key()
        allow = never = 0
        for f in range(4):
            wild = key[:f] + key[f + 1 :]
            slot = self.proj[f].get(wild)
            if slot:
                allow += slot[0]
                never += slot[1]
        # Each projection also matched rules equal on all four fields;
        # remove those four overcounts.
        same = self.exact.get(key)
        if same:
            allow -= 4 * same[0]
            never -= 4 * same[1]
        return allow, never


def nn_classify(
    train: set[AtomicRule] | NeighborIndex,
    target: AtomicRule,
    m: int = DEFAULT_M,
    sigma: float = DEFAULT_SIGMA,
) -> NeighborVerdict:
    index = train if isinstance(train, NeighborIndex) else NeighborIndex(train)
    allow, never = index.neighbor_counts(target)
    count = allow + never
    if count == 0:
        return NeighborVerdict(UNCLASSIFIED, 0, 0.0)
    majority = max(allow, never)
    fraction = majority / count
    if count < m or fraction < sigma or allow == never:
        return NeighborVerdict(UNCLASSIFIED, count, fraction)
    return NeighborVerdict(ALLOW if allow > never else NEVERALLOW, count, fraction)


@dataclass
class BaselineEvaluation:
    correct: int
    wrong: int
    unclassified: int

    @property
    def total(self) -> int:
        return self.correct + self.wrong + self.unclassified

    @property
    def accuracy_counting_unclassified(self) -> float:
        """Unclassified counted as errors; the system answered nothing."""
        return self.correct / self.total if self.total else 0.0

    @property
    def accuracy_of_classified(self) -> float:
        """Denominator restricted to rules the baseline dared to classify."""
        classified = self.correct + self.wrong
        return self.correct / classified if classified else 0.0


def evaluate_baseline(
    train: set[AtomicRule],
    targets: list[AtomicRule],
    m: int = DEFAULT_M,
    sigma: float = DEFAULT_SIGMA,
) -> BaselineEvaluation:
    index = NeighborIndex(train)
    result = BaselineEvaluation(0, 0, 0)
    for target in targets:
        verdict = nn_classify(index, target, m, sigma)
        if verdict.verdict == UNCLASSIFIED:
            result.unclassified += 1
        elif verdict.verdict == target.label:
            result.correct += 1
        else:
            result.wrong += 1
    return result
