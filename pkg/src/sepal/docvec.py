"""Distributed bag-of-words paragraph vectors over keyword triplets.

Each (unit, polarity) comment document becomes one dense vector: the
document id is trained to predict the tokens of its triplets under negative
sampling. Written from scratch so training is single-threaded and bitwise
reproducible for a fixed seed; off-the-shelf trainers do not guarantee
either. Documents with no triplets stay at the zero vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .comments import KeywordTriplet, triplet_tokens

NEGATIVE_SAMPLES = 5
INITIAL_LR = 0.025
MIN_LR_FRACTION = 1e-4
UNIGRAM_POWER = 0.75


class EmptyCorpus(Exception):
    pass


@dataclass(frozen=True)
class DocVector:
    unit: str
    polarity: str
    vector: np.ndarray  # shape (dim,), float32

    def __post_init__(self):
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("document vector has non-finite components")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -30.0, 30.0)))


class DbowTrainer:
    """Training state: one vector per non-empty document, one output vector
    per token, and a unigram^0.75 noise distribution for negatives."""

    def __init__(self, docs: list[tuple[str, str, list[KeywordTriplet]]], dim: int = 300, seed: int = 7):
        self.docs = docs
        self.dim = dim
        token_lists = [
            [tok for trip in triplets for tok in triplet_tokens(trip)]
            for _, _, triplets in docs
        ]
        self.trainable = [i for i, toks in enumerate(token_lists) if toks]
        if not self.trainable:
            raise EmptyCorpus("no document has any triplet")
        self.vocab: dict[str, int] = {}
        counts: list[int] = []
        self.encoded: list[list[int]] = []
        for i in self.trainable:
            ids = []
            for tok in token_lists[i]:
                if tok not in self.vocab:
                    self.vocab[tok] = len(self.vocab)
                    counts.append(0)
                counts[self.vocab[tok]] += 1
                ids.append(self.vocab[tok])
            self.encoded.append(ids)
        weights = np.array(counts, dtype=np.float64) ** UNIGRAM_POWER
        self.noise_cdf = np.cumsum(weights / weights.sum())
        self.rng = np.random.default_rng(seed)
        self.doc_vecs = self.rng.uniform(-0.5 / dim, 0.5 / dim, size=(len(self.trainable), dim)).astype(
            np.float32
        )
        self.token_out = np.zeros((len(self.vocab), dim), dtype=np.float32)

    def _negatives(self, rng: np.random.Generator) -> np.ndarray:
        return np.searchsorted(self.noise_cdf, rng.random(NEGATIVE_SAMPLES)).astype(np.intp)

    def train(self, epochs: int) -> None:
        total_steps = max(1, epochs * sum(len(ids) for ids in self.encoded))
        step = 0
        for _ in range(epochs):
            for d, ids in enumerate(self.encoded):
                for w in ids:
                    lr = INITIAL_LR * max(MIN_LR_FRACTION, 1.0 - step / total_steps)
                    self._step(d, w, lr)
                    step += 1

    def _step(self, d: int, w: int, lr: float) -> None:
        negatives = self._negatives(self.rng)
        dvec = self.doc_vecs[d]
        rows = np.concatenate(([w], negatives))
        labels = np.zeros(len(rows), dtype=np.float32)
        labels[0] = 1.0
        outs = self.token_out[rows]  # (k+1, dim)
        err = (_sigmoid(outs @ dvec) - labels) * lr
        dgrad = err @ outs
        # np.add.at accumulates when one token is drawn twice as a negative.
        np.add.at(self.token_out, rows, -np.outer(err, dvec))
        self.doc_vecs[d] = dvec - dgrad

    def loss(self, seed: int = 997) -> float:
        """Average negative-sampling loss over every (doc, token) pair, with
        negatives drawn from a dedicated generator so two evaluations of the
        same state are comparable."""
        rng = np.random.default_rng(seed)
        total = 0.0
        n = 0
        for d, ids in enumerate(self.encoded):
            dvec = self.doc_vecs[d].astype(np.float64)
            for w in ids:
                negs = self._negatives(rng)
                pos = _sigmoid(self.token_out[w].astype(np.float64) @ dvec)
                neg = _sigmoid(self.token_out[negs].astype(np.float64) @ dvec)
                total += -np.log(max(pos, 1e-12)) - np.log(np.maximum(1.0 - neg, 1e-12)).sum()
                n += 1
        return total / max(n, 1)

    def vectors(self) -> list[DocVector]:
        pos = {i: k for k, i in enumerate(self.trainable)}
        out = []
        for i, (unit, polarity, _) in enumerate(self.docs):
            if i in pos:
                vec = self.doc_vecs[pos[i]].copy()
            else:
                vec = np.zeros(self.dim, dtype=np.float32)
            out.append(DocVector(unit, polarity, vec))
        return out


def embed_docs(
    docs: list[tuple[str, str, list[KeywordTriplet]]],
    dim: int = 300,
    epochs: int = 40,
    seed: int = 7,
) -> list[DocVector]:
    """Train document vectors; order and count match the input."""
    trainer = DbowTrainer(docs, dim=dim, seed=seed)
    trainer.train(epochs)
    return trainer.vectors()
