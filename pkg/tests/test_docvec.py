import numpy as np
import pytest

from sepal.comments import KeywordTriplet
from sepal.docvec import DbowTrainer, EmptyCorpus, embed_docs

T = KeywordTriplet


def doc(unit, polarity, *triplets):
    return (unit, polarity, list(triplets))


def test_zero_epochs_keeps_seeded_initialization():
    docs = [doc("u", "allow", T("send", "dump", "information"))]
    vectors = embed_docs(docs, dim=16, epochs=0, seed=5)
    rng = np.random.default_rng(5)
    expected = rng.uniform(-0.5 / 16, 0.5 / 16, size=(1, 16)).astype(np.float32)
    assert np.array_equal(vectors[0].vector, expected[0])


def test_empty_doc_gets_zero_vector():
    docs = [doc("a", "allow", T("read", "", "file")), doc("b", "neverallow")]
    vectors = embed_docs(docs, dim=8, epochs=3, seed=1)
    assert np.any(vectors[0].vector != 0)
    assert np.array_equal(vectors[1].vector, np.zeros(8, dtype=np.float32))


def test_empty_corpus_raises():
    with pytest.raises(EmptyCorpus):
        embed_docs([doc("a", "allow"), doc("b", "allow")], dim=8, epochs=1, seed=1)


def test_training_is_bitwise_deterministic():
    docs = [
        doc("a", "allow", T("read", "", "file"), T("write", "", "file")),
        doc("b", "allow", T("send", "dump", "information")),
        doc("c", "neverallow", T("open", "camera", "device")),
    ]
    first = embed_docs(docs, dim=32, epochs=10, seed=9)
    second = embed_docs(docs, dim=32, epochs=10, seed=9)
    for u, v in zip(first, second):
        assert u.vector.tobytes() == v.vector.tobytes()


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_shared_triplets_embed_closer_than_disjoint():
    shared = [T("read", "", "file"), T("write", "", "file"), T("open", "data", "file")]
    other = [T("bind", "", "socket"), T("connect", "network", "socket"), T("send", "", "message")]
    docs = [
        doc("d1", "allow", *shared),
        doc("d2", "allow", *shared),
        doc("d3", "allow", *other),
    ]
    vectors = embed_docs(docs, dim=32, epochs=60, seed=13)
    v1, v2, v3 = (dv.vector for dv in vectors)
    assert cosine(v1, v2) > cosine(v1, v3)


def test_loss_decreases_with_training():
    docs = [
        doc("a", "allow", T("read", "", "file"), T("write", "", "file")),
        doc("b", "allow", T("send", "dump", "information"), T("use", "", "socket")),
        doc("c", "neverallow", T("open", "camera", "device"), T("read", "", "log")),
    ]
    trainer = DbowTrainer(docs, dim=32, seed=3)
    before = trainer.loss()
    trainer.train(epochs=40)
    after = trainer.loss()
    assert after <= before


def test_vector_count_and_order_match_input():
    docs = [doc("z", "allow", T("read", "", "file")), doc("a", "neverallow", T("write", "", "file"))]
    vectors = embed_docs(docs, dim=8, epochs=1, seed=2)
    assert [(v.unit, v.polarity) for v in vectors] == [("z", "allow"), ("a", "neverallow")]
