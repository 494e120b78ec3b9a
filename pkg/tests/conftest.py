import numpy as np
import pytest

from corelw.corpus import Corpus, Document
from corelw.embeddings import EmbeddedDoc


def make_doc(doc_id, score, n_tokens=3, tokens=None):
    tokens = tuple(tokens or [f"w{k}" for k in range(n_tokens)])
    return Document(doc_id, " ".join(tokens), tokens, score)


def random_embedded(rng, doc_id, score, n, d):
    return EmbeddedDoc(doc_id, rng.normal(size=(d, n)), score)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_corpus():
    docs = [make_doc(f"d{k:02d}", 1 + k % 4, 3 + k % 3) for k in range(16)]
    return Corpus(docs, 4)
