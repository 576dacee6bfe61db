import numpy as np
import pytest

from layoutlab.dataset import build_synthetic_corpus, build_triplets, synthesize_random_layout
from layoutlab.relations import derive_relations


@pytest.fixture(scope="session")
def small_corpus():
    return build_synthetic_corpus(120, 3)


@pytest.fixture(scope="session")
def sample_graph():
    return synthesize_random_layout(10, 42)


@pytest.fixture(scope="session")
def sample_matrix(sample_graph):
    return derive_relations(sample_graph)


@pytest.fixture(scope="session")
def small_triplets(small_corpus):
    return build_triplets(small_corpus, small_corpus.ids[:6], 11)
