import numpy as np
import pytest

from fairga.core import Categorical, FeatureSchema, FeatureSpec, Numeric, Sample, Token
from fairga.knowledge import EmbeddingStore, KnowledgeGraph
from fairga.model import Predictor


@pytest.fixture
def tabular_schema():
    return FeatureSchema(
        features=(
            FeatureSpec("workclass", Categorical(("private", "public", "self"))),
            FeatureSpec("hours-per-week", Numeric(0, 99)),
            FeatureSpec("sex", Categorical(("male", "female")), relates_to="gender"),
            FeatureSpec("education", Numeric(1, 16)),
        ),
        label_names=("<=50K", ">50K"),
        protected=frozenset({"gender"}),
    )


@pytest.fixture
def text_schema():
    return FeatureSchema(
        features=(FeatureSpec("text", Token()),),
        label_names=("negative", "positive"),
        protected=frozenset({"gender"}),
        markers={"gender": ("male", "female")},
    )


class StubPredictor(Predictor):
    """Predictor computing a fixed function of the sample; used as a test oracle."""

    def __init__(self, labels, fn):
        super().__init__(labels)
        self._fn = fn

    def _proba_batch(self, samples):
        return np.stack([self._fn(s) for s in samples])


@pytest.fixture
def stub_predictor_factory():
    return StubPredictor


@pytest.fixture
def constant_predictor():
    return StubPredictor(("a", "b"), lambda s: np.array([0.3, 0.7]))


@pytest.fixture
def small_graph():
    g = KnowledgeGraph()
    g.add_edge("master", "IsA", "person")
    g.add_edge("person", "HasA", "gender")
    g.add_edge("actor", "IsA", "person")
    g.add_edge("actress", "IsA", "person")
    g.add_edge("actor", "DistinctFrom", "actress")
    g.add_edge("actress", "DistinctFrom", "actor")
    g.add_edge("america", "IsA", "country")
    g.add_edge("sex", "RelatedTo", "gender")
    return g


def make_store(words_vectors):
    words = [w for w, _ in words_vectors]
    matrix = np.array([v for _, v in words_vectors], dtype=float)
    return EmbeddingStore(words, matrix)


@pytest.fixture
def embedding_store():
    rng = np.random.default_rng(42)
    clusters = {
        "positive": ["great", "good", "excellent", "wonderful", "fine"],
        "negative": ["bad", "awful", "terrible", "poor"],
        "people": ["actor", "actress", "master", "man"],
        "film": ["movie", "film", "cinema"],
    }
    pairs = []
    for words in clusters.values():
        center = rng.normal(size=12)
        center /= np.linalg.norm(center)
        for w in words:
            v = center + 0.15 * rng.normal(size=12)
            pairs.append((w, v / np.linalg.norm(v)))
    return make_store(pairs)
