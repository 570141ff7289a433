"""Sensitive-word knowledge graph, embeddings and counterpart pairs.

A word is sensitive when a directed path connects it to a protected
attribute node. DistinctFrom edges mark counterpart pairs (actor/actress)
and are excluded from reachability; every other relation is traversed.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import MalformedTriple, NoPairAvailable, OovWord

log = logging.getLogger(__name__)

RELATIONS = ("IsA", "RelatedTo", "DistinctFrom", "HasA", "SimilarTo")
_RELATION_LOOKUP = {r.lower(): r for r in RELATIONS}

# Fallback counterpart value words per protected attribute; a schema's
# ``markers`` mapping overrides these.
DEFAULT_MARKERS = {
    "gender": ("male", "female"),
    "age": ("young", "old"),
    "country": ("american", "foreign"),
}

ASSET_DIR = Path(__file__).parent / "assets"
DEFAULT_GRAPH_PATH = ASSET_DIR / "knowledge_graph.tsv"
DEFAULT_EMBEDDINGS_PATH = ASSET_DIR / "mini_embeddings.txt"


@dataclass(frozen=True)
class SensitivePair:
    """Counterpart substitution pair for one sensitive word."""

    original: str
    tilde: str
    neg_tilde: str
    protected_attr: str

    def __post_init__(self):
        if self.tilde == self.neg_tilde:
            raise ValueError("counterpart pair must differ")


class KnowledgeGraph:
    """Directed relation triples with adjacency indexes for path queries."""

    def __init__(self, edges: Iterable[tuple[str, str, str]] = ()):
        self.edges: list[tuple[str, str, str]] = []
        self._out: dict[str, list[tuple[str, str]]] = {}
        self._in: dict[str, list[tuple[str, str]]] = {}
        self.nodes: set[str] = set()
        for subject, relation, obj in edges:
            self.add_edge(subject, relation, obj)

    def add_edge(self, subject: str, relation: str, obj: str) -> None:
        subject, obj = subject.lower(), obj.lower()
        if relation not in RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        if subject == obj:
            raise ValueError(f"self-loop on {subject!r}")
        self.edges.append((subject, relation, obj))
        self._out.setdefault(subject, []).append((relation, obj))
        self._in.setdefault(obj, []).append((relation, subject))
        self.nodes.add(subject)
        self.nodes.add(obj)

    def successors(self, word: str, skip_distinct: bool = True):
        for relation, obj in self._out.get(word.lower(), ()):
            if skip_distinct and relation == "DistinctFrom":
                continue
            yield obj

    def counterparts(self, word: str) -> list[str]:
        """DistinctFrom neighbors, outgoing first, lexicographic within."""
        word = word.lower()
        out = sorted(o for r, o in self._out.get(word, ()) if r == "DistinctFrom")
        into = sorted(s for r, s in self._in.get(word, ()) if r == "DistinctFrom")
        return out + [w for w in into if w not in out]

    def has_edge(self, subject: str, relation: str, obj: str) -> bool:
        return (subject.lower(), relation, obj.lower()) in set(self.edges)

    def copy(self) -> "KnowledgeGraph":
        return KnowledgeGraph(self.edges)


def load_graph(path) -> KnowledgeGraph:
    """Parse a graph file of tab-separated ``subject<TAB>relation<TAB>object``."""
    graph = KnowledgeGraph()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MalformedTriple(lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            subject, relation, obj = (p.strip() for p in parts)
            canonical = _RELATION_LOOKUP.get(relation.lower())
            if canonical is None:
                raise MalformedTriple(lineno, f"unknown relation {relation!r}")
            if subject.lower() == obj.lower():
                raise MalformedTriple(lineno, f"self-loop on {subject!r}")
            graph.add_edge(subject, canonical, obj)
    return graph


class EmbeddingStore:
    """Word vectors of a fixed dimension, case-insensitive lookup."""

    def __init__(self, words: Sequence[str], matrix: np.ndarray):
        self.words = tuple(w.lower() for w in words)
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or len(self.words) != self.matrix.shape[0]:
            raise ValueError("embedding matrix shape does not match vocabulary")
        self._index = {w: i for i, w in enumerate(self.words)}
        norms = np.linalg.norm(self.matrix, axis=1)
        norms[norms == 0] = 1.0
        self._unit = self.matrix / norms[:, None]

    @classmethod
    def from_file(cls, path) -> "EmbeddingStore":
        words: list[str] = []
        rows: list[list[float]] = []
        dim = None
        with open(path, encoding="utf-8") as fh:
            for raw in fh:
                parts = raw.split()
                if len(parts) < 2:
                    continue
                word = parts[0].lower()
                vec = [float(p) for p in parts[1:]]
                if dim is None:
                    dim = len(vec)
                elif len(vec) != dim:
                    raise ValueError(f"inconsistent embedding dimension for {word!r}")
                if word in words:
                    continue
                words.append(word)
                rows.append(vec)
        if not words:
            raise ValueError(f"empty embedding file {path}")
        return cls(words, np.array(rows))

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._index

    def vector(self, word: str) -> np.ndarray:
        idx = self._index.get(word.lower())
        if idx is None:
            raise OovWord(word)
        return self.matrix[idx]

    def cosine_to_all(self, word: str) -> np.ndarray:
        idx = self._index.get(word.lower())
        if idx is None:
            raise OovWord(word)
        return self._unit @ self._unit[idx]


def expand_with_embeddings(
    graph: KnowledgeGraph,
    store: EmbeddingStore,
    candidate_words: Iterable[str],
    threshold: float = 0.7,
) -> KnowledgeGraph:
    """Attach candidates to graph words whose cosine similarity exceeds the
    threshold (strictly). Candidates missing from the store are skipped."""
    graph_words = sorted(w for w in graph.nodes if w in store)
    expanded = graph.copy()
    skipped = 0
    if not graph_words:
        return expanded
    anchor = np.stack([store.vector(w) for w in graph_words])
    anchor_norms = np.linalg.norm(anchor, axis=1)
    anchor_norms[anchor_norms == 0] = 1.0
    anchor_unit = anchor / anchor_norms[:, None]
    for candidate in candidate_words:
        word = candidate.lower()
        if word not in store:
            skipped += 1
            continue
        vec = store.vector(word)
        norm = np.linalg.norm(vec)
        if norm == 0:
            continue
        sims = anchor_unit @ (vec / norm)
        for gw, sim in zip(graph_words, sims):
            if sim > threshold and gw != word:
                expanded.add_edge(word, "SimilarTo", gw)
    if skipped:
        log.info("embedding expansion skipped %d out-of-vocabulary candidates", skipped)
    return expanded


def is_sensitive(word: str, protected: Iterable[str], graph: KnowledgeGraph) -> Optional[str]:
    """Protected attribute reached by the shortest directed path, if any."""
    protected_set = {p.lower() for p in protected}
    start = word.lower()
    if start in protected_set:
        return start
    if start not in graph.nodes:
        return None
    seen = {start}
    frontier = deque([start])
    while frontier:
        found: list[str] = []
        next_frontier: list[str] = []
        for node in frontier:
            for succ in graph.successors(node):
                if succ in protected_set:
                    found.append(succ)
                if succ not in seen:
                    seen.add(succ)
                    next_frontier.append(succ)
        if found:
            return min(found)
        frontier = deque(next_frontier)
    return None


def get_pair(
    word: str,
    protected_attr: str,
    graph: KnowledgeGraph,
    markers: Optional[dict] = None,
) -> SensitivePair:
    """Counterpart pair for a sensitive word.

    An explicit DistinctFrom counterpart wins (actor -> actor/actress);
    otherwise the protected attribute's value markers prefix the word
    (master -> "male master"/"female master").
    """
    word = word.lower()
    counterparts = graph.counterparts(word)
    if counterparts:
        return SensitivePair(
            original=word, tilde=word, neg_tilde=counterparts[0], protected_attr=protected_attr
        )
    lookup = dict(DEFAULT_MARKERS)
    if markers:
        lookup.update({k.lower(): tuple(v) for k, v in markers.items()})
    pair = lookup.get(protected_attr.lower())
    if pair is None:
        raise NoPairAvailable(
            f"no counterpart for {word!r}: no DistinctFrom edge and no markers for "
            f"{protected_attr!r}"
        )
    return SensitivePair(
        original=word,
        tilde=f"{pair[0]} {word}",
        neg_tilde=f"{pair[1]} {word}",
        protected_attr=protected_attr,
    )


def synonyms(
    word: str,
    store: EmbeddingStore,
    k: int,
    graph: Optional[KnowledgeGraph] = None,
    protected: Iterable[str] = (),
) -> list[str]:
    """k nearest neighbors by cosine, excluding the word itself and any
    sensitive word; ties break lexicographically."""
    if k <= 0:
        return []
    sims = store.cosine_to_all(word)
    target = word.lower()
    ranked = sorted(zip(store.words, sims), key=lambda ws: (-ws[1], ws[0]))
    out: list[str] = []
    for candidate, _ in ranked:
        if candidate == target:
            continue
        if graph is not None and is_sensitive(candidate, protected, graph) is not None:
            continue
        out.append(candidate)
        if len(out) == k:
            break
    return out


def load_default_graph() -> KnowledgeGraph:
    return load_graph(DEFAULT_GRAPH_PATH)


def load_default_embeddings() -> EmbeddingStore:
    return EmbeddingStore.from_file(DEFAULT_EMBEDDINGS_PATH)
