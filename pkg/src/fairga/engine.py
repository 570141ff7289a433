"""Explanation-guided genetic search for discriminatory inputs.

The run has two phases. Seed selection explains each dataset sample and
keeps those whose protected-related position ranks within the top epsilon
of the local explanation. The optimization phase then evolves populations
built from the seeds: roulette-wheel selection on the probability gap
between protected-variant substitutions, contiguous-fragment crossover,
valuewise mutation, and a discriminatory check of every member per
generation. A random-exploration baseline shares the budget accounting so
the two modes are directly comparable.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    Categorical,
    DiscriminatoryRecord,
    FeatureSchema,
    Individual,
    Numeric,
    Origin,
    Population,
    RunMetrics,
    Sample,
    dedupe_key,
)
from .data import Dataset
from .errors import (
    ConfigError,
    EmptySeedSet,
    NoPairAvailable,
    NoSensitiveFeature,
    OovWord,
)
from .explain import Explainer, rank_num
from .knowledge import EmbeddingStore, KnowledgeGraph, SensitivePair, get_pair, is_sensitive, synonyms
from .model import Predictor

log = logging.getLogger(__name__)

MODE_GA = "ga"
MODE_RANDOM = "random"

# Variant cap for multi-valued tabular protected features.
MAX_PROTECTED_VARIANTS = 10


@dataclass
class EngineConfig:
    epsilon: int = 5
    seed_num: int = 100
    max_generations: Optional[int] = None
    time_budget: Optional[float] = None
    max_checks: Optional[int] = None
    cr: float = 0.9
    mr: float = 0.05
    k: int = 20
    rng_seed: int = 0
    mode: str = MODE_GA

    def __post_init__(self):
        if self.epsilon < 1:
            raise ConfigError("epsilon must be >= 1")
        if not 0.0 <= self.cr <= 1.0 or not 0.0 <= self.mr <= 1.0:
            raise ConfigError("cr and mr must lie in [0, 1]")
        if self.mode not in (MODE_GA, MODE_RANDOM):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.max_generations is None and self.time_budget is None and self.max_checks is None:
            raise ConfigError("at least one of max_generations/time_budget/max_checks must bound the run")
        if self.seed_num < 1:
            raise ConfigError("seed_num must be >= 1")


@dataclass(frozen=True)
class Seed:
    sample: Sample
    sensitive_index: int
    rank: int


class SensitivityResolver:
    """Maps sample positions to protected attributes and builds variants.

    Tabular positions resolve through the schema's relates_to markers, with
    the knowledge graph as a fallback on feature names. Text positions
    resolve per token through graph reachability.
    """

    def __init__(
        self,
        schema: FeatureSchema,
        protected: Optional[Sequence[str]] = None,
        graph: Optional[KnowledgeGraph] = None,
        markers: Optional[dict] = None,
    ):
        self.schema = schema
        self.protected = frozenset(p.lower() for p in (protected or schema.protected))
        self.graph = graph
        self.markers = dict(schema.markers)
        if markers:
            self.markers.update(markers)
        self._word_cache: dict[str, Optional[str]] = {}
        self._tabular: list[tuple[int, str]] = []
        if not schema.is_text:
            for i, spec in enumerate(schema.features):
                if spec.relates_to and spec.relates_to.lower() in self.protected:
                    self._tabular.append((i, spec.relates_to.lower()))
                elif graph is not None:
                    attr = is_sensitive(spec.name, self.protected, graph)
                    if attr is not None:
                        self._tabular.append((i, attr))

    @property
    def is_text(self) -> bool:
        return self.schema.is_text

    def _word_attr(self, word: str) -> Optional[str]:
        if word not in self._word_cache:
            if self.graph is None:
                self._word_cache[word] = None
            else:
                self._word_cache[word] = is_sensitive(word, self.protected, self.graph)
        return self._word_cache[word]

    @property
    def has_schema_positions(self) -> bool:
        return bool(self._tabular)

    def positions(self, sample: Sample) -> list[tuple[int, str]]:
        """(position, protected attribute) pairs for the sample."""
        if not self.is_text:
            return list(self._tabular)
        return [
            (i, attr)
            for i, token in enumerate(sample.values)
            if (attr := self._word_attr(token)) is not None
        ]

    def dedupe_positions(self, sample: Sample) -> frozenset[int]:
        return frozenset(i for i, _ in self.positions(sample))

    def pair_for(self, sample: Sample, position: int, attr: str) -> SensitivePair:
        """Counterpart substitution pair at one sensitive position."""
        if self.is_text:
            if self.graph is None:
                raise NoPairAvailable("text mode requires a knowledge graph")
            return get_pair(sample.values[position], attr, self.graph, self.markers)
        spec = self.schema.features[position]
        if isinstance(spec.kind, Categorical):
            domain = spec.kind.domain
            if len(domain) < 2:
                raise NoPairAvailable(f"feature {spec.name!r} has a single value")
            return SensitivePair(
                original=str(sample.values[position]),
                tilde=domain[0],
                neg_tilde=domain[-1],
                protected_attr=attr,
            )
        kind = spec.kind
        if kind.min == kind.max:
            raise NoPairAvailable(f"feature {spec.name!r} has a single value")
        return SensitivePair(
            original=str(sample.values[position]),
            tilde=str(kind.min),
            neg_tilde=str(kind.max),
            protected_attr=attr,
        )

    def substitute(self, sample: Sample, position: int, value: str) -> Sample:
        """Place a counterpart value (word, phrase, or rendered number)."""
        if self.is_text:
            return sample.spliced(position, value.split())
        spec = self.schema.features[position]
        if isinstance(spec.kind, Categorical):
            return sample.replaced(position, spec.kind.domain.index(value))
        return sample.replaced(position, int(value))

    def check_variants(self, sample: Sample, position: int, attr: str, rng) -> list[Sample]:
        """Variant samples whose labels the discriminatory check compares."""
        if self.is_text:
            pair = self.pair_for(sample, position, attr)
            return [
                self.substitute(sample, position, pair.tilde),
                self.substitute(sample, position, pair.neg_tilde),
            ]
        spec = self.schema.features[position]
        values = list(spec.kind.domain) if isinstance(spec.kind, Categorical) else [
            str(v) for v in spec.kind.grid()
        ]
        if len(values) > MAX_PROTECTED_VARIANTS:
            chosen = rng.choice(len(values), size=MAX_PROTECTED_VARIANTS, replace=False)
            values = [values[i] for i in sorted(chosen)]
        return [self.substitute(sample, position, v) for v in values]


# ---------------------------------------------------------------------------
# Initialization phase

def _best_sensitive_rank(sample, f, explainer: Explainer, resolver, stream: int):
    positions = resolver.positions(sample)
    if not positions:
        return None
    label = int(np.argmax(f.predict_proba(sample)))
    explanation = explainer.explain(sample, f, label, stream=stream)
    best = min((rank_num(i, explanation), i) for i, _ in positions)
    return best  # (rank, position)


def select_seeds(
    dataset: Dataset,
    protected: Sequence[str],
    f: Predictor,
    explainer: Explainer,
    epsilon: int,
    seed_num: int,
    resolver: SensitivityResolver,
) -> list[Seed]:
    """Scan the dataset in order, keeping samples whose best-ranked
    sensitive position lands within the top epsilon of its explanation."""
    if not resolver.is_text and not resolver.has_schema_positions:
        raise NoSensitiveFeature("no tabular feature resolves to a protected attribute")
    seeds: list[Seed] = []
    any_sensitive = False
    for row, sample in enumerate(dataset.samples):
        if len(seeds) >= seed_num:
            break
        best = _best_sensitive_rank(sample, f, explainer, resolver, stream=row)
        if best is None:
            continue
        any_sensitive = True
        rank, position = best
        if rank <= epsilon:
            seeds.append(
                Seed(
                    sample=Sample(sample.values, origin=Origin.SEED, seed_id=row),
                    sensitive_index=position,
                    rank=rank,
                )
            )
    if not any_sensitive:
        raise NoSensitiveFeature("no sample contains a resolvable sensitive position")
    if not seeds:
        raise EmptySeedSet(f"no sample ranked a sensitive position within epsilon={epsilon}")
    return seeds


def auto_epsilon(
    dataset: Dataset,
    f: Predictor,
    explainer: Explainer,
    resolver: SensitivityResolver,
    rng_seed: int = 0,
    sample_size: int = 100,
    top_fraction: float = 0.2,
) -> int:
    """Rank threshold set so roughly the top 20% of samples qualify as seeds."""
    candidates = [
        (row, s) for row, s in enumerate(dataset.samples) if resolver.positions(s)
    ]
    if not candidates:
        raise NoSensitiveFeature("no sample contains a resolvable sensitive position")
    rng = np.random.default_rng(rng_seed)
    if len(candidates) > sample_size:
        picked = rng.choice(len(candidates), size=sample_size, replace=False)
        candidates = [candidates[i] for i in sorted(picked)]
    ranks = []
    for row, sample in candidates:
        best = _best_sensitive_rank(sample, f, explainer, resolver, stream=row)
        ranks.append(best[0])
    ranks.sort()
    idx = max(0, math.ceil(top_fraction * len(ranks)) - 1)
    return ranks[idx]


def init_population(
    seeds: Sequence[Seed],
    resolver: SensitivityResolver,
    rng: np.random.Generator,
    k: int = 20,
    store: Optional[EmbeddingStore] = None,
) -> list[Population]:
    """Tabular: one population holding every seed. Text: one population per
    seed of size k+1, each variant substituting a synonym for one randomly
    chosen non-sensitive token."""
    if not seeds:
        raise EmptySeedSet("cannot initialize populations from zero seeds")
    if not resolver.is_text:
        members = tuple(Individual(sample=s.sample) for s in seeds)
        return [Population(members=members, generation=0)]

    if store is None:
        raise ConfigError("text mode requires an embedding store")
    populations = []
    oov_skipped = 0
    for seed in seeds:
        sensitive = {i for i, _ in resolver.positions(seed.sample)}
        mutable = [i for i in range(len(seed.sample.values)) if i not in sensitive]
        members = [Individual(sample=seed.sample)]
        for _ in range(k):
            variant = seed.sample
            if mutable:
                position = int(rng.choice(mutable))
                word = seed.sample.values[position]
                try:
                    similar = synonyms(word, store, 1, resolver.graph, resolver.protected)
                except OovWord:
                    similar = []
                if similar:
                    variant = seed.sample.replaced(position, similar[0])
                else:
                    oov_skipped += 1
            members.append(Individual(sample=Sample(variant.values, Origin.GENERATED, seed.sample.seed_id)))
        populations.append(
            Population(members=tuple(members), generation=0, seed_scope=seed.sample.seed_id)
        )
    if oov_skipped:
        log.info("population init: %d variants kept the seed (no usable synonym)", oov_skipped)
    return populations


# ---------------------------------------------------------------------------
# Fitness and the genetic operators

def fitness(
    x: Sample,
    f: Predictor,
    pair: SensitivePair,
    sensitive_index: int,
    target_label: int,
    resolver: SensitivityResolver,
) -> tuple[float, float, float]:
    """|Prob(x', target) - Prob(x'', target)| for the counterpart variants.

    Returns (fitness, prob_a, prob_b) so the witness can be cached.
    """
    xa = resolver.substitute(x, sensitive_index, pair.tilde)
    xb = resolver.substitute(x, sensitive_index, pair.neg_tilde)
    probs = f.predict_proba_many([xa, xb])[:, target_label]
    return float(abs(probs[0] - probs[1])), float(probs[0]), float(probs[1])


def _evaluate_population(pop: Population, f: Predictor, resolver: SensitivityResolver) -> Population:
    """Fill in fitness for members lacking it, batching all model queries."""
    plans: list[Optional[tuple[Sample, Sample]]] = []
    bases: list[Sample] = []
    for member in pop.members:
        if member.fitness is not None:
            plans.append(None)
            continue
        bases.append(member.sample)
        variant_pair = None
        for position, attr in resolver.positions(member.sample):
            try:
                pair = resolver.pair_for(member.sample, position, attr)
            except NoPairAvailable:
                continue
            variant_pair = (
                resolver.substitute(member.sample, position, pair.tilde),
                resolver.substitute(member.sample, position, pair.neg_tilde),
            )
            break
        plans.append(variant_pair)

    base_labels: dict[int, int] = {}
    if bases:
        labels = f.predict_index_many(bases)
        cursor = 0
        for idx, member in enumerate(pop.members):
            if member.fitness is None:
                base_labels[idx] = int(labels[cursor])
                cursor += 1

    queries: list[Sample] = []
    spans: list[Optional[int]] = []
    for plan in plans:
        if plan is None:
            spans.append(None)
        else:
            spans.append(len(queries))
            queries.extend(plan)
    probs = f.predict_proba_many(queries) if queries else np.zeros((0, len(f.labels)))

    members = []
    for idx, (member, span) in enumerate(zip(pop.members, spans)):
        if member.fitness is not None:
            members.append(member)
        elif span is None:
            members.append(Individual(sample=member.sample, fitness=0.0, pair_witness=(0.0, 0.0)))
        else:
            target = base_labels[idx]
            pa = float(probs[span, target])
            pb = float(probs[span + 1, target])
            members.append(
                Individual(sample=member.sample, fitness=abs(pa - pb), pair_witness=(pa, pb))
            )
    return Population(tuple(members), pop.generation, pop.seed_scope)


def select(pop: Population, rng: np.random.Generator) -> Population:
    """Roulette-wheel resampling proportional to fitness; uniform when the
    population carries no fitness mass. Output size equals input size."""
    fits = np.array([m.fitness if m.fitness is not None else 0.0 for m in pop.members])
    total = fits.sum()
    if total > 0:
        probabilities = fits / total
    else:
        probabilities = np.full(len(fits), 1.0 / len(fits))
    chosen = rng.choice(len(pop.members), size=len(pop.members), replace=True, p=probabilities)
    members = tuple(pop.members[i] for i in chosen)
    return Population(members, pop.generation, pop.seed_scope)


def crossover(pop: Population, cr: float, rng: np.random.Generator) -> Population:
    """Exchange a random contiguous fragment with a random partner, each
    member participating with probability cr."""
    if len(pop.members) < 2:
        return pop
    members = list(pop.members)
    for i in range(len(members)):
        if rng.random() >= cr:
            continue
        j = int(rng.integers(0, len(members) - 1))
        if j >= i:
            j += 1
        a, b = members[i].sample, members[j].sample
        width = min(len(a.values), len(b.values))
        if width == 0:
            continue
        lo, hi = sorted((int(rng.integers(0, width)), int(rng.integers(0, width))))
        av, bv = list(a.values), list(b.values)
        av[lo : hi + 1], bv[lo : hi + 1] = bv[lo : hi + 1], av[lo : hi + 1]
        members[i] = Individual(sample=Sample(tuple(av), Origin.GENERATED, a.seed_id))
        members[j] = Individual(sample=Sample(tuple(bv), Origin.GENERATED, b.seed_id))
    return Population(tuple(members), pop.generation, pop.seed_scope)


def mutate(
    pop: Population,
    mr: float,
    rng: np.random.Generator,
    resolver: SensitivityResolver,
    store: Optional[EmbeddingStore] = None,
    used_synonyms: Optional[dict[int, set[str]]] = None,
) -> Population:
    """Mutate each non-sensitive position independently with probability mr.

    Categorical values move to a uniformly chosen different category, numeric
    values shift by 1..5 grid steps (clipped), tokens take their best synonym
    not yet placed at that position.
    """
    members = []
    for member in pop.members:
        sample = member.sample
        sensitive = {i for i, _ in resolver.positions(sample)}
        values = list(sample.values)
        changed = False
        for i in range(len(values)):
            if i in sensitive or rng.random() >= mr:
                continue
            if resolver.is_text:
                replacement = _mutate_token(values[i], i, store, resolver, used_synonyms)
                if replacement is not None:
                    values[i] = replacement
                    changed = True
                continue
            spec = resolver.schema.features[i]
            if isinstance(spec.kind, Categorical):
                size = len(spec.kind.domain)
                if size < 2:
                    continue
                shift = int(rng.integers(1, size))
                values[i] = (values[i] + shift) % size
            else:
                step = spec.kind.step * int(rng.integers(1, 6))
                direction = 1 if rng.random() < 0.5 else -1
                values[i] = int(np.clip(values[i] + direction * step, spec.kind.min, spec.kind.max))
            changed = True
        if changed:
            members.append(Individual(sample=Sample(tuple(values), Origin.GENERATED, sample.seed_id)))
        else:
            members.append(member)
    return Population(tuple(members), pop.generation, pop.seed_scope)


def _mutate_token(word, position, store, resolver, used_synonyms):
    if store is None:
        return None
    history = used_synonyms.setdefault(position, set()) if used_synonyms is not None else set()
    try:
        candidates = synonyms(word, store, 10, resolver.graph, resolver.protected)
    except OovWord:
        return None
    pick = next((c for c in candidates if c not in history and c != word), None)
    if pick is None:
        pick = next((c for c in candidates if c != word), None)
    if pick is not None:
        history.add(pick)
    return pick


# ---------------------------------------------------------------------------
# Discriminatory check

class CheckCounter:
    """Serialized aggregation point for TSN and the record set."""

    def __init__(self):
        self.tsn = 0
        self.records: dict[bytes, DiscriminatoryRecord] = {}

    @property
    def dsn(self) -> int:
        return len(self.records)

    def add(self, record: Optional[DiscriminatoryRecord]) -> None:
        self.tsn += 1
        if record is not None and record.dedupe_key not in self.records:
            self.records[record.dedupe_key] = record


def check_discriminatory(
    x: Sample,
    f: Predictor,
    resolver: SensitivityResolver,
    rng: np.random.Generator,
) -> Optional[DiscriminatoryRecord]:
    """Return a verified record if any protected-variant pair of ``x`` is
    labeled differently; None otherwise. One invocation is one TSN unit,
    which the caller accounts for."""
    for position, attr in resolver.positions(x):
        try:
            variants = resolver.check_variants(x, position, attr, rng)
        except NoPairAvailable:
            continue
        if len(variants) < 2:
            continue
        labels = f.predict_index_many(variants)
        for j in range(1, len(variants)):
            for i in range(j):
                if labels[i] != labels[j]:
                    return DiscriminatoryRecord(
                        sample=x,
                        sensitive_index=position,
                        variant_a=variants[i],
                        variant_b=variants[j],
                        label_a=f.labels[labels[i]],
                        label_b=f.labels[labels[j]],
                        dedupe_key=dedupe_key(x, resolver.schema, resolver.dedupe_positions(x)),
                    )
    return None


# ---------------------------------------------------------------------------
# Run orchestration

class _Budget:
    def __init__(self, config: EngineConfig):
        self.started = time.monotonic()
        self.time_budget = config.time_budget
        self.max_checks = config.max_checks

    def elapsed(self) -> float:
        return time.monotonic() - self.started

    def exhausted(self, counter: CheckCounter) -> bool:
        if self.time_budget is not None and self.elapsed() >= self.time_budget:
            return True
        if self.max_checks is not None and counter.tsn >= self.max_checks:
            return True
        return False


def _random_tabular_sample(schema: FeatureSchema, rng: np.random.Generator) -> Sample:
    values = []
    for spec in schema.features:
        if isinstance(spec.kind, Categorical):
            values.append(int(rng.integers(0, len(spec.kind.domain))))
        else:
            grid = spec.kind.grid()
            values.append(int(grid.start + rng.integers(0, len(grid)) * grid.step))
    return Sample(tuple(values), origin=Origin.GENERATED)


def _random_text_candidate(seeds, resolver, store, rng) -> Sample:
    seed = seeds[int(rng.integers(0, len(seeds)))]
    sample = seed.sample
    sensitive = {i for i, _ in resolver.positions(sample)}
    values = list(sample.values)
    for i in range(len(values)):
        if i in sensitive or rng.random() >= 0.5 or store is None:
            continue
        try:
            near = synonyms(values[i], store, 5, resolver.graph, resolver.protected)
        except OovWord:
            continue
        if near:
            values[i] = near[int(rng.integers(0, len(near)))]
    return Sample(tuple(values), origin=Origin.GENERATED, seed_id=sample.seed_id)


def run(
    dataset: Dataset,
    protected: Sequence[str],
    f: Predictor,
    explainer: Explainer,
    config: EngineConfig,
    resolver: Optional[SensitivityResolver] = None,
    store: Optional[EmbeddingStore] = None,
    seeds: Optional[list[Seed]] = None,
) -> tuple[list[DiscriminatoryRecord], RunMetrics]:
    """Full search run. Returns records in discovery order plus the counters.

    Pre-computed ``seeds`` may be passed to share the initialization phase
    across paired runs; otherwise seed selection runs here and its time is
    part of the measured elapsed wall clock.
    """
    if resolver is None:
        resolver = SensitivityResolver(dataset.schema, protected)
    budget = _Budget(config)
    counter = CheckCounter()
    rng = np.random.default_rng(config.rng_seed)

    if seeds is None:
        seeds = select_seeds(
            dataset, protected, f, explainer, config.epsilon, config.seed_num, resolver
        )
    log.info("selected %d seeds", len(seeds))

    if config.mode == MODE_RANDOM:
        _run_random(seeds, f, resolver, store, config, rng, budget, counter)
    else:
        _run_ga(seeds, f, resolver, store, config, rng, budget, counter)

    metrics = RunMetrics.from_counts(counter.tsn, counter.dsn, budget.elapsed())
    log.info(
        "run complete: tsn=%d dsn=%d sur=%.4f dss=%s",
        metrics.tsn,
        metrics.dsn,
        metrics.sur,
        f"{metrics.dss:.4f}" if metrics.dss is not None else "-",
    )
    return list(counter.records.values()), metrics


def _check_population_members(members, f, resolver, rng, budget, counter) -> bool:
    """Check each member against the budget; returns False once exhausted."""
    for member in members:
        if budget.exhausted(counter):
            return False
        counter.add(check_discriminatory(member.sample, f, resolver, rng))
    return True


def _run_ga(seeds, f, resolver, store, config, rng, budget, counter) -> None:
    populations = init_population(seeds, resolver, rng, k=config.k, store=store)
    used_synonyms: list[dict[int, set[str]]] = [{} for _ in populations]
    generation = 0
    while True:
        if config.max_generations is not None and generation >= config.max_generations:
            return
        if budget.exhausted(counter):
            return
        generation += 1
        for idx, pop in enumerate(populations):
            if budget.exhausted(counter):
                return
            pop = _evaluate_population(pop, f, resolver)
            pop = select(pop, rng)
            pop = crossover(pop, config.cr, rng)
            pop = mutate(pop, config.mr, rng, resolver, store, used_synonyms[idx])
            pop = Population(pop.members, generation, pop.seed_scope)
            populations[idx] = pop
            if not _check_population_members(pop.members, f, resolver, rng, budget, counter):
                return


def _run_random(seeds, f, resolver, store, config, rng, budget, counter) -> None:
    # Same per-generation check volume as the GA would issue.
    if resolver.is_text:
        batch = len(seeds) * (config.k + 1)
    else:
        batch = len(seeds)
    generation = 0
    while True:
        if config.max_generations is not None and generation >= config.max_generations:
            return
        if budget.exhausted(counter):
            return
        generation += 1
        for _ in range(batch):
            if budget.exhausted(counter):
                return
            if resolver.is_text:
                candidate = _random_text_candidate(seeds, resolver, store, rng)
            else:
                candidate = _random_tabular_sample(resolver.schema, rng)
            counter.add(check_discriminatory(candidate, f, resolver, rng))
