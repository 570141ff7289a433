"""Domain types shared by every other module.

A feature space is an ordered product of per-feature domains. Tabular
samples store one value per feature (a category index or an integer on a
numeric grid); text samples store a token per position. Both are uniformly
indexable, which is what the search operators rely on.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

# Record/unit separators; both are whitespace to str.split(), so they can
# never appear inside a token and are safe as serialization delimiters.
_PAIR_SEP = "\x1e"
_FIELD_SEP = "\x1f"


class Origin(enum.Enum):
    ORIGINAL = "original"
    SEED = "seed"
    GENERATED = "generated"


@dataclass(frozen=True)
class Categorical:
    """Finite ordered domain of category values."""

    domain: tuple[str, ...]

    def __post_init__(self):
        if not self.domain:
            raise ValueError("categorical domain must be nonempty")
        if len(set(self.domain)) != len(self.domain):
            raise ValueError("categorical domain values must be unique")


@dataclass(frozen=True)
class Numeric:
    """Integer grid {min, min+step, ..., <= max} in feature units."""

    min: int
    max: int
    step: int = 1

    def __post_init__(self):
        if self.min > self.max:
            raise ValueError("numeric feature requires min <= max")
        if self.step <= 0:
            raise ValueError("numeric feature requires step > 0")

    def grid(self) -> range:
        return range(self.min, self.max + 1, self.step)


@dataclass(frozen=True)
class Token:
    """Marker kind for text-mode positions."""


Kind = Union[Categorical, Numeric, Token]


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: Kind
    relates_to: Optional[str] = None


@dataclass(frozen=True)
class FeatureSchema:
    """Declarative description of the feature space, labels and protected set.

    ``markers`` optionally maps a protected attribute to the (a, b) value
    words used to build counterpart phrases for text features.
    """

    features: tuple[FeatureSpec, ...]
    label_names: tuple[str, ...]
    protected: frozenset[str]
    markers: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        if len(self.label_names) < 2:
            raise ValueError("schema requires at least two labels")
        if len(set(self.label_names)) != len(self.label_names):
            raise ValueError("label names must be unique")
        object.__setattr__(
            self, "_is_text", any(isinstance(f.kind, Token) for f in self.features)
        )

    @property
    def is_text(self) -> bool:
        return self._is_text

    def feature_index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(name)


@dataclass(frozen=True)
class Sample:
    """One input point: integer values for tabular features, tokens for text."""

    values: tuple
    origin: Origin = Origin.ORIGINAL
    seed_id: Optional[int] = None

    def replaced(self, position: int, value) -> "Sample":
        vals = list(self.values)
        vals[position] = value
        return Sample(tuple(vals), origin=Origin.GENERATED, seed_id=self.seed_id)

    def spliced(self, position: int, tokens: Iterable[str]) -> "Sample":
        """Replace one token position with a (possibly multi-token) phrase."""
        vals = list(self.values)
        vals[position : position + 1] = list(tokens)
        return Sample(tuple(vals), origin=Origin.GENERATED, seed_id=self.seed_id)

    def validate(self, schema: FeatureSchema) -> None:
        if schema.is_text:
            for v in self.values:
                if not isinstance(v, str) or not v:
                    raise ValueError("text sample tokens must be nonempty strings")
            return
        if len(self.values) != len(schema.features):
            raise ValueError(
                f"sample has {len(self.values)} values, schema has "
                f"{len(schema.features)} features"
            )
        for v, spec in zip(self.values, schema.features):
            if isinstance(spec.kind, Categorical):
                if not isinstance(v, int) or not 0 <= v < len(spec.kind.domain):
                    raise ValueError(f"feature {spec.name!r}: bad category index {v!r}")
            elif isinstance(spec.kind, Numeric):
                if not isinstance(v, int) or not spec.kind.min <= v <= spec.kind.max:
                    raise ValueError(f"feature {spec.name!r}: value {v!r} out of range")


@dataclass(frozen=True)
class Explanation:
    """Importance-ordered (position, score) pairs for one prediction.

    Entries are sorted by descending absolute score; ties break toward the
    lower position index so rankings are reproducible.
    """

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        idx = [i for i, _ in self.entries]
        if len(set(idx)) != len(idx):
            raise ValueError("explanation positions must be unique")
        keys = [(-abs(s), i) for i, s in self.entries]
        if keys != sorted(keys):
            raise ValueError("explanation entries not in canonical order")

    @classmethod
    def from_scores(cls, scores: Iterable[tuple[int, float]]) -> "Explanation":
        ordered = sorted(scores, key=lambda e: (-abs(e[1]), e[0]))
        return cls(tuple((int(i), float(s)) for i, s in ordered))

    def positions(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.entries)


@dataclass(frozen=True)
class Individual:
    """GA population member: a sample plus its cached fitness evidence."""

    sample: Sample
    fitness: Optional[float] = None
    pair_witness: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.fitness is not None:
            if not 0.0 <= self.fitness <= 1.0 + 1e-12:
                raise ValueError("fitness must lie in [0, 1]")
            if self.pair_witness is not None:
                pa, pb = self.pair_witness
                if not math.isclose(self.fitness, abs(pa - pb), abs_tol=1e-9):
                    raise ValueError("fitness does not match witness probabilities")


@dataclass(frozen=True)
class Population:
    """GA state. ``seed_scope`` is None for the shared tabular population,
    or the seed id whose variants make up a per-seed text population."""

    members: tuple[Individual, ...]
    generation: int = 0
    seed_scope: Optional[int] = None

    def __post_init__(self):
        if not self.members:
            raise ValueError("population must be nonempty")
        if self.generation < 0:
            raise ValueError("generation must be >= 0")
        if self.seed_scope is not None:
            lengths = {len(m.sample.values) for m in self.members}
            if len(lengths) != 1:
                raise ValueError("single-seed population members must share length")


@dataclass(frozen=True)
class DiscriminatoryRecord:
    """A verified discriminatory sample with its witness pair.

    ``variant_a``/``variant_b`` differ from ``sample`` only at the protected
    substitution site and receive different labels from the model under test.
    """

    sample: Sample
    sensitive_index: int
    variant_a: Sample
    variant_b: Sample
    label_a: str
    label_b: str
    dedupe_key: bytes

    def __post_init__(self):
        if self.label_a == self.label_b:
            raise ValueError("witness variants must receive different labels")
        if not self.dedupe_key:
            raise ValueError("dedupe key must be nonempty")


@dataclass(frozen=True)
class RunMetrics:
    """Raw efficiency counters for one run.

    tsn counts discriminatory-check invocations, dsn counts unique records;
    dss (seconds per sample) is absent while dsn == 0.
    """

    tsn: int
    dsn: int
    elapsed: float
    dss: Optional[float]
    sur: float

    def __post_init__(self):
        if self.dsn > self.tsn:
            raise ValueError("dsn cannot exceed tsn")

    @classmethod
    def from_counts(cls, tsn: int, dsn: int, elapsed: float) -> "RunMetrics":
        sur = dsn / tsn if tsn > 0 else 0.0
        dss = elapsed / dsn if dsn > 0 else None
        return cls(tsn=tsn, dsn=dsn, elapsed=elapsed, dss=dss, sur=sur)


def dedupe_key(sample: Sample, schema: FeatureSchema, protected_positions) -> bytes:
    """Canonical byte key of ``sample`` with protected-related positions masked.

    Two samples map to the same key iff they agree at every non-protected
    position, so one finding is never counted once per protected variant.
    """
    masked = set(protected_positions)
    parts = []
    for i, v in enumerate(sample.values):
        if i in masked:
            continue
        parts.append(f"{i}{_FIELD_SEP}{v}")
    return _PAIR_SEP.join(parts).encode("utf-8")
