"""Synthetic benchmark builders.

The planted benchmark is small enough to enumerate, with a classifier whose
discriminatory region is known by construction, so search results can be
scored against an exact oracle. The census-shaped generator produces a
larger tabular dataset whose ground-truth labels depend on sex only inside
a subpopulation, for training models that inherit a localized bias.
"""

from __future__ import annotations

import numpy as np

from .core import Categorical, FeatureSchema, FeatureSpec, Numeric, Origin, Sample
from .data import Dataset
from .model import PlantedModel


def planted_schema() -> FeatureSchema:
    return FeatureSchema(
        features=(
            FeatureSpec(
                "occupation",
                Categorical(
                    ("clerk", "engineer", "lawyer", "teacher", "doctor", "farmer", "pilot", "nurse")
                ),
            ),
            FeatureSpec("hours", Numeric(0, 7)),
            FeatureSpec("education", Numeric(0, 7)),
            FeatureSpec(
                "age_group",
                Categorical(("young", "adult", "senior", "old")),
                relates_to="age",
            ),
        ),
        label_names=("low", "high"),
        protected=frozenset({"age"}),
    )


def planted_model(schema: FeatureSchema | None = None) -> PlantedModel:
    """Classifier biased on age_group only for lawyers/teachers working a
    2-hour load; everywhere else the decision is additive in hours+education."""
    schema = schema or planted_schema()
    return PlantedModel(
        labels=schema.label_names,
        schema=schema,
        base_features=("hours", "education"),
        base_scale=0.5,
        base_offset=-7.5,
        region={"occupation": [2, 3], "hours": [2]},
        protected_feature="age_group",
        flip_values=[3],
        gain=4.0,
    )


def planted_benchmark(rng_seed: int = 0, n_samples: int = 300, region_boost: float = 0.0):
    """(schema, labeled dataset, planted classifier) triple.

    ``region_boost`` oversamples the biased sub-region: that fraction of the
    rows is drawn inside it, the rest uniformly over the whole space.
    """
    schema = planted_schema()
    model = planted_model(schema)
    rng = np.random.default_rng(rng_seed)
    samples = []
    for _ in range(n_samples):
        occupation = int(rng.integers(0, 8))
        hours = int(rng.integers(0, 8))
        if rng.random() < region_boost:
            occupation = int(rng.choice(model.region["occupation"]))
            hours = int(rng.choice(model.region["hours"]))
        values = (
            occupation,
            hours,
            int(rng.integers(0, 8)),
            int(rng.integers(0, 4)),
        )
        samples.append(Sample(values))
    labels = [int(v) for v in model.predict_index_many(samples)]
    model._query_count = 0
    return schema, Dataset(schema, samples, labels), model


def census_shaped_schema() -> FeatureSchema:
    return FeatureSchema(
        features=(
            FeatureSpec("age", Numeric(17, 90), relates_to="age"),
            FeatureSpec(
                "workclass",
                Categorical(("private", "self_emp", "federal", "state", "local", "unemployed", "other")),
            ),
            FeatureSpec("education", Numeric(1, 16)),
            FeatureSpec(
                "marital_status",
                Categorical(("married", "single", "divorced", "separated", "widowed")),
            ),
            FeatureSpec(
                "occupation",
                Categorical(
                    ("clerical", "craft", "exec", "professional", "sales", "service", "transport", "farming")
                ),
            ),
            FeatureSpec(
                "relationship",
                Categorical(("husband", "wife", "own_child", "unmarried", "not_in_family", "other")),
            ),
            FeatureSpec(
                "race", Categorical(("white", "black", "asian", "amer_indian", "other")), relates_to="race"
            ),
            FeatureSpec("sex", Categorical(("male", "female")), relates_to="gender"),
            FeatureSpec("capital_gain", Numeric(0, 20)),
            FeatureSpec("capital_loss", Numeric(0, 10)),
            FeatureSpec("hours_per_week", Numeric(1, 99)),
            FeatureSpec(
                "native_region",
                Categorical(("north_america", "south_america", "europe", "asia", "africa", "oceania")),
            ),
            FeatureSpec("savings", Numeric(0, 50)),
        ),
        label_names=("<=50K", ">50K"),
        protected=frozenset({"gender", "age", "race"}),
    )


# Occupations whose ground-truth outcome depends on sex.
CENSUS_BIASED_OCCUPATIONS = (2, 3)  # exec, professional


def census_ground_truth(sample: Sample, schema: FeatureSchema) -> int:
    """Deterministic labeling rule; sex matters only in the biased
    occupations, where it shifts the score decisively near the boundary."""
    idx = {spec.name: i for i, spec in enumerate(schema.features)}
    v = sample.values
    z = (
        0.45 * (v[idx["education"]] - 9)
        + 0.05 * (v[idx["hours_per_week"]] - 40)
        + 0.30 * v[idx["capital_gain"]]
        - 0.25 * v[idx["capital_loss"]]
        + 0.04 * v[idx["savings"]]
        + (0.8 if v[idx["marital_status"]] == 0 else 0.0)
        - 1.2
    )
    if v[idx["occupation"]] in CENSUS_BIASED_OCCUPATIONS:
        z += 1.6 if v[idx["sex"]] == 0 else -1.6
    return int(z > 0)


def census_shaped_benchmark(rng_seed: int = 0, n_samples: int = 2000):
    """(schema, labeled dataset) with a sex bias planted in the labels."""
    schema = census_shaped_schema()
    rng = np.random.default_rng(rng_seed)
    samples = []
    for _ in range(n_samples):
        values = []
        for spec in schema.features:
            if isinstance(spec.kind, Categorical):
                values.append(int(rng.integers(0, len(spec.kind.domain))))
            else:
                values.append(int(rng.integers(spec.kind.min, spec.kind.max + 1)))
        samples.append(Sample(tuple(values)))
    labels = [census_ground_truth(s, schema) for s in samples]
    return schema, Dataset(schema, samples, labels)
