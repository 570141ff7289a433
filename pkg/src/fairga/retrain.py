"""Fairness improvement by augmentation and retraining, with before/after
measurement of accuracy, residual discrimination and search metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import DiscriminatoryRecord, Origin, RunMetrics, Sample
from .data import Dataset, train_test_split
from .engine import (
    EngineConfig,
    SensitivityResolver,
    check_discriminatory,
    run,
)
from .errors import NoPairAvailable, NotEnoughRecords
from .explain import Explainer, ExplainerConfig
from .knowledge import EmbeddingStore
from .model import Predictor, TrainConfig, train

log = logging.getLogger(__name__)


def augmentation_count(dataset_rows: int, record_count: int, fraction: float, is_text: bool) -> int:
    """How many records augmentation will consume for a given fraction."""
    if fraction == 0:
        return 0
    base = record_count if is_text else dataset_rows
    return math.ceil(fraction * base)


def split_for_retraining(
    dataset_rows: int,
    records: Sequence[DiscriminatoryRecord],
    fraction: float,
    is_text: bool,
    rng_seed: int = 0,
):
    """Split found records into (augmentation pool, holdout), disjoint by key.

    ``dataset_rows`` is the size of the dataset that will be augmented (the
    training split). The split is a seeded shuffle so both sides sample the
    whole found set rather than the discovery-order prefix."""
    n = augmentation_count(dataset_rows, len(records), fraction, is_text)
    if n > len(records):
        raise NotEnoughRecords(f"need {n} records for fraction {fraction}, have {len(records)}")
    order = np.random.default_rng(rng_seed).permutation(len(records))
    shuffled = [records[i] for i in order]
    aug, holdout = shuffled[:n], shuffled[n:]
    aug_keys = {r.dedupe_key for r in aug}
    assert not aug_keys & {r.dedupe_key for r in holdout}, "retrain/holdout records overlap"
    return aug, holdout


def _consistent_label(
    record: DiscriminatoryRecord, f: Predictor, resolver: SensitivityResolver
) -> int:
    """Majority predicted label over the record's protected-value domain,
    ties resolved toward the lexicographically smallest label name."""
    position = record.sensitive_index
    if resolver.is_text:
        variants = [record.variant_a, record.variant_b]
    else:
        spec = resolver.schema.features[position]
        if hasattr(spec.kind, "domain"):
            values = list(spec.kind.domain)
        else:
            values = [str(v) for v in spec.kind.grid()]
        variants = [resolver.substitute(record.sample, position, v) for v in values]
    labels = f.predict_index_many(variants)
    counts = np.bincount(labels, minlength=len(f.labels))
    best = counts.max()
    tied = [i for i, c in enumerate(counts) if c == best]
    return min(tied, key=lambda i: f.labels[i])


def augment_dataset(
    dataset: Dataset,
    records: Sequence[DiscriminatoryRecord],
    fraction: float,
    f: Predictor,
    resolver: SensitivityResolver,
) -> Dataset:
    """Append both witness variants of the selected records, each pair
    sharing one consistent label so the protected value stops predicting
    the outcome. fraction=0 is an explicit no-op."""
    if fraction < 0 or fraction > 1:
        raise ValueError("fraction must lie in [0, 1]")
    if fraction == 0:
        return Dataset(dataset.schema, list(dataset.samples), list(dataset.labels or []) or None)
    if not records:
        raise NotEnoughRecords("no records available for augmentation")
    n = augmentation_count(len(dataset), len(records), fraction, resolver.is_text)
    if n > len(records):
        raise NotEnoughRecords(f"need {n} records for fraction {fraction}, have {len(records)}")
    samples = list(dataset.samples)
    labels = list(dataset.labels) if dataset.labels is not None else None
    for record in records[:n]:
        label = _consistent_label(record, f, resolver)
        for variant in (record.variant_a, record.variant_b):
            samples.append(Sample(variant.values, Origin.GENERATED))
            if labels is not None:
                labels.append(label)
    return Dataset(dataset.schema, samples, labels)


@dataclass
class RetrainConfig:
    fraction: float = 0.1
    train: TrainConfig = field(default_factory=TrainConfig)
    engine: EngineConfig = field(default_factory=lambda: EngineConfig(max_generations=20))
    explainer: ExplainerConfig = field(default_factory=ExplainerConfig)
    test_fraction: float = 0.2
    rng_seed: int = 0


@dataclass
class FairnessReport:
    samples_added: int
    fraction: float
    accuracy_before: float
    accuracy_after: float
    holdout_total: int
    holdout_discriminatory_before: int
    holdout_discriminatory_after: int
    metrics_before: RunMetrics
    metrics_after: RunMetrics

    def to_dict(self) -> dict:
        def ratio(x, total):
            return x / total if total else 0.0

        dss_b, dss_a = self.metrics_before.dss, self.metrics_after.dss
        return {
            "sample_added": self.samples_added,
            "fraction": self.fraction,
            "normal_accuracy": {"before": self.accuracy_before, "after": self.accuracy_after},
            "discriminatory_percentage": {
                "before": ratio(self.holdout_discriminatory_before, self.holdout_total),
                "after": ratio(self.holdout_discriminatory_after, self.holdout_total),
                "holdout_size": self.holdout_total,
            },
            "dss": {
                "before": dss_b,
                "after": dss_a,
                "improvement": (dss_a / dss_b) if dss_a is not None and dss_b else None,
            },
            "sur": {
                "before": self.metrics_before.sur,
                "after": self.metrics_after.sur,
                "improvement": (
                    1.0 - self.metrics_after.sur / self.metrics_before.sur
                    if self.metrics_before.sur
                    else None
                ),
            },
            "counters": {
                "before": {"tsn": self.metrics_before.tsn, "dsn": self.metrics_before.dsn},
                "after": {"tsn": self.metrics_after.tsn, "dsn": self.metrics_after.dsn},
            },
        }


def _accuracy(model: Predictor, dataset: Dataset) -> float:
    preds = model.predict_index_many(dataset.samples)
    return float((preds == np.asarray(dataset.labels)).mean())


def _still_discriminatory(
    records: Sequence[DiscriminatoryRecord],
    model: Predictor,
    resolver: SensitivityResolver,
    rng: np.random.Generator,
) -> int:
    count = 0
    for record in records:
        try:
            if check_discriminatory(record.sample, model, resolver, rng) is not None:
                count += 1
        except NoPairAvailable:
            continue
    return count


def retrain_and_evaluate(
    dataset: Dataset,
    records: Sequence[DiscriminatoryRecord],
    holdout: Sequence[DiscriminatoryRecord],
    config: RetrainConfig,
    resolver: SensitivityResolver,
    store: Optional[EmbeddingStore] = None,
) -> FairnessReport:
    """Train, augment with ``records``, retrain, and measure the shift.

    ``holdout`` must be disjoint from ``records`` by dedupe key; it is
    re-checked against both models. Search metrics come from fresh engine
    runs against each model under the same engine config.
    """
    aug_keys = {r.dedupe_key for r in records}
    overlap = aug_keys & {r.dedupe_key for r in holdout}
    if overlap:
        raise ValueError(f"holdout overlaps augmentation records on {len(overlap)} keys")

    train_split, test_split = train_test_split(dataset, config.test_fraction, config.rng_seed)
    explainer = Explainer(dataset.schema, config.explainer)
    protected = sorted(resolver.protected)
    rng = np.random.default_rng(config.rng_seed)

    before_model = train(train_split, config.train)
    accuracy_before = _accuracy(before_model, test_split)
    _, metrics_before = run(
        train_split, protected, before_model, explainer, config.engine, resolver, store
    )

    augmented = augment_dataset(train_split, records, config.fraction, before_model, resolver)
    samples_added = len(augmented) - len(train_split)
    after_model = train(augmented, config.train)
    accuracy_after = _accuracy(after_model, test_split)
    _, metrics_after = run(
        train_split, protected, after_model, explainer, config.engine, resolver, store
    )

    report = FairnessReport(
        samples_added=samples_added,
        fraction=config.fraction,
        accuracy_before=accuracy_before,
        accuracy_after=accuracy_after,
        holdout_total=len(holdout),
        holdout_discriminatory_before=_still_discriminatory(holdout, before_model, resolver, rng),
        holdout_discriminatory_after=_still_discriminatory(holdout, after_model, resolver, rng),
        metrics_before=metrics_before,
        metrics_after=metrics_after,
    )
    log.info(
        "retraining: accuracy %.4f -> %.4f, holdout discriminatory %d/%d -> %d/%d",
        accuracy_before,
        accuracy_after,
        report.holdout_discriminatory_before,
        report.holdout_total,
        report.holdout_discriminatory_after,
        report.holdout_total,
    )
    return report
