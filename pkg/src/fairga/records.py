"""records.csv reading, writing, and independent re-verification.

Each row stores enough to rebuild the finding offline: the sample's values,
the substitution site, both substituted values, both predicted labels, and
the masked dedupe key.
"""

from __future__ import annotations

import csv
from typing import Sequence

from .core import DiscriminatoryRecord, FeatureSchema, Sample, dedupe_key
from .data import parse_value, render_value
from .engine import SensitivityResolver
from .errors import MalformedRow
from .model import Predictor

COLUMNS = ["sample", "sensitive_index", "value_a", "value_b", "label_a", "label_b", "dedupe_key"]

_TABULAR_SEP = "|"


def _render_sample(sample: Sample, schema: FeatureSchema) -> str:
    if schema.is_text:
        return " ".join(sample.values)
    return _TABULAR_SEP.join(
        render_value(v, spec) for v, spec in zip(sample.values, schema.features)
    )


def _parse_sample(rendered: str, schema: FeatureSchema, line: int) -> Sample:
    if schema.is_text:
        tokens = tuple(rendered.split())
        if not tokens:
            raise MalformedRow(line, "empty token sequence")
        return Sample(tokens)
    parts = rendered.split(_TABULAR_SEP)
    if len(parts) != len(schema.features):
        raise MalformedRow(line, f"expected {len(schema.features)} values, got {len(parts)}")
    return Sample(tuple(parse_value(p, spec, line) for p, spec in zip(parts, schema.features)))


def _substituted_value(record_sample: Sample, variant: Sample, index: int, schema: FeatureSchema) -> str:
    if schema.is_text:
        phrase_len = len(variant.values) - len(record_sample.values) + 1
        return " ".join(variant.values[index : index + phrase_len])
    return render_value(variant.values[index], schema.features[index])


def write_records(records: Sequence[DiscriminatoryRecord], schema: FeatureSchema, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in records:
            writer.writerow(
                [
                    _render_sample(r.sample, schema),
                    r.sensitive_index,
                    _substituted_value(r.sample, r.variant_a, r.sensitive_index, schema),
                    _substituted_value(r.sample, r.variant_b, r.sensitive_index, schema),
                    r.label_a,
                    r.label_b,
                    r.dedupe_key.hex(),
                ]
            )


def read_records(path, schema: FeatureSchema, resolver: SensitivityResolver) -> list[DiscriminatoryRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != COLUMNS:
            raise MalformedRow(1, f"unexpected records header {header}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COLUMNS):
                raise MalformedRow(line, f"expected {len(COLUMNS)} columns, got {len(row)}")
            rendered, idx_raw, value_a, value_b, label_a, label_b, key_hex = row
            sample = _parse_sample(rendered, schema, line)
            index = int(idx_raw)
            records.append(
                DiscriminatoryRecord(
                    sample=sample,
                    sensitive_index=index,
                    variant_a=resolver.substitute(sample, index, value_a),
                    variant_b=resolver.substitute(sample, index, value_b),
                    label_a=label_a,
                    label_b=label_b,
                    dedupe_key=bytes.fromhex(key_hex),
                )
            )
    return records


def reverify_records(
    records: Sequence[DiscriminatoryRecord],
    f: Predictor,
    schema: FeatureSchema,
    resolver: SensitivityResolver,
) -> list[str]:
    """Re-check every record directly against the model.

    Returns a list of human-readable failures; empty means every record
    passes: variants get the stored labels, labels differ, the variants
    differ from the sample only at protected-related positions, and the
    stored dedupe key matches a fresh masking.
    """
    failures = []
    for row, r in enumerate(records):
        probs = f.predict_proba_many([r.variant_a, r.variant_b])
        got_a = f.labels[int(probs[0].argmax())]
        got_b = f.labels[int(probs[1].argmax())]
        if got_a != r.label_a or got_b != r.label_b:
            failures.append(
                f"record {row}: stored labels ({r.label_a}, {r.label_b}) "
                f"!= model labels ({got_a}, {got_b})"
            )
        if got_a == got_b:
            failures.append(f"record {row}: variants share label {got_a}")
        protected_positions = resolver.dedupe_positions(r.sample)
        if not schema.is_text:
            for name, variant in (("a", r.variant_a), ("b", r.variant_b)):
                diff = [
                    i
                    for i, (u, v) in enumerate(zip(r.sample.values, variant.values))
                    if u != v
                ]
                if not set(diff) <= protected_positions:
                    failures.append(
                        f"record {row}: variant {name} differs at non-protected positions {diff}"
                    )
        expected_key = dedupe_key(r.sample, schema, protected_positions)
        if expected_key != r.dedupe_key:
            failures.append(f"record {row}: dedupe key mismatch")
    return failures
