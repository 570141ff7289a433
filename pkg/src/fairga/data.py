"""Dataset ingestion, encoding and schema file parsing."""

from __future__ import annotations

import csv
import json
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (
    Categorical,
    FeatureSchema,
    FeatureSpec,
    Numeric,
    Origin,
    Sample,
    Token,
)
from .errors import EmptyCorpus, MalformedRow, OutOfRange, UnknownCategory

LABEL_COLUMN = "__label__"

_PUNCT = string.punctuation


@dataclass
class Dataset:
    schema: FeatureSchema
    samples: list[Sample]
    labels: Optional[list[int]] = None

    def __post_init__(self):
        if self.labels is not None and len(self.labels) != len(self.samples):
            raise ValueError("labels and samples must have equal length")

    def __len__(self) -> int:
        return len(self.samples)


# ---------------------------------------------------------------------------
# Schema files

def schema_from_config(config: dict) -> FeatureSchema:
    """Build a FeatureSchema from the parsed JSON schema-config mapping."""
    features = []
    for entry in config["features"]:
        kind_name = entry["kind"]
        if kind_name == "categorical":
            kind = Categorical(domain=tuple(entry["domain"]))
        elif kind_name == "numeric":
            kind = Numeric(
                min=int(entry["min"]), max=int(entry["max"]), step=int(entry.get("step", 1))
            )
        elif kind_name == "token":
            kind = Token()
        else:
            raise ValueError(f"unknown feature kind {kind_name!r}")
        features.append(
            FeatureSpec(name=entry["name"], kind=kind, relates_to=entry.get("relates_to"))
        )
    markers = {k: tuple(v) for k, v in config.get("markers", {}).items()}
    return FeatureSchema(
        features=tuple(features),
        label_names=tuple(config["labels"]),
        protected=frozenset(config["protected"]),
        markers=markers,
    )


def schema_to_config(schema: FeatureSchema) -> dict:
    features = []
    for spec in schema.features:
        entry: dict = {"name": spec.name}
        if isinstance(spec.kind, Categorical):
            entry["kind"] = "categorical"
            entry["domain"] = list(spec.kind.domain)
        elif isinstance(spec.kind, Numeric):
            entry["kind"] = "numeric"
            entry["min"] = spec.kind.min
            entry["max"] = spec.kind.max
            entry["step"] = spec.kind.step
        else:
            entry["kind"] = "token"
        if spec.relates_to is not None:
            entry["relates_to"] = spec.relates_to
        features.append(entry)
    config = {
        "features": features,
        "labels": list(schema.label_names),
        "protected": sorted(schema.protected),
    }
    if schema.markers:
        config["markers"] = {k: list(v) for k, v in sorted(schema.markers.items())}
    return config


def load_schema(path) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return schema_from_config(json.load(fh))


def save_schema(schema: FeatureSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema_to_config(schema), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Tabular datasets

def parse_value(raw: str, spec: FeatureSpec, line: int):
    """Parse one CSV cell into the sample-value representation."""
    raw = raw.strip()
    if raw == "?":
        raise MalformedRow(line, f"missing value marker '?' in feature {spec.name!r}")
    if isinstance(spec.kind, Categorical):
        if raw not in spec.kind.domain:
            raise UnknownCategory(spec.name, raw)
        return spec.kind.domain.index(raw)
    if isinstance(spec.kind, Numeric):
        try:
            value = int(raw)
        except ValueError:
            raise MalformedRow(line, f"non-integer value {raw!r} in feature {spec.name!r}")
        if not spec.kind.min <= value <= spec.kind.max:
            raise OutOfRange(spec.name, value)
        return value
    raise MalformedRow(line, f"token feature {spec.name!r} cannot appear in tabular data")


def render_value(value, spec: FeatureSpec) -> str:
    if isinstance(spec.kind, Categorical):
        return spec.kind.domain[value]
    return str(value)


def load_tabular(csv_path, schema: FeatureSchema) -> Dataset:
    """Load a delimited dataset, strictly validated against the schema.

    The header must list the schema's feature names in order, optionally
    followed by a final ``__label__`` column.
    """
    expected = [f.name for f in schema.features]
    samples: list[Sample] = []
    labels: list[int] = []
    has_labels = False
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(1, "missing header row")
        header = [h.strip() for h in header]
        if header == expected:
            has_labels = False
        elif header == expected + [LABEL_COLUMN]:
            has_labels = True
        else:
            raise MalformedRow(1, f"header {header} does not match schema features")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            width = len(expected) + (1 if has_labels else 0)
            if len(row) != width:
                raise MalformedRow(line, f"expected {width} columns, found {len(row)}")
            values = tuple(
                parse_value(raw, spec, line) for raw, spec in zip(row, schema.features)
            )
            samples.append(Sample(values))
            if has_labels:
                raw_label = row[-1].strip()
                if raw_label in schema.label_names:
                    labels.append(schema.label_names.index(raw_label))
                else:
                    raise MalformedRow(line, f"unknown label {raw_label!r}")
    return Dataset(schema=schema, samples=samples, labels=labels if has_labels else None)


def save_tabular(dataset: Dataset, csv_path) -> None:
    schema = dataset.schema
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = [f.name for f in schema.features]
        if dataset.labels is not None:
            header.append(LABEL_COLUMN)
        writer.writerow(header)
        for i, sample in enumerate(dataset.samples):
            row = [render_value(v, spec) for v, spec in zip(sample.values, schema.features)]
            if dataset.labels is not None:
                row.append(schema.label_names[dataset.labels[i]])
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Text corpora

def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip flanking punctuation."""
    tokens = []
    for raw in text.lower().split():
        word = raw.strip(_PUNCT)
        if word:
            tokens.append(word)
    return tokens


def _parse_document(line: str, schema: FeatureSchema, lineno: int):
    if "\t" in line:
        text, raw_label = line.rsplit("\t", 1)
        raw_label = raw_label.strip()
        if raw_label in schema.label_names:
            label = schema.label_names.index(raw_label)
        else:
            try:
                label = int(raw_label)
            except ValueError:
                raise MalformedRow(lineno, f"unknown label {raw_label!r}")
            if not 0 <= label < len(schema.label_names):
                raise MalformedRow(lineno, f"label index {label} out of range")
    else:
        text, label = line, None
    return tokenize(text), label


def load_text(path, schema: FeatureSchema) -> Dataset:
    """Load a text corpus: one document per line, or one per file in a directory.

    Line form is ``text[<TAB>label]``; directory mode carries no labels.
    """
    path = Path(path)
    samples: list[Sample] = []
    labels: list[int] = []
    any_label = False
    if path.is_dir():
        for doc_path in sorted(path.iterdir()):
            if not doc_path.is_file():
                continue
            tokens = tokenize(doc_path.read_text(encoding="utf-8"))
            if tokens:
                samples.append(Sample(tuple(tokens)))
    else:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                tokens, label = _parse_document(line, schema, lineno)
                if not tokens:
                    continue
                samples.append(Sample(tuple(tokens)))
                if label is not None:
                    any_label = True
                    labels.append(label)
    if not samples:
        raise EmptyCorpus(f"no usable documents in {path}")
    if any_label and len(labels) != len(samples):
        raise MalformedRow(0, "labels present on some lines but not all")
    return Dataset(schema=schema, samples=samples, labels=labels if any_label else None)


# ---------------------------------------------------------------------------
# Encoding

def encoded_dim(schema: FeatureSchema) -> int:
    total = 0
    for spec in schema.features:
        if isinstance(spec.kind, Categorical):
            total += len(spec.kind.domain)
        elif isinstance(spec.kind, Numeric):
            total += 1
        else:
            raise ValueError("text schemas have no fixed encoded dimension")
    return total


def encode(sample: Sample, schema: FeatureSchema) -> np.ndarray:
    """One-hot categorical blocks plus min-max scaled numerics, concatenated."""
    out = np.zeros(encoded_dim(schema), dtype=np.float64)
    offset = 0
    for v, spec in zip(sample.values, schema.features):
        if isinstance(spec.kind, Categorical):
            out[offset + v] = 1.0
            offset += len(spec.kind.domain)
        else:
            span = spec.kind.max - spec.kind.min
            out[offset] = (v - spec.kind.min) / span if span else 0.0
            offset += 1
    return out


def encode_many(samples, schema: FeatureSchema) -> np.ndarray:
    return np.stack([encode(s, schema) for s in samples]) if samples else np.zeros(
        (0, encoded_dim(schema))
    )


def train_test_split(dataset: Dataset, test_fraction: float = 0.2, rng_seed: int = 0):
    """Stratified split; returns (train, test) Datasets."""
    if dataset.labels is None:
        raise ValueError("split requires a labeled dataset")
    rng = np.random.default_rng(rng_seed)
    labels = np.asarray(dataset.labels)
    test_idx: list[int] = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        n_test = int(round(len(members) * test_fraction))
        test_idx.extend(members[:n_test].tolist())
    test_set = set(test_idx)
    train_rows = [i for i in range(len(dataset)) if i not in test_set]
    test_rows = sorted(test_set)

    def subset(rows):
        return Dataset(
            schema=dataset.schema,
            samples=[dataset.samples[i] for i in rows],
            labels=[dataset.labels[i] for i in rows],
        )

    return subset(train_rows), subset(test_rows)
