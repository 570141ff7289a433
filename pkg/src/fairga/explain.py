"""Perturbation-based local surrogate explainer.

A neighborhood of the instance is drawn by randomly resampling features
(tabular) or masking tokens (text). A weighted ridge regression of the
model's target-class probability on the keep/change indicators yields one
coefficient per position; positions are ranked by absolute coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Categorical, Explanation, FeatureSchema, Origin, Sample
from .data import encoded_dim
from .errors import NotInExplanation, SingularFit
from .model import Predictor


@dataclass
class ExplainerConfig:
    n_perturb: int = 1000
    kernel_width: Optional[float] = None  # default 0.75 * sqrt(encoded dim)
    ridge_lambda: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_perturb < 1:
            raise ValueError("n_perturb must be >= 1")
        if self.kernel_width is not None and self.kernel_width <= 0:
            raise ValueError("kernel_width must be > 0")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")


def _resolve_kernel_width(config: ExplainerConfig, x: Sample, schema: Optional[FeatureSchema]) -> float:
    if config.kernel_width is not None:
        return config.kernel_width
    if schema is not None and not schema.is_text:
        d = encoded_dim(schema)
    else:
        d = len(x.values)
    return 0.75 * math.sqrt(d)


def _rng_for(config: ExplainerConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng((config.rng_seed, stream))


def _perturb_tabular(x: Sample, schema: FeatureSchema, n: int, rng: np.random.Generator):
    d = len(x.values)
    resample = rng.random((n, d)) < 0.5
    columns = []
    for j, spec in enumerate(schema.features):
        original = x.values[j]
        if isinstance(spec.kind, Categorical):
            drawn = rng.integers(0, len(spec.kind.domain), size=n)
        else:
            grid = spec.kind.grid()
            drawn = grid.start + rng.integers(0, len(grid), size=n) * grid.step
        columns.append(np.where(resample[:, j], drawn, original))
    values = np.stack(columns, axis=1)
    keep = values == np.array(x.values)
    samples = [Sample(tuple(int(v) for v in row), origin=Origin.GENERATED) for row in values]
    return keep.astype(np.float64), samples


def _perturb_text(x: Sample, n: int, rng: np.random.Generator):
    d = len(x.values)
    keep = rng.random((n, d)) >= 0.5
    # a fully-masked draw would produce an empty sample; keep one position
    for row in range(n):
        if not keep[row].any():
            keep[row, rng.integers(0, d)] = True
    samples = [
        Sample(tuple(t for t, k in zip(x.values, keep[row]) if k), origin=Origin.GENERATED)
        for row in range(n)
    ]
    return keep.astype(np.float64), samples


def _neighborhood(x: Sample, schema: Optional[FeatureSchema], config: ExplainerConfig, rng):
    if schema is not None and not schema.is_text:
        keep, samples = _perturb_tabular(x, schema, config.n_perturb, rng)
    else:
        if not x.values:
            raise ValueError("cannot explain an empty token sequence")
        keep, samples = _perturb_text(x, config.n_perturb, rng)
    kernel_width = _resolve_kernel_width(config, x, schema)
    dist = 1.0 - keep.mean(axis=1)
    weights = np.exp(-(dist**2) / kernel_width**2)
    return keep, samples, weights


def perturb_neighborhood(
    x: Sample,
    schema: Optional[FeatureSchema],
    config: ExplainerConfig,
    stream: int = 0,
) -> list[tuple[Sample, float]]:
    """Draw the perturbed neighborhood of ``x`` with similarity weights."""
    _, samples, weights = _neighborhood(x, schema, config, _rng_for(config, stream))
    return list(zip(samples, (float(w) for w in weights)))


def fit_surrogate(
    x: Sample,
    f: Predictor,
    target_label,
    schema: Optional[FeatureSchema],
    config: ExplainerConfig,
    stream: int = 0,
) -> Explanation:
    """Explain f's target-class probability around ``x``.

    ``target_label`` may be a class index or a label name. Scores are the
    fitted ridge coefficients of the keep indicators (1 = position kept its
    original value).
    """
    if isinstance(target_label, str):
        target_idx = f.labels.index(target_label)
    else:
        target_idx = int(target_label)
    rng = _rng_for(config, stream)
    keep, samples, weights = _neighborhood(x, schema, config, rng)
    y = f.predict_proba_many(samples)[:, target_idx]

    n, d = keep.shape
    design = np.hstack([np.ones((n, 1)), keep])
    wd = design * weights[:, None]
    gram = design.T @ wd
    # standardized ridge: each coefficient is shrunk relative to its column's
    # weighted variance, so the penalty does not swamp large neighborhoods
    w_sum = weights.sum()
    col_mean = wd[:, 1:].sum(axis=0) / w_sum
    col_var = (weights[:, None] * (keep - col_mean) ** 2).sum(axis=0) / w_sum
    penalty = np.zeros((d + 1, d + 1))
    penalty[1:, 1:] = np.diag(config.ridge_lambda * col_var + 1e-9)
    try:
        beta = np.linalg.solve(gram + penalty, wd.T @ y)
    except np.linalg.LinAlgError:
        raise SingularFit("surrogate design matrix is singular; increase n_perturb")
    scores = beta[1:]
    scores[np.abs(scores) < 1e-12] = 0.0  # no-signal fits rank by position
    return Explanation.from_scores(enumerate(scores))


def rank_num(position: int, explanation: Explanation) -> int:
    """1-based rank of ``position`` in the importance ordering."""
    for rank, (idx, _) in enumerate(explanation.entries, start=1):
        if idx == position:
            return rank
    raise NotInExplanation(position)


class Explainer:
    """Callable bundle of schema and config, matching e = g(x, f, label)."""

    def __init__(self, schema: Optional[FeatureSchema], config: Optional[ExplainerConfig] = None):
        self.schema = schema
        self.config = config or ExplainerConfig()

    def explain(self, x: Sample, f: Predictor, label, stream: int = 0) -> Explanation:
        return fit_surrogate(x, f, label, self.schema, self.config, stream=stream)
