"""Efficiency metrics, nonparametric run comparison and diversity projection."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DiscriminatoryRecord, FeatureSchema
from .data import encode_many

EXACT_LIMIT = 20  # combined size at or below which the exact p-value is used


def dss(elapsed_seconds: float, dsn: int) -> Optional[float]:
    """Seconds of wall clock per discriminatory sample; None while dsn=0."""
    if elapsed_seconds < 0 or dsn < 0:
        raise ValueError("elapsed and dsn must be nonnegative")
    return elapsed_seconds / dsn if dsn > 0 else None


def sur(dsn: int, tsn: int) -> float:
    """Success rate dsn/tsn, defined as 0 when no checks ran."""
    if not 0 <= dsn <= tsn:
        raise ValueError("requires 0 <= dsn <= tsn")
    return dsn / tsn if tsn > 0 else 0.0


# ---------------------------------------------------------------------------
# Rank statistics

def _midranks(pooled: Sequence[float]) -> list[float]:
    order = sorted(range(len(pooled)), key=lambda i: pooled[i])
    ranks = [0.0] * len(pooled)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided Mann-Whitney U test for sample ``a`` against ``b``.

    U is the rank-sum statistic for ``a`` with midrank ties. The p-value is
    exact (full enumeration of group assignments) when |a|+|b| <= 20 and a
    tie-corrected normal approximation with continuity correction otherwise.
    """
    if not a or not b:
        raise ValueError("both samples must be nonempty")
    n1, n2 = len(a), len(b)
    pooled = list(a) + list(b)
    ranks = _midranks(pooled)
    r1 = sum(ranks[:n1])
    u = r1 - n1 * (n1 + 1) / 2
    mean = n1 * n2 / 2

    if n1 + n2 <= EXACT_LIMIT:
        observed = abs(u - mean)
        hits = 0
        total = 0
        for combo in itertools.combinations(range(n1 + n2), n1):
            u_perm = sum(ranks[i] for i in combo) - n1 * (n1 + 1) / 2
            if abs(u_perm - mean) >= observed - 1e-12:
                hits += 1
            total += 1
        return u, hits / total

    n = n1 + n2
    tie_term = 0.0
    for _, group in itertools.groupby(sorted(pooled)):
        t = len(list(group))
        tie_term += t**3 - t
    variance = n1 * n2 / 12 * ((n + 1) - tie_term / (n * (n - 1)))
    if variance <= 0:
        return u, 1.0
    z = (abs(u - mean) - 0.5) / math.sqrt(variance)
    z = max(z, 0.0)
    p = math.erfc(z / math.sqrt(2))
    return u, min(1.0, p)


def vargha_delaney_a12(a: Sequence[float], b: Sequence[float]) -> float:
    """Probability that a draw from ``a`` exceeds a draw from ``b``,
    counting ties as half."""
    if not a or not b:
        raise ValueError("both samples must be nonempty")
    greater = sum(1 for x in a for y in b if x > y)
    equal = sum(1 for x in a for y in b if x == y)
    return (greater + 0.5 * equal) / (len(a) * len(b))


@dataclass
class RunComparison:
    dss_samples_a: list[float]
    dss_samples_b: list[float]
    u_statistic: float
    p_value: float
    a12: float

    @classmethod
    def of(cls, dss_a: Sequence[float], dss_b: Sequence[float]) -> "RunComparison":
        u, p = mann_whitney_u(dss_a, dss_b)
        return cls(
            dss_samples_a=list(dss_a),
            dss_samples_b=list(dss_b),
            u_statistic=u,
            p_value=p,
            a12=vargha_delaney_a12(dss_a, dss_b),
        )

    def to_dict(self) -> dict:
        return {
            "u": self.u_statistic,
            "p": self.p_value,
            "a12": self.a12,
            "dss_a": self.dss_samples_a,
            "dss_b": self.dss_samples_b,
        }


# ---------------------------------------------------------------------------
# Diversity projection

_POWER_TOL = 1e-9
_POWER_MAX_ITER = 10000


def _dominant_eigenpair(matrix: np.ndarray, rng: np.random.Generator):
    d = matrix.shape[0]
    v = rng.standard_normal(d)
    norm = np.linalg.norm(v)
    if norm == 0:
        v = np.ones(d)
        norm = math.sqrt(d)
    v /= norm
    eigenvalue = 0.0
    for _ in range(_POWER_MAX_ITER):
        w = matrix @ v
        w_norm = np.linalg.norm(w)
        if w_norm < _POWER_TOL:
            return 0.0, np.zeros(d)
        v = w / w_norm
        eigenvalue = float(v @ matrix @ v)
        residual = np.linalg.norm(matrix @ v - eigenvalue * v)
        if residual <= _POWER_TOL * max(1.0, abs(eigenvalue)):
            break
    return eigenvalue, v


def pca_project(records: Sequence[DiscriminatoryRecord], schema: FeatureSchema) -> np.ndarray:
    """Project record samples onto the top-2 principal axes.

    Uses power iteration with deflation on the covariance matrix. When the
    covariance has rank < 2 the missing coordinates are zero, so the output
    shape is always (n, 2); fully degenerate data maps to the origin.
    """
    if len(records) < 3:
        raise ValueError("projection requires at least 3 records")
    x = encode_many([r.sample for r in records], schema)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (len(records) - 1)
    rng = np.random.default_rng(0)

    lam1, v1 = _dominant_eigenpair(cov, rng)
    if lam1 <= _POWER_TOL:
        return np.zeros((len(records), 2))
    deflated = cov - lam1 * np.outer(v1, v1)
    lam2, v2 = _dominant_eigenpair(deflated, rng)
    first = centered @ v1
    second = centered @ v2 if lam2 > _POWER_TOL else np.zeros(len(records))
    return np.stack([first, second], axis=1)
