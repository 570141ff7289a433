import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairga.core import DiscriminatoryRecord, Sample
from fairga.metrics import (
    RunComparison,
    dss,
    mann_whitney_u,
    pca_project,
    sur,
    vargha_delaney_a12,
)


class TestDss:
    def test_published_census_age_value(self):
        assert dss(3600, 29467) == pytest.approx(0.1222, abs=0.0005)

    def test_published_census_gender_value(self):
        assert dss(3600, 141049) == pytest.approx(0.0255, abs=0.0005)

    def test_zero_dsn_undefined(self):
        assert dss(3600, 0) is None

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            dss(-1, 5)


class TestSur:
    def test_published_census_gender_rate(self):
        assert sur(141049, 491323) == pytest.approx(0.2870, abs=0.0001)

    def test_zero_tsn(self):
        assert sur(0, 0) == 0.0

    def test_all_hits(self):
        assert sur(5, 5) == 1.0

    def test_dsn_above_tsn_rejected(self):
        with pytest.raises(ValueError):
            sur(6, 5)


def pair_count_u(a, b):
    """Independent U oracle: direct pair counting instead of rank sums."""
    greater = sum(1 for x in a for y in b if x > y)
    ties = sum(1 for x in a for y in b if x == y)
    return greater + 0.5 * ties


def brute_force_p(a, b):
    """Enumerate every group assignment of the pooled values."""
    pooled = list(a) + list(b)
    n1 = len(a)
    mean = n1 * len(b) / 2
    observed = abs(pair_count_u(a, b) - mean)
    hits = total = 0
    for combo in itertools.combinations(range(len(pooled)), n1):
        left = [pooled[i] for i in combo]
        right = [pooled[i] for i in range(len(pooled)) if i not in combo]
        if abs(pair_count_u(left, right) - mean) >= observed - 1e-12:
            hits += 1
        total += 1
    return hits / total


class TestMannWhitney:
    def test_identical_samples_p_one(self):
        u, p = mann_whitney_u([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert p == pytest.approx(1.0)

    def test_total_separation_exact(self):
        u, p = mann_whitney_u([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
        assert u == 0.0
        assert p == pytest.approx(0.1)  # 2 of the C(6,3)=20 labelings are as extreme

    def test_u_matches_pair_counting(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            a = rng.integers(0, 6, size=rng.integers(1, 8)).tolist()
            b = rng.integers(0, 6, size=rng.integers(1, 8)).tolist()
            u, _ = mann_whitney_u(a, b)
            assert u == pytest.approx(pair_count_u(a, b))

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.integers(0, 5), min_size=1, max_size=5),
        st.lists(st.integers(0, 5), min_size=1, max_size=5),
    )
    def test_exact_mode_matches_brute_force(self, a, b):
        _, p = mann_whitney_u(a, b)
        assert p == pytest.approx(brute_force_p(a, b))

    def test_normal_approximation_reasonable(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0.0, 1.0, size=30).tolist()
        b = rng.normal(2.0, 1.0, size=30).tolist()
        _, p = mann_whitney_u(a, b)
        assert p < 1e-6
        _, p_same = mann_whitney_u(a, a)
        assert p_same > 0.9

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            mann_whitney_u([], [1.0])


class TestVarghaDelaney:
    def test_identical_distributions(self):
        assert vargha_delaney_a12([1, 2, 3], [1, 2, 3]) == pytest.approx(0.5)

    def test_dominated(self):
        assert vargha_delaney_a12([1, 2], [3, 4]) == 0.0

    def test_listed_example(self):
        assert vargha_delaney_a12([1, 2], [2, 3]) == pytest.approx(0.125)

    @given(
        st.lists(st.integers(0, 9), min_size=1, max_size=6),
        st.lists(st.integers(0, 9), min_size=1, max_size=6),
    )
    def test_symmetry_identity(self, a, b):
        assert vargha_delaney_a12(a, b) + vargha_delaney_a12(b, a) == pytest.approx(1.0)


class TestRunComparison:
    def test_bundle(self):
        cmp = RunComparison.of([0.1, 0.2, 0.15], [0.5, 0.6, 0.4])
        assert cmp.p_value == pytest.approx(0.1)
        assert cmp.a12 == 0.0
        d = cmp.to_dict()
        assert set(d) == {"u", "p", "a12", "dss_a", "dss_b"}


def records_from_matrix(matrix, schema):
    records = []
    for i, row in enumerate(matrix):
        sample = Sample(tuple(int(v) for v in row))
        other = sample.replaced(2, (sample.values[2] + 1) % 2)
        records.append(
            DiscriminatoryRecord(
                sample=sample,
                sensitive_index=2,
                variant_a=sample,
                variant_b=other,
                label_a="a",
                label_b="b",
                dedupe_key=str(i).encode(),
            )
        )
    return records


class TestPcaProject:
    def test_two_dimensional_data_recovered(self, tabular_schema):
        rng = np.random.default_rng(0)
        # vary hours across its whole range, education in a narrow band, so
        # the encoded covariance is nearly diagonal with distinct variances
        matrix = np.zeros((40, 4), dtype=int)
        matrix[:, 1] = rng.integers(0, 100, size=40)
        matrix[:, 3] = rng.integers(8, 10, size=40)
        records = records_from_matrix(matrix, tabular_schema)
        points = pca_project(records, tabular_schema)
        assert points.shape == (40, 2)
        from fairga.data import encode_many

        x = encode_many([r.sample for r in records], tabular_schema)
        centered = x - x.mean(axis=0)
        variances = np.var(centered, axis=0)
        order = np.argsort(variances)[::-1]
        # first axis must match the max-variance encoded coordinate up to sign
        expected_first = centered[:, order[0]]
        corr = abs(np.corrcoef(points[:, 0], expected_first)[0, 1])
        assert corr > 0.999

    def test_all_identical_points_degenerate(self, tabular_schema):
        matrix = np.tile([1, 50, 0, 8], (5, 1))
        records = records_from_matrix(matrix, tabular_schema)
        points = pca_project(records, tabular_schema)
        assert np.allclose(points, 0.0)

    def test_rank_one_data_zero_second_axis(self, tabular_schema):
        matrix = np.zeros((6, 4), dtype=int)
        matrix[:, 1] = np.arange(6) * 10
        records = records_from_matrix(matrix, tabular_schema)
        points = pca_project(records, tabular_schema)
        assert np.allclose(points[:, 1], 0.0)
        assert not np.allclose(points[:, 0], 0.0)

    def test_explained_variance_matches_dense_eigensolver(self, tabular_schema):
        rng = np.random.default_rng(7)
        matrix = np.column_stack(
            [
                rng.integers(0, 3, size=60),
                rng.integers(0, 100, size=60),
                rng.integers(0, 2, size=60),
                rng.integers(1, 17, size=60),
            ]
        )
        records = records_from_matrix(matrix, tabular_schema)
        points = pca_project(records, tabular_schema)

        from fairga.data import encode_many

        x = encode_many([r.sample for r in records], tabular_schema)
        centered = x - x.mean(axis=0)
        cov = centered.T @ centered / (len(records) - 1)
        eigenvalues = np.linalg.eigh(cov)[0][::-1]
        projected_var = points.var(axis=0, ddof=1)
        assert projected_var[0] == pytest.approx(eigenvalues[0], abs=1e-6)
        assert projected_var[1] == pytest.approx(eigenvalues[1], abs=1e-6)

    def test_requires_three_records(self, tabular_schema):
        records = records_from_matrix(np.zeros((2, 4), dtype=int), tabular_schema)
        with pytest.raises(ValueError):
            pca_project(records, tabular_schema)
