"""Sample eigenstructure, angles, scores, and the exact identities.

Independent oracles:
- np.linalg.svd of n^(-1/2) X (different LAPACK driver than eigh):
  squared singular values must match the retained eigenvalues.
- np.roots on the characteristic polynomial of the covariance, a
  brute-force route that shares nothing with either decomposition.
- Hand-computable fixtures: diagonal data, rank-1 data, the vector
  (1,1,1,1)/2 sitting at 45 degrees to span{e1, e2}.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikelab import (
    DataMatrix,
    angle_between,
    angle_report,
    angle_to_subspace,
    build_model,
    exact_identity_residuals,
    gram_eigen,
    pairwise_angles,
    population_scores,
    sample_data,
    sample_eigen,
    sample_z,
    score_ratios,
)
from spikelab.model import Basis


def _data(columns):
    return DataMatrix(columns=np.asarray(columns, dtype=float))


class TestDecomposition:
    def test_diagonal_fixture(self):
        # S = X X^T / 2 = diag(2, 1)
        result = sample_eigen(_data([[2.0, 0.0], [0.0, math.sqrt(2.0)]]))
        np.testing.assert_allclose(result.eigenvalues, [2.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(np.abs(result.eigenvectors), np.eye(2), atol=1e-12)
        assert result.method == "direct"
        # score vector of the top pair: X^T e1 / sqrt(n * 2) = (1, 0)
        np.testing.assert_allclose(result.score_vectors[:, 0], [1.0, 0.0], atol=1e-12)

    def test_rank_one(self):
        u = np.array([0.6, 0.8])
        s = np.array([1.0, 2.0, 3.0])
        result = sample_eigen(_data(np.outer(u, s)))
        assert result.eigenvalues.shape == (1,)
        np.testing.assert_allclose(result.eigenvalues[0], s @ s / 3.0, rtol=1e-12)
        np.testing.assert_allclose(result.eigenvectors[:, 0], u, atol=1e-12)
        np.testing.assert_allclose(result.score_vectors[:, 0], s / np.linalg.norm(s), atol=1e-12)

    def test_against_svd_and_charpoly(self):
        rng = np.random.default_rng(42)
        x = rng.normal(size=(5, 3))
        n = 3
        result = sample_eigen(_data(x))

        _, sv, vt = np.linalg.svd(x / math.sqrt(n), full_matrices=False)
        np.testing.assert_allclose(result.eigenvalues, sv[: len(result.eigenvalues)] ** 2,
                                   rtol=1e-10)

        coeffs = np.poly(x @ x.T / n)
        roots = np.sort_complex(np.roots(coeffs))[::-1].real
        np.testing.assert_allclose(result.eigenvalues, roots[: len(result.eigenvalues)],
                                   rtol=1e-8, atol=1e-10)

    def test_eigenvectors_match_svd(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(6, 10))
        result = sample_eigen(_data(x))
        u_svd, sv, _ = np.linalg.svd(x / math.sqrt(10.0), full_matrices=False)
        for j in range(len(result.eigenvalues)):
            assert abs(result.eigenvectors[:, j] @ u_svd[:, j]) > 1.0 - 1e-9

    def test_gram_matches_direct(self):
        rng = np.random.default_rng(3)
        for d, n in ((5, 3), (3, 8), (7, 7)):
            x = rng.normal(size=(d, n))
            direct = sample_eigen(_data(x))
            dual = gram_eigen(_data(x))
            assert direct.method == "direct" and dual.method == "gram"
            k = min(direct.eigenvalues.size, dual.eigenvalues.size)
            np.testing.assert_allclose(
                direct.eigenvalues[:k], dual.eigenvalues[:k], rtol=1e-10
            )
            for j in range(k):
                assert abs(direct.eigenvectors[:, j] @ dual.eigenvectors[:, j]) > 1 - 1e-9
                assert abs(direct.score_vectors[:, j] @ dual.score_vectors[:, j]) > 1 - 1e-9

    def test_dispatch_rule(self):
        rng = np.random.default_rng(0)
        assert sample_eigen(_data(rng.normal(size=(50, 10)))).method == "direct"
        assert sample_eigen(_data(rng.normal(size=(2001, 4)))).method == "gram"
        # wide data goes direct even past the dense limit
        assert sample_eigen(_data(rng.normal(size=(30, 100)))).method == "direct"

    def test_retention_drops_null_directions(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(6, 4))
        x[:, 3] = x[:, 2]  # duplicate observation: covariance rank 3
        result = sample_eigen(_data(x))
        assert result.eigenvalues.size == 3
        assert np.all(result.eigenvalues > 0)

    def test_zero_data(self):
        result = sample_eigen(_data(np.zeros((4, 3))))
        assert result.eigenvalues.size == 0
        assert result.eigenvectors.shape == (4, 0)

    def test_sign_convention(self):
        rng = np.random.default_rng(11)
        for shape in ((8, 5), (2500, 6)):
            result = sample_eigen(_data(rng.normal(size=shape)))
            u = result.eigenvectors
            peaks = np.argmax(np.abs(u), axis=0)
            assert np.all(u[peaks, np.arange(u.shape[1])] > 0)

    def test_reconstruction(self):
        """n^(-1/2) X = sum_j sqrt(lam_j) u_j v_j^T over retained pairs."""
        rng = np.random.default_rng(13)
        x = rng.normal(size=(4, 6))
        result = sample_eigen(_data(x))
        rebuilt = (result.eigenvectors * np.sqrt(result.eigenvalues)) @ result.score_vectors.T
        np.testing.assert_allclose(rebuilt, x / math.sqrt(6.0), atol=1e-10)

    def test_orthonormal_outputs(self):
        rng = np.random.default_rng(17)
        x = rng.normal(size=(9, 5))
        result = sample_eigen(_data(x))
        k = result.eigenvalues.size
        np.testing.assert_allclose(result.eigenvectors.T @ result.eigenvectors,
                                   np.eye(k), atol=1e-10)
        np.testing.assert_allclose(result.score_vectors.T @ result.score_vectors,
                                   np.eye(k), atol=1e-10)

    def test_center_flag(self):
        rng = np.random.default_rng(19)
        x = rng.normal(size=(5, 12)) + 40.0
        from spikelab import center

        direct = sample_eigen(_data(x), center=True)
        reference = sample_eigen(center(_data(x)))
        np.testing.assert_allclose(direct.eigenvalues, reference.eigenvalues, rtol=1e-12)


class TestAngles:
    def test_known_vector_angles(self):
        e1 = np.array([1.0, 0.0])
        e2 = np.array([0.0, 1.0])
        diag = np.array([1.0, 1.0]) / math.sqrt(2.0)
        assert angle_between(e1, e1) == 0.0
        assert angle_between(e1, e2) == 90.0
        assert abs(angle_between(diag, e1) - 45.0) < 1e-12
        assert abs(angle_between(-diag, e1) - 45.0) < 1e-12  # sign-blind

    def test_vector_angle_validation(self):
        with pytest.raises(ValueError, match="unit"):
            angle_between(np.array([2.0, 0.0]), np.array([1.0, 0.0]))
        with pytest.raises(ValueError, match="mismatch"):
            angle_between(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]))

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=50, deadline=None)
    def test_vector_angle_properties(self, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=6)
        u = rng.normal(size=6)
        v /= np.linalg.norm(v)
        u /= np.linalg.norm(u)
        a = angle_between(v, u)
        assert 0.0 <= a <= 90.0
        assert angle_between(u, v) == a
        # arccos near 1 amplifies rounding: self-angle is zero only to ~1e-5 deg
        assert angle_between(v, -v) < 1e-5

    def test_subspace_angles(self):
        basis = np.eye(4)[:, :2]
        assert angle_to_subspace(np.eye(4)[:, 0], basis) == 0.0
        assert angle_to_subspace(np.eye(4)[:, 3], basis) == 90.0
        v = np.full(4, 0.5)  # projection norm 1/sqrt(2): 45 degrees
        assert abs(angle_to_subspace(v, basis) - 45.0) < 1e-12

    def test_subspace_validation(self):
        with pytest.raises(ValueError, match="orthonormal"):
            angle_to_subspace(np.eye(3)[:, 0], np.ones((3, 2)))
        with pytest.raises(ValueError, match="incompatible"):
            angle_to_subspace(np.eye(3)[:, 0], np.eye(4)[:, :2])

    def test_subspace_never_exceeds_member_angle(self):
        rng = np.random.default_rng(23)
        basis = np.eye(5)[:, :2]
        for _ in range(20):
            v = rng.normal(size=5)
            v /= np.linalg.norm(v)
            sub = angle_to_subspace(v, basis)
            assert sub <= angle_between(v, basis[:, 0]) + 1e-9
            assert sub <= angle_between(v, basis[:, 1]) + 1e-9

    def test_pairwise_matrix(self):
        angles = pairwise_angles(np.eye(3)[:, :2])
        np.testing.assert_allclose(angles, [[0.0, 90.0], [90.0, 0.0]], atol=1e-12)
        dup = np.stack([np.eye(3)[:, 0], np.eye(3)[:, 0]], axis=1)
        np.testing.assert_allclose(pairwise_angles(dup), np.zeros((2, 2)), atol=1e-6)

    def test_pairwise_concentration_on_sphere(self):
        # independent uniform directions in high dimension are nearly orthogonal
        rng = np.random.default_rng(29)
        vecs = rng.normal(size=(10_000, 40))
        vecs /= np.linalg.norm(vecs, axis=0)
        angles = pairwise_angles(vecs)
        off = angles[np.triu_indices(40, k=1)]
        assert abs(off.mean() - 90.0) < 1.0
        assert np.all(off > 80.0)


class TestAngleReport:
    def _model_and_result(self):
        model = build_model(300, 80, [(2, 0.05), (1, 0.15)])
        data = sample_data(model, sample_z(80, 300, seed=31))
        return model, sample_eigen(data)

    def test_shapes_and_tiers(self):
        model, result = self._model_and_result()
        report = angle_report(model, result, monitored_noise=2)
        assert report.indices == (1, 2, 3, 4, 5)
        assert report.tiers == (1, 1, 2, 3, 3)
        assert np.all(report.vector_angles_deg >= 0)
        assert np.all(report.vector_angles_deg <= 90)
        # vectors cannot be closer to a single axis than to that axis's block
        assert np.all(report.subspace_angles_deg <= report.vector_angles_deg + 1e-9)

    def test_identity_shortcut_matches_general_path(self):
        model, result = self._model_and_result()
        fast = angle_report(model, result, monitored_noise=2)
        explicit = build_model(
            300, 80, [(2, 0.05), (1, 0.15)], basis=Basis.explicit(np.eye(300))
        )
        slow = angle_report(explicit, result, monitored_noise=2)
        np.testing.assert_allclose(fast.vector_angles_deg, slow.vector_angles_deg, atol=1e-9)
        np.testing.assert_allclose(fast.subspace_angles_deg, slow.subspace_angles_deg,
                                   atol=1e-9)

    def test_merged_span_shrinks_angle(self):
        model, result = self._model_and_result()
        per_tier = angle_report(model, result)
        merged = angle_report(model, result, merge_spike_tiers=True)
        assert np.all(
            merged.subspace_angles_deg <= per_tier.subspace_angles_deg + 1e-9
        )

    def test_requesting_too_many_indices(self):
        model, result = self._model_and_result()
        with pytest.raises(ValueError, match="retained"):
            angle_report(model, result, monitored_noise=10_000)


class TestScores:
    def test_population_scores_recover_factor(self):
        model = build_model(120, 40, [(1, 0.06), (1, 0.3)])
        z = sample_z(40, 120, seed=37)
        data = sample_data(model, z)
        scores = population_scores(model, data)
        np.testing.assert_allclose(scores, z.entries[:, :2], atol=1e-12)

    def test_population_scores_subtract_mean(self):
        model = build_model(120, 40, [(1, 0.06)], mean=3.0)
        z = sample_z(40, 120, seed=37)
        data = sample_data(model, z)
        np.testing.assert_allclose(
            population_scores(model, data), z.entries[:, :1], atol=1e-10
        )

    def test_score_ratio_alignment(self):
        # craft a result whose rescaled dual vectors equal the population scores
        n = 4
        pop = np.array([[1.0], [-2.0], [0.5], [1.5]])
        v = pop / math.sqrt(n)
        result_like = type("R", (), {})()
        result_like.score_vectors = v
        ratios = score_ratios(result_like, pop)
        np.testing.assert_allclose(ratios, np.ones((4, 1)), atol=1e-12)
        result_like.score_vectors = -v  # global sign flip is re-aligned
        np.testing.assert_allclose(score_ratios(result_like, pop), np.ones((4, 1)),
                                   atol=1e-12)

    def test_score_ratio_flags_tiny_denominators(self):
        pop = np.array([[1.0], [1e-12]])
        result_like = type("R", (), {})()
        result_like.score_vectors = np.array([[0.5], [0.5]])
        ratios = score_ratios(result_like, pop)
        assert np.isfinite(ratios[0, 0])
        assert np.isnan(ratios[1, 0])

    def test_score_ratio_shape_checks(self):
        result_like = type("R", (), {})()
        result_like.score_vectors = np.ones((5, 1))
        with pytest.raises(ValueError, match="observations"):
            score_ratios(result_like, np.ones((4, 1)))
        with pytest.raises(ValueError, match="retained"):
            score_ratios(result_like, np.ones((5, 3)))


class TestExactIdentities:
    """Finite-sample identities that hold to rounding error at any size."""

    @pytest.mark.parametrize("d,n,seed", [(50, 30, 1), (30, 50, 2), (40, 40, 3)])
    def test_residuals_near_machine_precision(self, d, n, seed):
        model = build_model(d, n, [(1, d / (n * 8.0))])
        z = sample_z(n, d, seed=seed)
        result = sample_eigen(sample_data(model, z))
        res = exact_identity_residuals(
            model, z, result, include_factor=True, include_orthonormality=True
        )
        assert res["rowwise"] <= 1e-10
        assert res["trace"] <= 1e-10
        assert res["bound"] <= 1e-10  # may be negative: slack
        assert res["orthonormality"] <= 1e-12
        assert res["factor_max"] <= 1e-10
        assert res["factor_frobenius"] <= 1e-9

    def test_trace_identity_by_hand(self):
        model = build_model(25, 10, [(1, 0.25)])
        z = sample_z(10, 25, seed=41)
        data = sample_data(model, z)
        result = sample_eigen(data)
        lhs = result.eigenvalues.sum()
        rhs = np.sum(data.columns**2) / 10.0
        assert abs(lhs - rhs) <= 1e-10 * rhs

    def test_requires_identity_basis(self):
        model = build_model(10, 8, [(1, 0.25)], basis=Basis.random_orthogonal(1))
        z = sample_z(8, 10, seed=1)
        result = sample_eigen(sample_data(model, z))
        with pytest.raises(ValueError, match="identity"):
            exact_identity_residuals(model, z, result)

    def test_requires_zero_mean(self):
        model = build_model(10, 8, [(1, 0.25)], mean=1.0)
        z = sample_z(8, 10, seed=1)
        result = sample_eigen(sample_data(model, z))
        with pytest.raises(ValueError, match="mean"):
            exact_identity_residuals(model, z, result)
