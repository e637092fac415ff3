"""
Tests for principal component analysis of curve responses.
"""
import numpy as np
import pytest

from uqsurro.core.pca import (
    PcaModel,
    fit_pca,
    project,
    project_many,
    propagate_uncertainty,
    reconstruct,
    reconstruct_many,
    retained_components,
    variance_table,
)
from uqsurro.data.design import maximin_lhs
from uqsurro.data.oracles import FGR_SCHEMA, fgr_time_grid, synth_fgr
from uqsurro.exceptions import (
    DegenerateDataError,
    DomainError,
    InvalidHyperparameterError,
    ShapeError,
)


@pytest.fixture
def random_curves():
    """Six-point curves, forty samples, with decaying column scales."""
    rng = np.random.default_rng(0)
    return (rng.normal(size=(40, 6)) * np.array([3.0, 2.0, 1.0, 0.5, 0.2, 0.1])).T + 5.0


class TestFitPca:
    """Test cases for fit_pca."""

    def test_rank_one_data(self):
        """Test multiples of one curve need a single component."""
        v = np.array([1.0, -2.0, 0.5, 3.0])
        A = np.outer(v, np.linspace(-1.0, 2.0, 12)) + 7.0
        model = fit_pca(A, threshold=0.99)

        assert model.p_star == 1
        assert model.explained_fraction == pytest.approx(1.0)
        np.testing.assert_allclose(model.components[0], v / np.linalg.norm(v), atol=1e-12)
        assert np.all(model.pc_variances[1:] < 1e-20 * model.pc_variances[0])

    def test_matches_covariance_eigendecomposition(self, random_curves):
        """Test variances and components against the sample covariance."""
        model = fit_pca(random_curves, threshold=1.0)
        eigenvalues, eigenvectors = np.linalg.eigh(np.cov(random_curves))
        order = np.argsort(eigenvalues)[::-1]

        np.testing.assert_allclose(model.pc_variances, eigenvalues[order], rtol=1e-10)
        for k in range(model.p_star):
            assert abs(model.components[k] @ eigenvectors[:, order[k]]) == pytest.approx(1.0, abs=1e-9)

    def test_orthonormal_components(self, random_curves):
        """Test the retained rows are orthonormal."""
        model = fit_pca(random_curves, threshold=0.9)
        np.testing.assert_allclose(model.components @ model.components.T, np.eye(model.p_star), atol=1e-12)

    def test_fewest_components_reaching_threshold(self, random_curves):
        """Test p* is the first index whose cumulative fraction reaches the threshold."""
        model = fit_pca(random_curves, threshold=0.95)
        cumulative = np.cumsum(model.fractions)
        assert cumulative[model.p_star - 1] >= 0.95
        assert model.p_star == 1 or cumulative[model.p_star - 2] < 0.95
        assert model.explained_fraction == pytest.approx(cumulative[model.p_star - 1])

    def test_threshold_one_keeps_all(self):
        """Test threshold 1.0 keeps min(p, N) components."""
        A = np.random.default_rng(1).normal(size=(6, 4))
        assert fit_pca(A, threshold=1.0).p_star == 4

    def test_rounding_short_of_threshold_keeps_all(self):
        """Test a cumulative fraction left just below a threshold near 1 keeps every component."""
        cumulative = np.array([0.6, 0.9, 1.0 - 2e-16])
        assert retained_components(cumulative, 1.0 - 1e-16, rank=3) == 3

    def test_retained_components(self):
        """Test the first index reaching the threshold, ties included."""
        cumulative = np.array([0.5, 0.8, 0.95, 1.0, 1.0])
        assert retained_components(cumulative, 0.8, rank=4) == 2
        assert retained_components(cumulative, 0.9, rank=4) == 3
        assert retained_components(cumulative, 0.1, rank=4) == 1
        assert retained_components(cumulative, 1.0, rank=4) == 4

    def test_sign_convention(self, random_curves):
        """Test each component's largest-magnitude entry is positive."""
        model = fit_pca(random_curves, threshold=1.0)
        for row in model.components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_row_mean(self, random_curves):
        """Test u is the mean curve."""
        np.testing.assert_allclose(fit_pca(random_curves).row_mean, random_curves.mean(axis=1))

    def test_constant_rows(self):
        """Test data without variance is degenerate."""
        with pytest.raises(DegenerateDataError):
            fit_pca(np.full((5, 10), 2.0))

    def test_single_sample(self):
        """Test one sample is degenerate."""
        with pytest.raises(DegenerateDataError):
            fit_pca(np.ones((5, 1)))

    @pytest.mark.parametrize("threshold", [0.0, -0.1, 1.5])
    def test_threshold_range(self, random_curves, threshold):
        """Test thresholds outside (0, 1] are rejected."""
        with pytest.raises(InvalidHyperparameterError):
            fit_pca(random_curves, threshold=threshold)

    def test_non_finite_input(self):
        """Test NaN data is rejected."""
        A = np.random.default_rng(0).normal(size=(3, 5))
        A[1, 2] = np.nan
        with pytest.raises(DomainError):
            fit_pca(A)

    def test_fgr_curves_have_two_components(self):
        """Test the release curves span two shapes."""
        rng = np.random.default_rng(3)
        design = maximin_lhs(60, FGR_SCHEMA, 5, rng)
        curves = synth_fgr(design, fgr_time_grid(100))
        model = fit_pca(curves.T, threshold=0.999999)

        assert model.p_star == 2
        assert model.explained_fraction >= 0.995
        assert model.pc_variances[2] < 1e-12 * model.pc_variances.sum()


class TestProjection:
    """Test cases for projection and reconstruction."""

    def test_round_trip_with_all_components(self, random_curves):
        """Test reconstructing the scores of a curve gives the curve back."""
        model = fit_pca(random_curves, threshold=1.0)
        a = random_curves[:, 7]
        np.testing.assert_allclose(reconstruct(model, project(model, a)), a, rtol=1e-10)

    def test_score_norm(self, random_curves):
        """Test the score norm equals the centred curve norm."""
        model = fit_pca(random_curves, threshold=1.0)
        a = random_curves[:, 3]
        assert np.sum(project(model, a) ** 2) == pytest.approx(np.sum((a - model.row_mean) ** 2), rel=1e-10)

    def test_mean_curve_has_zero_scores(self, random_curves):
        """Test u projects onto the origin."""
        model = fit_pca(random_curves, threshold=0.9)
        np.testing.assert_allclose(project(model, model.row_mean), 0.0, atol=1e-12)

    def test_batched_forms(self, random_curves):
        """Test the matrix forms agree with the vector forms."""
        model = fit_pca(random_curves, threshold=0.9)
        curves = random_curves.T[:5]
        scores = project_many(model, curves)
        np.testing.assert_allclose(scores, np.vstack([project(model, c) for c in curves]), atol=1e-12)
        np.testing.assert_allclose(reconstruct_many(model, scores),
                                   np.vstack([reconstruct(model, s) for s in scores]), atol=1e-12)

    def test_length_checks(self, random_curves):
        """Test wrong vector lengths raise shape errors."""
        model = fit_pca(random_curves, threshold=0.9)
        with pytest.raises(ShapeError):
            project(model, np.ones(5))
        with pytest.raises(ShapeError):
            reconstruct(model, np.ones(model.p_star + 1))


class TestPropagateUncertainty:
    """Test cases for pushing score uncertainty to curves."""

    @pytest.fixture
    def model(self, random_curves):
        return fit_pca(random_curves, threshold=0.95)

    def test_closed_form(self, model):
        """Test the linear-map band."""
        means, variances = np.arange(model.p_star, dtype=float), np.full(model.p_star, 0.3)
        band = propagate_uncertainty(model, means, variances, mode="closed")

        np.testing.assert_allclose(band.mean, reconstruct(model, means))
        expected = np.sqrt(np.diag(model.components.T @ np.diag(variances) @ model.components))
        np.testing.assert_allclose(band.std, expected, rtol=1e-12)
        assert band.samples is None

    def test_monte_carlo_matches_closed_form(self, model):
        """Test sampled bands converge to the linear-map band."""
        means, variances = np.ones(model.p_star), np.linspace(0.2, 1.0, model.p_star)
        closed = propagate_uncertainty(model, means, variances, mode="closed")
        sampled = propagate_uncertainty(model, means, variances, n_samples=20000,
                                        rng=np.random.default_rng(0))

        assert sampled.samples.shape == (20000, model.p)
        np.testing.assert_allclose(sampled.mean, closed.mean, atol=4 * closed.std.max() / np.sqrt(20000))
        np.testing.assert_allclose(sampled.std, closed.std, rtol=0.03)

    def test_zero_variance(self, model):
        """Test certain scores give a zero-width band at the reconstruction."""
        means = np.full(model.p_star, 0.5)
        band = propagate_uncertainty(model, means, np.zeros(model.p_star), rng=np.random.default_rng(0))
        np.testing.assert_array_equal(band.std, np.zeros(model.p))
        np.testing.assert_allclose(band.mean, reconstruct(model, means))

    def test_negative_variance(self, model):
        """Test negative score variances are rejected."""
        with pytest.raises(DomainError):
            propagate_uncertainty(model, np.zeros(model.p_star), -np.ones(model.p_star), mode="closed")

    def test_invalid_options(self, model):
        """Test an unknown mode and a missing stream are rejected."""
        means, variances = np.zeros(model.p_star), np.ones(model.p_star)
        with pytest.raises(InvalidHyperparameterError):
            propagate_uncertainty(model, means, variances, mode="unscented")
        with pytest.raises(InvalidHyperparameterError):
            propagate_uncertainty(model, means, variances)


class TestPcaModel:
    """Test cases for the fitted model record."""

    def test_variance_table(self, random_curves):
        """Test the decay table covers every PC and ends at one."""
        model = fit_pca(random_curves, threshold=0.9)
        table = variance_table(model)

        assert list(table.columns) == ["pc_index", "variance", "fraction", "cumulative_fraction"]
        assert table["pc_index"].tolist() == [1, 2, 3, 4, 5, 6]
        assert table["cumulative_fraction"].iloc[-1] == pytest.approx(1.0)
        assert table["variance"].is_monotonic_decreasing

    def test_dict_round_trip(self, random_curves):
        """Test the model survives serialization."""
        model = fit_pca(random_curves, threshold=0.9)
        restored = PcaModel.from_dict(model.to_dict())

        assert restored.p_star == model.p_star
        assert restored.threshold == 0.9
        np.testing.assert_array_equal(restored.components, model.components)
        np.testing.assert_array_equal(restored.row_mean, model.row_mean)
