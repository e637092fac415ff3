"""
Tests for maximin Latin hypercube designs.
"""
import numpy as np
import pytest

from uqsurro.data.dataset import InputParameter, InputSchema
from uqsurro.data.design import (
    MaximinLatinHypercube,
    crossed_design,
    latin_hypercube,
    maximin_lhs,
    min_distance,
)
from uqsurro.exceptions import InvalidHyperparameterError


SCHEMA = InputSchema((
    InputParameter("a", 0.0, 2.0),
    InputParameter("b", 0.1, 10.0, "loguniform"),
    InputParameter("c", -1.0, 1.0, "normal"),
))


def assert_stratified(design):
    n = design.shape[0]
    for column in design.T:
        assert sorted(np.floor(column * n).astype(int)) == list(range(n))


class TestLatinHypercube:
    """Test cases for single Latin hypercubes."""

    @pytest.mark.parametrize("seed", range(100))
    def test_one_point_per_stratum(self, seed):
        """Test every column hits each of the n strata exactly once, single and maximin."""
        rng = np.random.default_rng(seed)
        n, d, iterations = int(rng.integers(1, 41)), int(rng.integers(1, 7)), int(rng.integers(1, 21))

        design = latin_hypercube(n, d, rng)
        assert design.shape == (n, d)
        assert_stratified(design)

        result = MaximinLatinHypercube(iterations).sample_unit(n, d, rng)
        assert_stratified(result.unit_design)
        assert result.min_distance >= result.first_min_distance

    def test_unit_range(self):
        """Test points lie in the unit hypercube."""
        design = latin_hypercube(50, 3, np.random.default_rng(1))
        assert np.all((design >= 0.0) & (design < 1.0))

    def test_min_distance(self):
        """Test the closest-pair distance."""
        points = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 1.0]])
        assert min_distance(points) == pytest.approx(1.0)
        assert min_distance(points[:1]) == 0.0


class TestMaximin:
    """Test cases for maximin selection."""

    def test_never_worse_than_first_candidate(self):
        """Test the kept design separates points at least as well as the first draw."""
        result = MaximinLatinHypercube(50).sample_unit(20, 3, np.random.default_rng(2))
        assert result.min_distance >= result.first_min_distance
        assert result.min_distance == pytest.approx(min_distance(result.unit_design))

    def test_single_point(self):
        """Test a one-point design."""
        result = MaximinLatinHypercube(5).sample_unit(1, 3, np.random.default_rng(0))
        assert result.unit_design.shape == (1, 3)
        assert result.min_distance == 0.0

    def test_invalid_sizes(self):
        """Test empty designs and zero iterations are rejected."""
        with pytest.raises(InvalidHyperparameterError):
            MaximinLatinHypercube(0)
        with pytest.raises(InvalidHyperparameterError):
            MaximinLatinHypercube(5).sample_unit(0, 2, np.random.default_rng(0))

    def test_design_in_bounds(self):
        """Test the mapped design honours every parameter's bounds."""
        design = maximin_lhs(40, SCHEMA, 10, np.random.default_rng(4))
        assert design.shape == (40, 3)
        SCHEMA.check_bounds(design)
        assert np.all(design[:, 1] > 0)

    def test_deterministic(self):
        """Test the same stream reproduces the design."""
        first = maximin_lhs(15, SCHEMA, 10, np.random.default_rng(9))
        second = maximin_lhs(15, SCHEMA, 10, np.random.default_rng(9))
        np.testing.assert_array_equal(first, second)


class TestCrossedDesign:
    """Test cases for outer-by-inner designs."""

    def test_shape_and_grouping(self):
        """Test each outer row is repeated for its own inner design."""
        outer = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        inner = InputSchema((InputParameter("m", 0.0, 5.0),))
        design = crossed_design(outer, 4, inner, 5, np.random.default_rng(0))

        assert design.shape == (12, 3)
        for i, row in enumerate(outer):
            block = design[4 * i:4 * i + 4]
            np.testing.assert_array_equal(block[:, :2], np.tile(row, (4, 1)))
            assert sorted(np.floor(block[:, 2] / 5.0 * 4).astype(int)) == [0, 1, 2, 3]
