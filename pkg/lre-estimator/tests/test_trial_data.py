"""
Unit tests for trial data ingestion and sufficient statistics.

This module tests CSV loading and validation, the per-site sufficient
statistics and the scaling unit on small hand-checked datasets.
"""

import tempfile
import unittest
from pathlib import Path

import numpy as np
import pytest

from trial_data import (
    IndividualRecord,
    SiteCovariates,
    TrialDataset,
    control_sample_means,
    load_csv,
    scaling_unit,
    site_covariate_matrix,
    summarize_arrays,
    summarize_sites,
    write_csv,
)
from utils.errors import CsvParseError, DatasetValidationError, SchemaError

# Test constants
TOY_CSV = "site,z,y\nA,0,1\nA,1,2\nB,0,3\nB,1,5\n"
MISSING_ARM_CSV = "site,z,y\nA,1,1\nA,1,2\nB,0,3\nB,1,5\n"
MISSING_Y_CSV = "site,z,y\nA,0,1\nA,1,\nB,0,3\nB,1,5\n"
RAGGED_SITES_CSV = "site,phi1\nA,1.0\nA,2.0\n"
CONSTANT = 7.5


def _random_dataset(seed: int = 3, J: int = 6, n_per_site: int = 40) -> TrialDataset:  # noqa: N803
    rng = np.random.default_rng(seed)
    site_idx = np.repeat(np.arange(J), n_per_site)
    z = np.tile(np.r_[np.zeros(n_per_site // 2), np.ones(n_per_site // 2)], J)
    y = rng.normal(100.0, 15.0, size=J * n_per_site) + 5 * z
    x = rng.normal(size=(J * n_per_site, 2))
    phi = rng.normal(size=(J, 2))
    return TrialDataset.from_arrays(
        [f"s{j}" for j in range(J)], site_idx, z, y, x, phi
    )


class TestLoadCsv(unittest.TestCase):
    """Test cases for CSV ingestion and validation."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_minimal_file_loads(self):
        """Test that 2 sites x 2 arms without covariates load as J=2, n=4."""
        dataset = load_csv(self._write("toy.csv", TOY_CSV))

        assert dataset.J == 2
        assert dataset.n == 4
        assert dataset.site_ids == ("A", "B")
        assert dataset.x.shape == (4, 0)

    def test_missing_arm_names_site(self):
        """Test that a site with only treated records is rejected by name."""
        with pytest.raises(DatasetValidationError) as info:
            load_csv(self._write("arm.csv", MISSING_ARM_CSV))

        assert info.value.site_id == "A"
        assert "'A'" in str(info.value)

    def test_missing_outcome_reports_line(self):
        """Test that an empty y is a parse error carrying the file line."""
        with pytest.raises(CsvParseError) as info:
            load_csv(self._write("y.csv", MISSING_Y_CSV))

        assert info.value.line == 3

    def test_missing_required_column(self):
        """Test that a file without a z column is a schema error."""
        with pytest.raises(SchemaError):
            load_csv(self._write("noz.csv", "site,y\nA,1\nB,2\n"))

    def test_duplicate_site_covariates_rejected(self):
        """Test that a site listed twice in the site file is a schema error."""
        data = self._write("toy.csv", TOY_CSV)
        sites = self._write("sites.csv", RAGGED_SITES_CSV)

        with pytest.raises(SchemaError):
            load_csv(data, site_covariate_path=sites)

    def test_unknown_site_rejected(self):
        """Test that a record whose site is absent from the site file fails."""
        data = self._write("toy.csv", TOY_CSV)
        sites = self._write("sites.csv", "site,phi1\nA,1.0\n")

        with pytest.raises(DatasetValidationError):
            load_csv(data, site_covariate_path=sites)

    def test_round_trip_preserves_statistics(self):
        """Test that write_csv then load_csv reproduces the sufficient statistics."""
        dataset = _random_dataset()
        data, sites = self.dir / "data.csv", self.dir / "sites.csv"
        write_csv(dataset, data, sites)

        reloaded = load_csv(data, site_covariate_path=sites)
        before, after = summarize_arrays(dataset), summarize_arrays(reloaded)

        assert reloaded.site_ids == dataset.site_ids
        np.testing.assert_allclose(after.ybar0, before.ybar0, rtol=1e-12)
        np.testing.assert_allclose(after.ybar1, before.ybar1, rtol=1e-12)
        np.testing.assert_allclose(after.ss1, before.ss1, rtol=1e-10)
        np.testing.assert_allclose(reloaded.phi_x, dataset.phi_x, rtol=1e-12)


class TestTrialDataset(unittest.TestCase):
    """Test cases for dataset construction invariants."""

    def test_from_records_matches_from_arrays(self):
        """Test that record objects and column arrays build the same dataset."""
        records = [
            IndividualRecord("A", 0, 1.0, (0.5,)),
            IndividualRecord("A", 1, 2.0, (1.5,)),
            IndividualRecord("B", 0, 3.0, (2.5,)),
            IndividualRecord("B", 1, 5.0, (3.5,)),
        ]
        sites = [SiteCovariates("A", (1.0,)), SiteCovariates("B", (2.0,))]
        dataset = TrialDataset.from_records(records, sites)

        assert dataset.records == tuple(records)
        assert dataset.site_covariates == tuple(sites)

    def test_covariate_length_mismatch(self):
        """Test that records with different covariate lengths are rejected."""
        records = [
            IndividualRecord("A", 0, 1.0, (0.5,)),
            IndividualRecord("A", 1, 2.0, ()),
        ]
        with pytest.raises(SchemaError):
            TrialDataset.from_records(records, [SiteCovariates("A")])

    def test_single_site_rejected(self):
        """Test that a dataset needs at least two sites."""
        with pytest.raises(DatasetValidationError):
            TrialDataset.from_arrays(["A"], [0, 0], [0, 1], [1.0, 2.0])

    def test_arrays_are_read_only(self):
        """Test that dataset arrays cannot be modified after construction."""
        dataset = _random_dataset()
        with pytest.raises(ValueError):
            dataset.y[0] = 0.0


class TestSummarizeSites(unittest.TestCase):
    """Test cases for per-site sufficient statistics."""

    def test_hand_computed_site(self):
        """Test control {1,1}, treated {2,4} gives means 1/3 and ss 0/2."""
        dataset = TrialDataset.from_arrays(
            ["A", "B"], [0, 0, 0, 0, 1, 1], [0, 0, 1, 1, 0, 1], [1, 1, 2, 4, 0, 1]
        )
        site = summarize_sites(dataset)[0]

        assert (site.n0, site.n1) == (2, 2)
        assert site.ybar0 == 1.0
        assert site.ybar1 == 3.0
        assert site.ss0 == 0.0
        assert site.ss1 == pytest.approx(2.0)

    def test_constant_outcomes(self):
        """Test that constant data has equal means and zero sums of squares."""
        dataset = _random_dataset()
        constant = dataset.with_outcomes(np.full(dataset.n, CONSTANT))

        for site in summarize_sites(constant):
            assert site.ybar0 == pytest.approx(CONSTANT)
            assert site.ybar1 == pytest.approx(CONSTANT)
            assert site.ss0 == pytest.approx(0.0, abs=1e-10)
            assert site.ss1 == pytest.approx(0.0, abs=1e-10)

    def test_itt_equals_ols_slope(self):
        """Test that ybar1 - ybar0 equals the per-site OLS slope of y on z."""
        dataset = _random_dataset(seed=11)
        stats = summarize_sites(dataset)

        for j, site in enumerate(stats):
            mask = dataset.site_idx == j
            design = np.column_stack([np.ones(mask.sum()), dataset.z[mask]])
            coef, *_ = np.linalg.lstsq(design, dataset.y[mask], rcond=None)
            assert site.itt == pytest.approx(coef[1], rel=1e-10)

    def test_totals_match_record_count(self):
        """Test that the arm counts add up to the number of records."""
        dataset = _random_dataset()
        stats = summarize_arrays(dataset)

        assert int(stats.n0.sum() + stats.n1.sum()) == dataset.n

    def test_control_sample_means(self):
        """Test that the raw control means match the Step-1 input column."""
        dataset = TrialDataset.from_arrays(
            ["A", "B"], [0, 0, 0, 0, 1, 1], [0, 0, 1, 1, 0, 1], [1, 3, 2, 4, 7, 1]
        )

        np.testing.assert_array_equal(control_sample_means(dataset), [2.0, 7.0])

    def test_permutation_invariance(self):
        """Test that permuting records changes the statistics only by rounding."""
        dataset = _random_dataset(seed=5)
        order = np.random.default_rng(0).permutation(dataset.n)
        shuffled = TrialDataset.from_arrays(
            dataset.site_ids,
            dataset.site_idx[order],
            dataset.z[order],
            dataset.y[order],
            dataset.x[order],
            dataset.phi_x,
        )
        a, b = summarize_arrays(dataset), summarize_arrays(shuffled)

        np.testing.assert_allclose(a.ybar0, b.ybar0, rtol=1e-10)
        np.testing.assert_allclose(a.ss0, b.ss0, rtol=1e-10)
        np.testing.assert_allclose(a.ss1, b.ss1, rtol=1e-10)


class TestScalingUnit(unittest.TestCase):
    """Test cases for the effect-size scaling unit."""

    def test_constant_controls_give_zero(self):
        """Test that equal control outcomes give a scaling unit of 0."""
        dataset = _random_dataset()
        y = np.where(dataset.z == 0, CONSTANT, dataset.y)

        assert scaling_unit(dataset.with_outcomes(y)).value == pytest.approx(0.0)

    def test_single_control_record_warns(self):
        """Test that a site with one control record is listed in the warnings."""
        dataset = TrialDataset.from_arrays(
            ["A", "B"], [0, 0, 1, 1, 1], [0, 1, 0, 0, 1], [1.0, 2.0, 3.0, 5.0, 4.0]
        )
        unit = scaling_unit(dataset)

        assert len(unit.warnings) == 1
        assert "'A'" in unit.warnings[0]
        assert unit.value == pytest.approx(np.sqrt(2.0) / 2)


class TestSiteCovariateMatrix(unittest.TestCase):
    """Test cases for the site covariate matrix helper."""

    def test_extra_columns_appended(self):
        """Test that named extra covariates are appended after Phi_X."""
        dataset = _random_dataset()
        extra = TrialDataset.from_arrays(
            dataset.site_ids,
            dataset.site_idx,
            dataset.z,
            dataset.y,
            dataset.x,
            dataset.phi_x,
            extra_site_covariates={"w": np.arange(dataset.J, dtype=float)},
        )
        matrix, names = site_covariate_matrix(extra, ("w",))

        assert matrix.shape == (dataset.J, 3)
        assert names == ("phi1", "phi2", "w")
        np.testing.assert_array_equal(matrix[:, 2], np.arange(dataset.J))

    def test_unknown_extra_column(self):
        """Test that asking for an absent extra covariate is a schema error."""
        with pytest.raises(SchemaError):
            site_covariate_matrix(_random_dataset(), ("missing",))
