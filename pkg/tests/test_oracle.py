import warnings

import numpy as np
import pytest
from scipy import stats

from intrepid.errors import BoundaryMassWarning, BoundViolation, EmptySample
from intrepid.oracle import (
    ReferenceSet,
    cell_probabilities,
    chi2_from_probabilities,
    chi2_gof,
    grid_normalization,
    quantile_edges,
    reference_moments,
    reference_set,
    rejection_sample,
    section_cell_probabilities,
    target_gof,
    two_means,
)
from intrepid.targets import Envelope, indicator, make_case, make_gauss_planes


def gauss2(x):
    return -0.5 * np.sum(np.atleast_2d(x) ** 2, axis=-1)


class TestRejection:
    def test_support_respected(self):
        for n in (2, 3, 6):
            ref = rejection_sample(make_case(n), 2000, seed=n)
            assert ref.n == 2000
            assert np.all(indicator(make_case(n).meta["indicator"], ref.samples) == 1)

    def test_ring_acceptance_from_parent(self):
        # plain parent proposals land outside radius 4 with probability exp(-8)
        t = make_case(1)
        env = Envelope(t.parent.sample, t.log_transform, 1.0, "parent")
        ref = rejection_sample(t, 300, envelope=env, seed=1)
        assert ref.acceptance == pytest.approx(np.exp(-8), rel=0.25)
        assert np.all(np.linalg.norm(ref.samples, axis=1) > 4)

    def test_ring_envelope_matches_radial_law(self):
        ref = rejection_sample(make_case(1), 20_000, seed=2)
        r2 = np.sum(ref.samples ** 2, axis=1) - 16
        # r^2 - 16 is exponential with mean 2 beyond the ring
        assert stats.kstest(r2, stats.expon(scale=2).cdf).pvalue > 1e-3

    def test_zero(self):
        ref = rejection_sample(make_case(2), 0)
        assert ref.samples.shape == (0, 2)

    def test_bound_violation(self):
        with pytest.raises(BoundViolation):
            rejection_sample(make_case(2), 100, bound=0.5)

    def test_deterministic(self):
        a = reference_set(make_case(5), 500, seed=4, chunks=2)
        b = reference_set(make_case(5), 500, seed=4, chunks=2)
        assert np.array_equal(a.samples, b.samples)
        assert a.n == 500

    def test_gauss_planes_masses(self):
        ref = rejection_sample(make_gauss_planes(3), 50_000, seed=5)
        right = np.mean(ref.samples[:, 0] >= 1.25)
        assert right == pytest.approx(0.725, abs=0.01)


class TestMoments:
    def test_values(self):
        mean, cov = reference_moments(np.array([[0.0, 0.0], [2.0, 2.0]]))
        assert mean == pytest.approx([1.0, 1.0])
        assert cov == pytest.approx(np.full((2, 2), 2.0))

    def test_single_point(self):
        mean, cov = reference_moments(np.array([[3.0, 4.0]]))
        assert mean == pytest.approx([3.0, 4.0])
        assert np.all(cov == 0.0)

    def test_empty(self):
        with pytest.raises(EmptySample):
            reference_moments(np.empty((0, 2)))


class TestSaveLoad:
    def test_round_trip(self, tmp_path):
        ref = rejection_sample(make_case(2), 100, seed=7)
        path = ref.save(tmp_path / "ref")
        back = ReferenceSet.load(path)
        assert np.array_equal(back.samples, ref.samples)
        assert (back.seed, back.target, back.accepted, back.proposed) == (7, ref.target, ref.accepted, ref.proposed)


class TestGridNormalization:
    def test_gaussian(self):
        z = grid_normalization(gauss2, [[-8, 8], [-8, 8]], 400)
        assert z == pytest.approx(2 * np.pi, rel=1e-3)

    def test_unit_square(self):
        def square(x):
            x = np.atleast_2d(x)
            return np.where(np.all((x >= 0) & (x <= 1), axis=1), 0.0, -np.inf)

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert grid_normalization(square, [[0, 1], [0, 1]], 50) == pytest.approx(1.0)

    def test_boundary_warning(self):
        with pytest.warns(BoundaryMassWarning):
            grid_normalization(gauss2, [[-1, 1], [-1, 1]], 50)

    def test_no_warning_when_wide(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            grid_normalization(gauss2, [[-8, 8], [-8, 8]], 100)

    def test_cells_sum(self):
        edges = (np.linspace(-8, 8, 5), np.linspace(-8, 8, 3))
        p = cell_probabilities(gauss2, edges, sub=50, log_norm=np.log(2 * np.pi))
        assert p.shape == (4, 2)
        assert p.sum() == pytest.approx(1.0, rel=1e-6)
        assert p[1, 0] == pytest.approx((stats.norm.cdf(0) - stats.norm.cdf(-4)) * 0.5, rel=1e-4)


class TestChi2:
    def test_pooling(self):
        res = chi2_from_probabilities([50, 50, 0, 0], [0.5, 0.5, 1e-6, 1e-6])
        assert res.dof == 1
        assert res.statistic == pytest.approx(0.0, abs=1e-3)

    def test_gaussian_fit_and_misfit(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(20_000, 2))
        edges = quantile_edges(x, 10)
        assert chi2_gof(x, gauss2, edges, box=[[-8, 8], [-8, 8]]).pvalue > 1e-3
        assert chi2_gof(1.1 * x, gauss2, edges, box=[[-8, 8], [-8, 8]]).pvalue < 1e-6

    def test_sections_match_midpoint(self):
        t = make_case(8)
        edges = (np.linspace(-2, 2, 5), np.linspace(-1, 5, 4))
        cells, z = section_cell_probabilities("I3", "f3", edges)
        mid = cell_probabilities(t.log_density_uncounted, edges, sub=400)
        assert cells == pytest.approx(mid, rel=1e-3, abs=1e-6 * z)

    def test_target_gof(self):
        t = make_case(6)
        ref = rejection_sample(t, 20_000, seed=9)
        assert target_gof(ref, t).pvalue > 1e-3
        wrong = ReferenceSet(rejection_sample(make_case(3), 20_000, seed=9).samples, 9, "case3")
        assert target_gof(wrong, t).pvalue < 1e-6


class TestTwoMeans:
    def test_split(self):
        t = make_gauss_planes(2)
        ref = rejection_sample(t, 20_000, seed=3)
        split = two_means(ref, target=t)
        assert split.centres[0, 0] < -1.75 and split.centres[1, 0] > 1.25
        assert split.fractions[1] == pytest.approx(0.725, abs=0.02)
        lab = split.label(np.array([[-3.0, 0.0], [3.0, 0.0]]))
        assert lab.tolist() == [0, 1]
        assert [r(np.array([[3.0, 0.0]]))[0] for r in split.regions()] == [False, True]

    def test_lopsided(self):
        x = np.vstack([np.zeros((1000, 2)), np.full((5, 2), 10.0)])
        with pytest.raises(ValueError):
            two_means(x)
