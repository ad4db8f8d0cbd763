import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from intrepid.errors import ConfigError, NonPhysical
from intrepid.parent import RtfClass
from intrepid.targets import (
    CASES,
    CIRCLE_CENTRES,
    OscillatorSpec,
    density_f,
    eigenfrequencies,
    indicator,
    log_f,
    lognormal_params,
    make_case,
    make_gauss_planes,
    make_oscillator,
    make_target,
    measure_of_fit,
    x2_mass,
    x2_sections,
)


class TestIndicators:
    def test_ring(self):
        assert indicator("I4", np.array([5.0, 0.0])) == 1
        assert indicator("I4", np.array([0.0, 0.0])) == 0

    def test_planes(self):
        assert indicator("I1", np.array([1.3, 0.0])) == 1
        assert indicator("I1", np.array([0.0, 0.0])) == 0
        assert indicator("I1", np.array([-1.8, 0.0])) == 1

    def test_circle_centre(self):
        assert indicator("I6", np.array(CIRCLE_CENTRES[0])) == 1

    def test_batch(self):
        assert indicator("I3", np.array([[3.0, 0.0], [0.0, 0.0]])).tolist() == [1, 0]

    def test_unknown(self):
        with pytest.raises(ValueError):
            indicator("I9", np.zeros(2))

    @pytest.mark.parametrize("ind", ["I1", "I2", "I3", "I4", "I5", "I6"])
    def test_interior_stable(self, ind):
        rng = np.random.default_rng(0)
        x = rng.uniform(-8, 8, (20_000, 2))
        v = indicator(ind, x)
        inside = x[v == 1]
        jitter = rng.uniform(-1e-9, 1e-9, inside.shape)
        # points far from the boundary keep their label under a 1e-9 nudge
        assert np.mean(indicator(ind, inside + jitter)) > 0.999


class TestDensities:
    def test_values(self):
        assert density_f("f1", np.zeros(2)) == pytest.approx(1.0)
        assert density_f("f3", np.array([1.0, 1.0])) == pytest.approx(1.0)
        assert density_f("f2", np.zeros(2)) == pytest.approx(np.exp(-2.0))

    def test_unknown(self):
        with pytest.raises(ValueError):
            density_f("f4", np.zeros(2))


class TestCases:
    def test_case1_value(self):
        t = make_case(1)
        assert t.log_density(np.array([5.0, 0.0]))[0] == pytest.approx(-12.5)

    def test_case8_value(self):
        assert make_case(8).log_density(np.array([3.0, 9.0]))[0] == pytest.approx(-0.2)

    @pytest.mark.parametrize("n", range(1, 10))
    def test_factorisation(self, n):
        t = make_case(n)
        _, ind, row = CASES[n]
        rng = np.random.default_rng(n)
        x = rng.uniform(-6, 6, (2000, 2))
        lp = t.log_density_uncounted(x)
        inside = indicator(ind, x) == 1
        assert np.all(lp[~inside] == -np.inf)
        expected = log_f(row, x[inside])
        assert np.max(np.abs(lp[inside] - expected)) < 1e-12
        assert t.parent.rtf_class is RtfClass.IDENTITY
        assert t.parent.anchor == pytest.approx([0.0, 0.0])

    def test_counter(self):
        t = make_case(2)
        t.log_density(np.zeros((7, 2)))
        t.log_density(np.zeros(2))
        t.log_density_uncounted(np.zeros((5, 2)))
        assert t.evaluations == 8
        t.reset_counter()
        assert t.evaluations == 0

    def test_bad_case(self):
        with pytest.raises(ValueError):
            make_case(10)

    def test_lookup(self):
        assert make_target("rosenbrock-ring").meta["case"] == 7
        assert make_target("case3").name == "gauss-circles"
        assert make_target("gauss-planes-d50").dim == 50
        with pytest.raises(ConfigError):
            make_target("nope")


class TestSections:
    @pytest.mark.parametrize("n", range(1, 10))
    def test_column_mass_matches_quadrature(self, n):
        _, ind, row = CASES[n]
        for x1 in (-3.3, -0.2, 1.7, 4.1):
            exact = sum(float(x2_mass(row, x1, lo, hi)) for lo, hi in x2_sections(ind, np.array(x1)))

            def f(x2):
                x = np.array([x1, x2])
                return density_f(row, x) * indicator(ind, x)

            # break at the section ends and at each density's x2 peak
            pts = [v for lo, hi in x2_sections(ind, np.array(x1)) for v in (lo, hi) if abs(v) < 60]
            pts += [0.0, x1 ** 2]
            brute = integrate.quad(f, -60, 60, points=pts, limit=500, epsabs=1e-13)[0]
            assert exact == pytest.approx(brute, rel=1e-6, abs=1e-12)


class TestGaussPlanes:
    def test_values(self):
        t = make_gauss_planes(3)
        x = np.array([2.0, 0.0, 0.0])
        assert t.log_density(x)[0] == pytest.approx(-2.0)
        assert t.log_density(np.array([0.0, 9.0, 9.0]))[0] == -np.inf

    def test_mode_masses(self):
        right, left = stats.norm.sf(1.25), stats.norm.cdf(-1.75)
        assert right == pytest.approx(0.10565, abs=1e-5)
        assert left == pytest.approx(0.04006, abs=1e-5)
        assert right / (right + left) == pytest.approx(0.725, abs=1e-3)

    def test_too_small(self):
        with pytest.raises(ValueError):
            make_gauss_planes(1)


def _brute_frequencies(spec, x):
    k1, k2 = spec.k0 * x[0], spec.k0 * x[1]
    K = np.array([[k1 + k2, -k2], [-k2, k2]])
    M = np.diag([spec.m1, spec.m2])
    w2 = np.sort(np.linalg.eigvals(np.linalg.solve(M, K)).real)
    return np.sqrt(w2) / (2 * np.pi)


class TestOscillator:
    def test_unit_stiffness(self):
        spec = OscillatorSpec()
        # det(K - w^2 M) as a quadratic in w^2
        a = spec.m1 * spec.m2
        b = -(spec.m1 * spec.k0 + spec.m2 * 2 * spec.k0)
        c = spec.k0 ** 2
        roots = np.sort(np.roots([a, b, c]).real)
        expected = np.sqrt(roots) / (2 * np.pi)
        assert eigenfrequencies(spec, np.array([1.0, 1.0])) == pytest.approx(tuple(expected), rel=1e-12)
        assert eigenfrequencies(spec, np.array([1.0, 1.0])) == pytest.approx(
            tuple(_brute_frequencies(spec, [1.0, 1.0])), rel=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0.1, 10))
    def test_scaling_and_order(self, x1, x2, c):
        spec = OscillatorSpec()
        f1, f2 = eigenfrequencies(spec, np.array([x1, x2]))
        g1, g2 = eigenfrequencies(spec, np.array([c * x1, c * x2]))
        assert f1 < f2
        assert g1 == pytest.approx(np.sqrt(c) * f1, rel=1e-10)
        assert g2 == pytest.approx(np.sqrt(c) * f2, rel=1e-10)
        assert (f1, f2) == pytest.approx(tuple(_brute_frequencies(spec, [x1, x2])), rel=1e-9)

    def test_nonphysical(self):
        with pytest.raises(NonPhysical):
            eigenfrequencies(OscillatorSpec(), np.array([0.0, 1.0]))

    def test_exact_fit(self):
        spec = OscillatorSpec()
        x = np.array([0.9, 1.1])
        f = eigenfrequencies(spec, x)
        fitted = OscillatorSpec(measured=f)
        assert measure_of_fit(fitted, x)[0] == pytest.approx(0.0, abs=1e-28)
        t = make_oscillator(fitted)
        assert t.log_transform(x[None])[0] == pytest.approx(0.0, abs=1e-25)

    def test_sigma(self):
        assert OscillatorSpec().sigma_eps == 1 / 16

    @pytest.mark.parametrize("mode", [1.3, 0.8])
    def test_lognormal_mode_and_sd(self, mode):
        mu, s = lognormal_params(mode, 1.0)
        dist = stats.lognorm(s, scale=np.exp(mu))
        res = optimize.minimize_scalar(lambda v: -dist.pdf(v), bracket=(0.1, 1.0, 3.0), method="golden",
                                       tol=1e-12)
        assert res.x == pytest.approx(mode, abs=1e-6)
        assert dist.std() == pytest.approx(1.0, rel=1e-9)

    def test_prior_and_posterior(self):
        t = make_oscillator()
        assert t.parent.rtf_class is RtfClass.MONOTONE_RADIAL
        assert t.parent.anchor == pytest.approx([1.3, 0.8])
        assert t.log_density(np.array([-0.1, 1.0]))[0] == -np.inf
        x = np.array([[0.634, 0.789], [1.468, 0.315]])
        lp = t.log_density_uncounted(x)
        assert np.all(np.isfinite(lp))
        # the density dips between the two reported modes
        mid = t.log_density_uncounted(x.mean(axis=0)[None])[0]
        assert mid < lp.min() - 0.5

    def test_fallback_rtf(self):
        t = make_oscillator(OscillatorSpec(rtf="none"))
        assert t.parent.rtf_class is RtfClass.NONE

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            OscillatorSpec(m1=-1.0)
