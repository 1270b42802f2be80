import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from gptail.core import InvalidParameterError
from gptail.generators import (
    Gaussian,
    GeneratorSpec,
    IndepGumbel,
    IndepLogGamma,
    IndepReverseExp,
    IndepReverseGumbel,
    StructuredExp,
)

ALL_INDEP = [
    IndepGumbel([1.0, 2.0], [0.0, 0.5]),
    IndepReverseGumbel([1.5, 0.8], [0.0, -0.3]),
    IndepReverseExp([1.0, 2.0], [0.0, 0.4]),
    IndepLogGamma([2.0, 0.7]),
]


class TestLogDensity:
    def test_standard_gumbel_at_zero(self):
        spec = IndepGumbel([1.0], [0.0])
        assert spec.log_density(np.zeros(1)) == pytest.approx(-1.0)

    def test_standard_normal_at_zero(self):
        spec = Gaussian([0.0, 0.0], np.eye(2))
        assert spec.log_density(np.zeros(2)) == pytest.approx(-np.log(2 * np.pi))

    def test_structured_hand_trace(self):
        # density of (log S_1, log S_2) with unit-mean increments at (log 1, log 2)
        spec = StructuredExp([1.0, 1.0])
        got = spec.log_density(np.array([0.0, np.log(2.0)]))
        assert got == pytest.approx(np.log(2.0) - 2.0)

    def test_structured_off_order(self):
        spec = StructuredExp([1.0, 1.0])
        assert spec.log_density(np.array([1.0, 0.5])) == -np.inf

    def test_reverse_exp_support(self):
        spec = IndepReverseExp([1.0, 1.0], [0.0, 0.0])
        assert spec.log_density(np.array([-1.0, 0.5])) == -np.inf
        assert np.isfinite(spec.log_density(np.array([-1.0, -0.5])))

    def test_density_integrates_to_one(self):
        one = IndepLogGamma([1.7])
        grid = np.linspace(-40, 10, 20001)
        vals = np.exp(one.log_density(grid[:, None]))
        assert np.trapezoid(vals, grid) == pytest.approx(1.0, abs=1e-6)


class TestComponentCdf:
    def test_gumbel_at_mode(self):
        spec = IndepGumbel([1.0], [0.0])
        assert spec.component_cdf(0, 0.0) == pytest.approx(np.exp(-1.0))

    def test_reverse_exp_endpoint(self):
        spec = IndepReverseExp([1.0], [0.0])
        assert spec.component_cdf(0, 0.0) == pytest.approx(1.0)

    def test_log_gamma_value(self):
        spec = IndepLogGamma([2.0])
        # P(Gamma(2,1) <= 1) = 1 - 2 exp(-1)
        assert spec.component_cdf(0, 0.0) == pytest.approx(1 - 2 * np.exp(-1), rel=1e-12)

    def test_unavailable_for_joint_families(self):
        with pytest.raises(InvalidParameterError):
            Gaussian([0.0], [[1.0]]).component_cdf(0, 0.0)
        with pytest.raises(InvalidParameterError):
            StructuredExp([1.0, 1.0]).component_cdf(0, 0.0)

    @pytest.mark.parametrize("spec", ALL_INDEP, ids=lambda s: s.family)
    def test_cdf_derivative_matches_density(self, spec):
        # numerically differentiating the component CDF recovers the
        # marginal density factor of the (independent) joint density
        grid = np.linspace(-3.0, 2.0, 41)
        h = 1e-5
        for j in range(spec.dim):
            f_num = (spec.component_cdf(j, grid + h) - spec.component_cdf(j, grid - h)) / (2 * h)
            params = _params(spec)
            sub = type(spec)(**{k: (v[j : j + 1] if np.ndim(v) else v)
                                for k, v in params.items()})
            f_ana = np.exp(sub.log_density(grid[:, None]))
            mask = np.isfinite(f_ana) & (f_ana > 1e-10)
            assert_allclose(f_num[mask], f_ana[mask], atol=1e-6, rtol=1e-6)

    @pytest.mark.parametrize("spec", ALL_INDEP, ids=lambda s: s.family)
    def test_sampling_matches_cdf(self, spec):
        rng = np.random.default_rng(42)
        draws = spec.sample(100_000, rng)
        for j in range(spec.dim):
            ks = stats.kstest(draws[:, j], lambda v, j=j: spec.component_cdf(j, v))
            assert ks.statistic < 0.01


def _params(spec):
    if isinstance(spec, IndepLogGamma):
        return {"alpha": np.asarray(spec.alpha)}
    return {"alpha": np.asarray(spec.alpha), "beta": np.asarray(spec.beta),
            "enforce_identifiability": False}


class TestSampling:
    def test_gumbel_mean_euler_mascheroni(self):
        rng = np.random.default_rng(1)
        spec = IndepGumbel([1.0], [0.0])
        x = spec.sample(100_000, rng)[:, 0]
        se = x.std(ddof=1) / np.sqrt(x.size)
        assert abs(x.mean() - np.euler_gamma) < 3 * se

    def test_gaussian_covariance(self):
        rng = np.random.default_rng(2)
        spec = Gaussian([0.0, 0.0], np.eye(2))
        x = spec.sample(100_000, rng)
        cov = np.cov(x, rowvar=False)
        assert_allclose(cov, np.eye(2), atol=3 * 2 / np.sqrt(x.shape[0]) + 0.01)

    def test_structured_sum_of_exponentials(self):
        rng = np.random.default_rng(3)
        spec = StructuredExp([1.0, 1.0, 1.0])
        s3 = np.exp(spec.sample(100_000, rng)[:, 2])
        se = s3.std(ddof=1) / np.sqrt(s3.size)
        assert abs(s3.mean() - 3.0) < 3 * se

    def test_structured_ordering(self):
        rng = np.random.default_rng(4)
        spec = StructuredExp([1.0, 0.5, 2.0])
        r = spec.sample(5000, rng)
        assert np.all(np.diff(r, axis=1) > 0)


class TestExpMoment:
    def test_gumbel_root_pi(self):
        spec = IndepGumbel([2.0], [0.0])
        assert spec.exp_moment(0) == pytest.approx(np.sqrt(np.pi), rel=1e-12)

    def test_gumbel_infinite_at_unit_rate(self):
        assert IndepGumbel([1.0], [0.0]).exp_moment(0) == np.inf
        assert IndepGumbel([0.7], [0.0]).exp_moment(0) == np.inf

    def test_log_gamma_is_alpha(self):
        assert IndepLogGamma([3.0]).exp_moment(0) == pytest.approx(3.0)

    def test_structured_cumulative_means(self):
        spec = StructuredExp([1.0, 0.84, 1.08])
        assert_allclose(spec.exp_moments(), np.cumsum([1.0, 0.84, 1.08]))

    @pytest.mark.parametrize(
        "spec",
        [IndepGumbel([2.5, 3.0], [0.0, 0.4]),
         IndepReverseGumbel([1.2, 0.7], [0.0, 0.2]),
         IndepReverseExp([1.0, 2.0], [0.0, 0.4]),
         IndepLogGamma([2.0, 0.7]),
         Gaussian([0.0, 0.3], [[1.0, 0.5], [0.5, 1.0]])],
        ids=lambda s: s.family,
    )
    def test_matches_monte_carlo(self, spec):
        rng = np.random.default_rng(11)
        draws = np.exp(spec.sample(200_000, rng))
        for j in range(spec.dim):
            se = draws[:, j].std(ddof=1) / np.sqrt(draws.shape[0])
            assert abs(draws[:, j].mean() - spec.exp_moment(j)) < 3 * se


class TestIdentifiability:
    def test_location_families_pin_first_beta(self):
        with pytest.raises(InvalidParameterError):
            IndepGumbel([1.0, 1.0], [0.5, 0.0])
        with pytest.raises(InvalidParameterError):
            IndepReverseExp([1.0, 1.0], [0.5, 0.0])

    def test_structured_pins_first_mean(self):
        with pytest.raises(InvalidParameterError):
            StructuredExp([2.0, 1.0])

    def test_escape_hatch_for_internal_use(self):
        spec = IndepGumbel([1.0, 1.0], [0.5, 0.0], enforce_identifiability=False)
        assert spec.beta[0] == 0.5


class TestSerialization:
    @pytest.mark.parametrize(
        "spec",
        ALL_INDEP + [Gaussian([0.0, 0.3], [[1.0, 0.5], [0.5, 1.0]]),
                     StructuredExp([1.0, 0.84, 1.08])],
        ids=lambda s: s.family,
    )
    def test_roundtrip(self, spec):
        back = GeneratorSpec.from_dict(spec.to_dict())
        assert back == spec

    def test_unknown_family(self):
        with pytest.raises(InvalidParameterError):
            GeneratorSpec.from_dict({"family": "nope", "params": {}})
