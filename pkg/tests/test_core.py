import numpy as np
import pytest
from numpy.testing import assert_allclose

from gptail.core import (
    ExceedanceSet,
    GpModel,
    InvalidParameterError,
    MarginalParams,
    marginal_conditional_survival,
    observed_from_standard,
    standard_from_observed,
)
from gptail.generators import IndepGumbel, StructuredExp


class TestMarginalParams:
    def test_sigma_positive_required(self):
        with pytest.raises(InvalidParameterError):
            MarginalParams([1.0, 0.0], [0.1, 0.1])

    def test_lower_endpoint(self):
        m = MarginalParams([2.0, 1.0, 1.0], [0.5, 0.0, -0.3])
        assert_allclose(m.lower_endpoint(), [-4.0, -np.inf, -np.inf])


class TestConditionalSurvival:
    def test_at_origin(self):
        m = MarginalParams([1.0], [0.0])
        assert marginal_conditional_survival(m, 0, 0.0) == 1.0

    def test_unit_pareto_case(self):
        m = MarginalParams([1.0], [1.0])
        assert marginal_conditional_survival(m, 0, 1.0) == pytest.approx(0.5)

    def test_fitted_scale_case(self):
        # (1 + 0.43 * 0.05 / 0.020)^(-1/0.43), checked against direct evaluation
        m = MarginalParams([0.020], [0.43])
        want = (1 + 0.43 * 0.05 / 0.020) ** (-1 / 0.43)
        assert marginal_conditional_survival(m, 0, 0.05) == pytest.approx(want, rel=1e-12)

    def test_monotone_and_endpoint(self):
        m = MarginalParams([1.0], [-0.5])
        xs = np.linspace(0, 3, 40)
        vals = [marginal_conditional_survival(m, 0, x) for x in xs]
        assert np.all(np.diff(vals) <= 1e-15)
        assert marginal_conditional_survival(m, 0, 2.0) == 0.0  # at -sigma/gamma
        assert marginal_conditional_survival(m, 0, 2.5) == 0.0

    def test_rejects_bad_input(self):
        m = MarginalParams([1.0], [0.0])
        with pytest.raises(InvalidParameterError):
            marginal_conditional_survival(m, 0, np.nan)
        with pytest.raises(InvalidParameterError):
            marginal_conditional_survival(m, 0, -0.5)


class TestStandardTransform:
    def test_identity_at_origin(self):
        m = MarginalParams([2.0, 0.5], [0.3, -0.2])
        assert_allclose(observed_from_standard(np.zeros(2), m), np.zeros(2))

    def test_gamma_zero_is_linear(self):
        m = MarginalParams([1.0], [0.0])
        assert observed_from_standard(np.array([1.0]), m)[0] == pytest.approx(1.0)

    def test_known_value(self):
        m = MarginalParams([2.0], [0.5])
        got = observed_from_standard(np.array([1.0]), m)[0]
        assert got == pytest.approx(2 * (np.exp(0.5) - 1) / 0.5, rel=1e-12)
        back = standard_from_observed(np.array([got]), m)[0]
        assert back == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("gamma", [-0.4, 0.0, 0.43, 1.0])
    def test_roundtrip_grid(self, gamma):
        m = MarginalParams([0.7], [gamma])
        x0 = np.linspace(-5, 8, 53)[:, None]
        x = observed_from_standard(x0, m)
        back = standard_from_observed(x, m)
        assert_allclose(back, x0, atol=1e-10)

    def test_strictly_increasing(self):
        m = MarginalParams([1.3], [0.6])
        x0 = np.linspace(-4, 4, 100)[:, None]
        x = observed_from_standard(x0, m).ravel()
        assert np.all(np.diff(x) > 0)


class TestExceedanceSet:
    def test_rejects_non_exceedance(self):
        with pytest.raises(InvalidParameterError):
            ExceedanceSet([[-0.1, -0.2]], np.zeros(2), np.zeros(2))

    def test_rejects_positive_censor_floor(self):
        with pytest.raises(InvalidParameterError):
            ExceedanceSet([[1.0, 1.0]], np.zeros(2), [0.1, 0.0])

    def test_rows_immutable(self):
        es = ExceedanceSet([[1.0, -0.2]], np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError):
            es.rows[0, 0] = 5.0


class TestGpModel:
    def test_r_form_needs_common_margins(self):
        gen = StructuredExp([1.0, 0.8])
        with pytest.raises(InvalidParameterError):
            GpModel(gen, MarginalParams([1.0, 2.0], [0.0, 0.0]), "R")
        GpModel(gen, MarginalParams([2.0, 2.0], [0.0, 0.0]), "R")

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidParameterError):
            GpModel(IndepGumbel([1.0]), MarginalParams([1.0, 1.0], [0.0, 0.0]), "T")
