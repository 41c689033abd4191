import math

import numpy as np
import pytest

import oracles
from ghdag.ghd import (
    CmrSpec,
    GhdError,
    GhdFamily,
    NegativeMassError,
    SeriesDivergenceError,
    SingularParameterError,
    cmr_coefficient,
    cmr_function,
    falling_factorial,
    ghd_pmf,
    hypergeometric_terms,
    pfq,
    pmf_table,
    rising_factorial,
    stirling_first,
)


class TestFamilies:
    def test_named_forms(self):
        assert GhdFamily.poisson().upper == () and GhdFamily.poisson().lower == ()
        hp = GhdFamily.hyper_poisson(2.0)
        assert (hp.upper, hp.lower) == ((1.0,), (2.0,))
        nb = GhdFamily.negative_binomial(1.5)
        assert (nb.upper, nb.lower) == ((1.5,), ())
        b = GhdFamily.binomial(3)
        assert (b.upper, b.lower) == ((-3.0,), ())
        assert b.binomial_trials == 3 and b.terminates

    def test_label_round_trip(self):
        for fam in (GhdFamily.poisson(), GhdFamily.hyper_poisson(2), GhdFamily.negative_binomial(0.5), GhdFamily.binomial(5)):
            assert GhdFamily.parse(fam.label) == fam

    @pytest.mark.parametrize("text", ["binomial:0", "hyperpoisson:-1", "negbinomial:0", "gamma:2", "binomial:x", ""])
    def test_parse_rejects(self, text):
        with pytest.raises(GhdError):
            GhdFamily.parse(text)

    def test_lower_parameter_validation(self):
        with pytest.raises(GhdError):
            GhdFamily((1.0,), (0.0,))
        with pytest.raises(GhdError):
            GhdFamily((1.0,), (-2.0,))
        GhdFamily((1.0,), (-0.5,))  # non-integer negatives are fine

    def test_mean(self):
        assert GhdFamily.hyper_poisson(2).mean(3.0) == pytest.approx(1.5)
        assert GhdFamily.binomial(3).mean(-0.4) == pytest.approx(1.2)


class TestFactorials:
    def test_rising_examples(self):
        assert rising_factorial(2, 3) == 24
        assert rising_factorial(5.5, 0) == 1
        assert rising_factorial(-3, 4) == 0

    def test_falling_examples(self):
        assert falling_factorial(4, 2) == 12
        assert falling_factorial(3, 4) == 0
        assert falling_factorial(7, 0) == 1

    def test_negative_order_rejected(self):
        with pytest.raises(ValueError):
            rising_factorial(1, -1)
        with pytest.raises(ValueError):
            falling_factorial(1, -1)

    def test_stirling_examples(self):
        assert stirling_first(2, 1) == -1
        assert stirling_first(4, 2) == 11
        assert stirling_first(3, 3) == 1
        assert stirling_first(0, 0) == 1
        assert stirling_first(5, 0) == 0

    @pytest.mark.parametrize("r", range(0, 9))
    def test_stirling_rows_match_expansion(self, r):
        assert [stirling_first(r, k) for k in range(r + 1)] == oracles.falling_poly_coefficients(r)

    def test_stirling_rejects_k_above_r(self):
        with pytest.raises(ValueError):
            stirling_first(2, 3)


class TestSeries:
    def test_frozen_values(self):
        assert pfq(GhdFamily.poisson(), 1.0) == pytest.approx(math.e, rel=1e-14)
        # binomial(3) at p = 0.5 evaluated at s = 0: argument theta (s - 1) = 0.5
        assert pfq(GhdFamily.binomial(3), 0.5) == pytest.approx(0.125, abs=1e-15)
        assert pfq(GhdFamily.negative_binomial(1), 0.5) == pytest.approx(2.0, rel=1e-12)

    def test_terminating_series_has_exact_terms(self):
        terms = list(hypergeometric_terms((-3.0,), (), 0.5, tolerance=1.0))
        assert len(terms) == 4
        assert math.fsum(terms) == pytest.approx(0.125)

    def test_divergence(self):
        with pytest.raises(SeriesDivergenceError):
            pfq(GhdFamily.negative_binomial(1), 1.5, max_terms=200)

    def test_hyper_poisson_series_matches_mpmath(self):
        import mpmath

        fam = GhdFamily.hyper_poisson(2.5)
        for z in (0.3, 4.0, 12.0):
            assert pfq(fam, z) == pytest.approx(float(mpmath.hyp1f1(1, 2.5, z)), rel=1e-12)


class TestPmf:
    def test_frozen_examples(self):
        assert ghd_pmf(GhdFamily.poisson(), 2.0, 0) == pytest.approx(math.exp(-2), rel=1e-14)
        assert ghd_pmf(GhdFamily.binomial(3), -0.5, 2) == pytest.approx(0.375, rel=1e-14)
        # coefficient of 1F1[1; 2; theta (s - 1)]: (1/2) e^-1 1F1[2; 3; 1] = 1 - 2/e
        assert ghd_pmf(GhdFamily.hyper_poisson(2), 1.0, 1) == pytest.approx(1 - 2 / math.e, rel=1e-12)

    @pytest.mark.parametrize(
        "kind,param,theta",
        [("poisson", None, 0.5), ("poisson", None, 7.0), ("binomial", 5, -0.3), ("binomial", 3, -0.7),
         ("negbinomial", 2.0, 0.6), ("negbinomial", 0.7, 3.0)],
    )
    def test_named_families_match_scipy(self, kind, param, theta):
        fam = {"poisson": lambda: GhdFamily.poisson(), "binomial": lambda: GhdFamily.binomial(param),
               "negbinomial": lambda: GhdFamily.negative_binomial(param)}[kind]()
        table = pmf_table(fam, theta)
        x = np.arange(len(table))
        np.testing.assert_allclose(table, oracles.scipy_pmf(kind, param, theta, x), rtol=1e-10, atol=1e-300)

    @pytest.mark.parametrize("b,theta", [(2.0, 1.0), (2.0, 3.0), (0.5, 0.3), (4.0, 6.0)])
    def test_hyper_poisson_matches_pgf_expansion(self, b, theta):
        fam = GhdFamily.hyper_poisson(b)
        for x in range(12):
            assert ghd_pmf(fam, theta, x) == pytest.approx(oracles.pgf_coefficient_pmf([1], [b], theta, x), rel=1e-9, abs=1e-300)

    def test_table_reaches_mass(self):
        for fam, theta in ((GhdFamily.poisson(), 30.0), (GhdFamily.hyper_poisson(2), 5.0), (GhdFamily.binomial(4), -0.9)):
            assert math.fsum(pmf_table(fam, theta)) == pytest.approx(1.0, abs=1e-11)

    def test_binomial_support(self):
        assert len(pmf_table(GhdFamily.binomial(3), -0.5)) == 4
        assert ghd_pmf(GhdFamily.binomial(3), -0.5, 4) == 0.0
        assert ghd_pmf(GhdFamily.poisson(), 1.0, -1) == 0.0

    def test_negative_mass_detected(self):
        # binomial parameters with theta > 0 are not a distribution
        with pytest.raises(NegativeMassError):
            pmf_table(GhdFamily.binomial(3), 0.5)
        # hyper-Poisson with b < 1 stops being a distribution for large theta
        assert oracles.pgf_coefficient_pmf([1], [0.5], 2.0, 0) < 0
        with pytest.raises(NegativeMassError):
            ghd_pmf(GhdFamily.hyper_poisson(0.5), 2.0, 0)


class TestCmr:
    def test_frozen_coefficients(self):
        assert cmr_coefficient(GhdFamily.poisson(), 3) == 1.0
        assert cmr_coefficient(GhdFamily.binomial(3), 4) == 0.0
        assert cmr_coefficient(GhdFamily.hyper_poisson(2), 2) == pytest.approx(4 / 3)
        assert cmr_coefficient(GhdFamily.negative_binomial(2), 2) == pytest.approx(1.5)

    def test_cmr_function_examples(self):
        assert cmr_function(CmrSpec.of(GhdFamily.poisson(), 2), 3.0) == 9.0
        assert cmr_function(CmrSpec.of(GhdFamily.negative_binomial(2), 2), 1.0) == pytest.approx(1.5)
        assert cmr_function(CmrSpec.of(GhdFamily.hyper_poisson(2), 2), 2.0) == pytest.approx(16 / 3)

    def test_brute_force_hyper_poisson(self):
        # E((X)_2) / E(X)^2 over the oracle pmf at theta = 1.5
        pmf = [oracles.pgf_coefficient_pmf([1], [2], 1.5, x) for x in range(80)]
        m1 = sum(x * p for x, p in enumerate(pmf))
        f2 = sum(x * (x - 1) * p for x, p in enumerate(pmf))
        assert f2 / m1**2 == pytest.approx(4 / 3, rel=1e-10)

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            cmr_coefficient(GhdFamily.poisson(), 1)

    def test_singular(self):
        with pytest.raises(SingularParameterError):
            cmr_coefficient(GhdFamily((0.0,), ()), 2)
        # (b + r - 1)_r only vanishes at nonpositive integer b, which the family rejects
        assert cmr_coefficient(GhdFamily((1.0,), (-0.5,)), 3) != 0
