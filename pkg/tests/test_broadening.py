import math

import numpy.testing as npt
import pytest

from cptkit.broadening import (
    BroadeningInputs,
    homogeneous_linewidths,
    phononic_component,
    power_broadening,
    spectral_diffusion,
)
from cptkit.errors import BadInput, NegativeComponent

TWO_PI = 2.0 * math.pi

# chosen so the subtracted components on the D budget total exactly
# 0.351 GHz, leaving a 5.055 GHz phononic remainder
FROZEN = dict(
    tau_se=4.55e-9,
    p_c=0.5e-9,
    p_d=800e-9,
    p_sat=100e-9,
    gamma_c_measured=0.35433666248936807e9,
    gamma_d_measured=5.406e9,
    branch_ratio=2.4,
)


class TestHomogeneous:
    def test_partial_rate_split(self):
        g_c, g_d = homogeneous_linewidths(4.55e-9, 2.4)
        total = 1.0 / (TWO_PI * 4.55e-9)
        npt.assert_allclose(g_c + g_d, total, rtol=1e-12)
        npt.assert_allclose(g_c / g_d, 2.4, rtol=1e-12)
        npt.assert_allclose(g_c, 24.691135321302443e6, rtol=1e-12)

    def test_literal_alternative_is_wider(self):
        g_c_p, g_d_p = homogeneous_linewidths(4.55e-9, 2.4, "partial-rate")
        g_c_l, g_d_l = homogeneous_linewidths(4.55e-9, 2.4, "literal")
        assert g_c_l > g_c_p and g_d_l > g_d_p

    def test_bad_inputs(self):
        with pytest.raises(BadInput):
            homogeneous_linewidths(0.0, 2.4)
        with pytest.raises(BadInput):
            homogeneous_linewidths(4.55e-9, 2.4, "bogus")


class TestPowerBroadening:
    def test_zero_power_is_zero(self):
        assert power_broadening(25e6, 0.0, 1e-7) == 0.0

    def test_saturation_power_gives_sqrt2_minus_1(self):
        npt.assert_allclose(
            power_broadening(25e6, 1e-7, 1e-7), 25e6 * (math.sqrt(2.0) - 1.0),
            rtol=1e-12,
        )

    def test_three_p_sat_equals_hom(self):
        # sqrt(1 + 3) - 1 = 1
        npt.assert_allclose(power_broadening(25e6, 3e-7, 1e-7), 25e6, rtol=1e-12)

    def test_monotone_in_power(self):
        lo = power_broadening(25e6, 1e-7, 1e-7)
        hi = power_broadening(25e6, 5e-7, 1e-7)
        assert hi > lo


class TestSpectralDiffusion:
    def test_budget_subtraction(self):
        npt.assert_allclose(spectral_diffusion(1.0e9, 0.3e9, 0.2e9), 0.5e9, rtol=1e-12)

    def test_negative_budget_raises_with_value(self):
        with pytest.raises(NegativeComponent, match="-1e\\+08|-1\\.0*e\\+08"):
            spectral_diffusion(0.4e9, 0.3e9, 0.2e9)


class TestPhononicComponent:
    def test_frozen_closure(self):
        report = phononic_component(BroadeningInputs(**FROZEN))
        subtracted = report.gamma_d_hom + report.gamma_d_pow + report.gamma_diff
        npt.assert_allclose(subtracted, 0.351e9, rtol=1e-12)
        npt.assert_allclose(report.gamma_d_phon, 5.055e9, rtol=1e-12)
        npt.assert_allclose(report.t_minus_d, 1.0 / (TWO_PI * 5.055e9), rtol=1e-12)
        # components re-assemble the measured linewidth exactly
        total = subtracted + report.gamma_d_phon
        npt.assert_allclose(total, FROZEN["gamma_d_measured"], rtol=1e-15)

    def test_d_power_uses_scaled_saturation(self):
        # the D transition saturates at branch_ratio times the measured
        # saturation power
        report = phononic_component(BroadeningInputs(**FROZEN))
        expect = report.gamma_d_hom * (
            math.sqrt(1.0 + FROZEN["p_d"] / (2.4 * FROZEN["p_sat"])) - 1.0
        )
        npt.assert_allclose(report.gamma_d_pow, expect, rtol=1e-12)

    def test_more_d_power_means_less_phonon_width(self):
        base = phononic_component(BroadeningInputs(**FROZEN))
        hot = phononic_component(BroadeningInputs(**{**FROZEN, "p_d": 1600e-9}))
        assert hot.gamma_d_phon < base.gamma_d_phon

    def test_nonpositive_remainder_raises(self):
        small = {**FROZEN, "gamma_d_measured": 0.3e9}
        with pytest.raises(NegativeComponent):
            phononic_component(BroadeningInputs(**small))

    def test_uncertainty_propagation_linear_term(self):
        inputs = BroadeningInputs(**FROZEN, uncertainties={"gamma_d_measured": 43e6})
        report = phononic_component(inputs)
        # the remainder depends linearly on the measured D width
        npt.assert_allclose(report.uncertainties["gamma_d_phon"], 43e6, rtol=1e-6)
        expect_dt = 43e6 / (TWO_PI * 5.055e9**2)
        npt.assert_allclose(report.uncertainties["t_minus_d"], expect_dt, rtol=1e-6)

    def test_multiple_uncertainties_add_in_quadrature(self):
        one = phononic_component(
            BroadeningInputs(**FROZEN, uncertainties={"gamma_d_measured": 43e6})
        ).uncertainties["gamma_d_phon"]
        other = phononic_component(
            BroadeningInputs(**FROZEN, uncertainties={"gamma_c_measured": 20e6})
        ).uncertainties["gamma_d_phon"]
        both = phononic_component(
            BroadeningInputs(
                **FROZEN,
                uncertainties={"gamma_d_measured": 43e6, "gamma_c_measured": 20e6},
            )
        ).uncertainties["gamma_d_phon"]
        npt.assert_allclose(both, math.hypot(one, other), rtol=1e-6)

    def test_assumption_is_recorded(self):
        report = phononic_component(BroadeningInputs(**FROZEN))
        assert any("unchanged" in a for a in report.assumptions)


class TestInputs:
    def test_rejects_nonpositive_values(self):
        with pytest.raises(BadInput):
            BroadeningInputs(**{**FROZEN, "tau_se": -1.0})

    def test_rejects_unknown_uncertainty_keys(self):
        with pytest.raises(BadInput):
            BroadeningInputs(**FROZEN, uncertainties={"bogus": 1.0})
