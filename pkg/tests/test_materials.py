import math
import warnings

import mpmath as mp
import numpy as np
import pytest

from kerrtpa.errors import (ChannelClosedError, DegenerateFitError, InvalidArgumentError,
                            OutOfRangeError)
from kerrtpa.materials import (FcaDrudeParams, FcaTable, KerrModelParams, PairSourceScenario,
                               PhononBranch, TpaModelParams, TpaVariant, fca_cross_section,
                               fca_lookup, fit_material_constants, heralding_efficiency,
                               kerr_coefficient, nonlinear_fom, pair_source_metrics, tpa_basis,
                               tpa_coefficient, varshni_gap, xi_readings)

mp.mp.dps = 40

TABLE_BETA = {300.0: 0.761, 150.0: 0.492, 50.0: 0.424, 5.5: 0.420}
TABLE_N2 = {300.0: 5.18e-18, 150.0: 4.03e-18, 50.0: 3.86e-18, 5.5: 3.86e-18, 0.0: 3.86e-18}


def tpa_oracle(temp, physical=True, k_ta="0.233", k_to="2.138"):
    """Term-by-term high-precision evaluation, written independently of the package."""
    kb = mp.mpf("8.617333e-5")
    t = mp.mpf(temp)
    eg = mp.mpf("1.156") - mp.mpf("7.021e-4") * t**2 / (t + 1108)
    hw2 = 2 * mp.mpf("0.797")
    total = 0
    for e_k, k in ((212, k_ta), (670, k_to)):
        e = kb * e_k
        nb = 0 if temp == 0 else 1 / (mp.exp(e / (kb * t)) - 1)
        create, annih = (hw2 - eg - e) ** 2, (hw2 - eg + e) ** 2
        if physical:
            total += mp.mpf(k) * (create * (nb + 1) + annih * nb)
        else:
            total += mp.mpf(k) * (create * nb + annih * (nb + 1))
    return float(eg**1.5 * total)


class TestVarshni:
    def test_zero(self):
        assert varshni_gap(0.0) == 1.156

    def test_300(self):
        assert varshni_gap(300.0) == pytest.approx(1.11112, abs=5e-6)

    def test_5_5(self):
        assert varshni_gap(5.5) == pytest.approx(1.15598, abs=5e-6)


class TestTpa:
    def test_physical_300(self):
        assert tpa_coefficient(300.0) == pytest.approx(tpa_oracle(300.0), rel=1e-12)
        assert tpa_coefficient(300.0) == pytest.approx(0.778, abs=5e-4)

    def test_physical_5_5(self):
        assert tpa_coefficient(5.5) == pytest.approx(tpa_oracle(5.5), rel=1e-12)
        assert tpa_coefficient(5.5) == pytest.approx(0.435, abs=5e-4)

    def test_as_printed_300(self):
        p = TpaModelParams(variant=TpaVariant.AS_PRINTED)
        assert tpa_coefficient(300.0, p) == pytest.approx(tpa_oracle(300.0, physical=False), rel=1e-12)
        assert tpa_coefficient(300.0, p) == pytest.approx(1.067, abs=5e-4)

    @pytest.mark.parametrize("variant", list(TpaVariant))
    def test_zero_temperature_annihilation_vanishes(self, variant):
        p = TpaModelParams(variant=variant)
        assert tpa_coefficient(0.0, p) == pytest.approx(tpa_oracle(0.0, variant is TpaVariant.PHYSICAL_BOSE),
                                                        rel=1e-12)

    def test_physical_zero_equals_creation_only(self):
        # at T=0 only the phonon-creation term with (n_B + 1) = 1 survives
        eg = 1.156
        val = sum(k * (2 * 0.797 - eg - e * 8.617333e-5) ** 2 for e, k in ((212, 0.233), (670, 2.138)))
        assert tpa_coefficient(0.0) == pytest.approx(eg**1.5 * val, rel=1e-12)

    def test_channel_closed(self):
        p = TpaModelParams(photon_energy=0.5)
        with pytest.raises(ChannelClosedError):
            tpa_coefficient(300.0, p)

    def test_negative_temperature(self):
        with pytest.raises(InvalidArgumentError):
            tpa_coefficient(-1.0)

    def test_monotone_in_temperature(self):
        vals = [tpa_coefficient(t) for t in np.linspace(0, 400, 41)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_table_residual_documented(self):
        # a few percent above the table at both ends
        for t in (300.0, 5.5):
            r = tpa_coefficient(t) / TABLE_BETA[t] - 1
            assert 0.01 < r < 0.05


class TestKerr:
    @pytest.mark.parametrize("temp", sorted(TABLE_N2))
    def test_table(self, temp):
        assert kerr_coefficient(temp) == pytest.approx(TABLE_N2[temp], rel=5e-3)

    def test_zero_exact(self):
        assert kerr_coefficient(0.0) == 3.86e-18

    def test_sum_form_matches_coth(self):
        p = KerrModelParams()
        for t in (1.0, 5.5, 77.0, 300.0, 1000.0):
            x = 576.0 / t
            sum_form = 3.86e-18 * (1 / math.expm1(x) + 1 / (-math.expm1(-x)))
            assert kerr_coefficient(t, p) == pytest.approx(sum_form, rel=1e-13)

    def test_strictly_increasing(self):
        vals = [kerr_coefficient(t) for t in np.linspace(20, 500, 50)]
        assert np.all(np.diff(vals) > 0)


class TestHeadlineReductions:
    def test_tpa_reduction(self):
        assert 1 - TABLE_BETA[5.5] / TABLE_BETA[300.0] == pytest.approx(0.448, abs=5e-4)

    def test_kerr_reduction(self):
        assert 1 - TABLE_N2[5.5] / TABLE_N2[300.0] == pytest.approx(0.255, abs=5e-4)


class TestFca:
    def test_drude_matches_table(self):
        s = fca_cross_section(FcaDrudeParams(0.03, 0.01))
        assert s == pytest.approx(3.62e-22, rel=5e-3)
        assert abs(s / 3.7e-22 - 1) < 0.05

    def test_doubling_mobilities_halves(self):
        a = fca_cross_section(FcaDrudeParams(0.03, 0.01))
        b = fca_cross_section(FcaDrudeParams(0.06, 0.02))
        assert b == pytest.approx(a / 2, rel=1e-14)

    def test_infinite_hole_mobility(self):
        p = FcaDrudeParams(0.03, 1e30)
        q_e, eps0, c, m0 = 1.602177e-19, 8.854188e-12, 2.997925e8, 9.109384e-31
        only_e = q_e**3 * p.wavelength**2 / (4 * math.pi**2 * eps0 * c**3 * 3.48) / ((0.3 * m0) ** 2 * 0.03)
        assert fca_cross_section(p) == pytest.approx(only_e, rel=1e-12)

    def test_lookup_points(self):
        assert fca_lookup(300.0) == pytest.approx(3.7e-22)
        assert fca_lookup(0.0) == 0.0
        assert fca_lookup(225.0) == pytest.approx(3.4e-22, rel=1e-12)

    def test_out_of_range(self):
        with pytest.raises(OutOfRangeError):
            fca_lookup(301.0)

    def test_table_validation(self):
        with pytest.raises(InvalidArgumentError):
            FcaTable(((10.0, 1e-22), (5.0, 1e-22)))


class TestFomAndHerald:
    def test_fom_table_values(self):
        assert nonlinear_fom(5.18e-18, 0.761e-11, 1.551e-6) == pytest.approx(0.44, abs=0.01)
        assert nonlinear_fom(3.86e-18, 0.420e-11, 1.551e-6) == pytest.approx(0.59, abs=0.01)

    def test_fom_linear_in_n2(self):
        assert nonlinear_fom(2e-18, 1e-11, 1.5e-6) == pytest.approx(2 * nonlinear_fom(1e-18, 1e-11, 1.5e-6))

    def test_fom_infinite(self):
        assert nonlinear_fom(1e-18, 0.0, 1.5e-6) == math.inf

    def test_fom_improves_on_cooling(self):
        lam = 1551.8e-9
        cold = nonlinear_fom(kerr_coefficient(0.0), tpa_coefficient(0.0) * 1e-11, lam)
        warm = nonlinear_fom(kerr_coefficient(300.0), tpa_coefficient(300.0) * 1e-11, lam)
        assert cold > warm

    @pytest.mark.parametrize("fom,expected", [(0.44, 0.74), (0.59, 0.79)])
    def test_heralding_examples(self, fom, expected):
        m = pair_source_metrics(PairSourceScenario(0.05, 0.9, fom))
        assert m.heralding == pytest.approx(expected, abs=0.01)

    def test_heralding_high_fom(self):
        m = pair_source_metrics(PairSourceScenario(0.05, 0.9, 4.4))
        assert m.heralding == pytest.approx(0.97, abs=0.005)

    def test_lossless_limit(self):
        assert heralding_efficiency(0.0) == 1.0
        assert pair_source_metrics(PairSourceScenario(0.05, 0.9, math.inf)).heralding == 1.0

    def test_gamma_lp_inverts_pair_probability(self):
        s = PairSourceScenario(0.05, 0.9, 0.44)
        glp = pair_source_metrics(s).gamma_lp
        # p_pair = (gamma L P)^2 / 2 * sqrt((1 - P^2) / P)
        assert glp**2 / 2 * math.sqrt((1 - 0.81) / 0.9) == pytest.approx(0.05, rel=1e-12)

    def test_readings(self):
        r = xi_readings(PairSourceScenario(0.05, 0.9, 0.44))
        assert r["squared"] == pytest.approx(pair_source_metrics(PairSourceScenario(0.05, 0.9, 0.44)).xi)
        assert r["as_printed"] > r["squared"]

    def test_monotone_in_fom(self):
        vals = [pair_source_metrics(PairSourceScenario(0.05, 0.9, f)).heralding for f in (0.1, 0.44, 1, 4.4, 40)]
        assert np.all(np.diff(vals) > 0)

    @pytest.mark.parametrize("purity", [0.0, 1.0, 1.2])
    def test_purity_range(self, purity):
        with pytest.raises(InvalidArgumentError):
            PairSourceScenario(0.05, purity, 0.44)

    def test_strong_pump_warns(self):
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            PairSourceScenario(0.5, 0.9, 0.44)
        assert w


class TestMaterialFit:
    def test_synthetic_tpa_recovery(self):
        truth = TpaModelParams(branches=(PhononBranch.from_kelvin("TA", 212.0, 0.5),
                                         PhononBranch.from_kelvin("TO", 670.0, 1.7)))
        temps = np.linspace(2, 350, 20)
        pts = [(t, tpa_coefficient(t, truth)) for t in temps]
        fit = fit_material_constants(pts, "tpa")
        amps = fit.params.amplitudes()
        assert amps["TA"] == pytest.approx(0.5, rel=1e-6)
        assert amps["TO"] == pytest.approx(1.7, rel=1e-6)

    def test_refit_to_table_below_one_percent(self):
        fit = fit_material_constants(TABLE_BETA.items(), "tpa")
        assert fit.rms_relative < 0.01
        printed = np.array([tpa_coefficient(t) for t in fit.temperatures])
        assert fit.rms_relative < np.sqrt(np.mean((printed / fit.values - 1) ** 2))

    def test_kerr_fit_on_table(self):
        fit = fit_material_constants(TABLE_N2.items(), "kerr")
        assert fit.params.n2_0 == pytest.approx(3.86e-18, rel=0.02)
        assert fit.params.e_ph_emp == pytest.approx(576.0, rel=0.02)

    def test_frozen_branch(self):
        pts = [(t, tpa_coefficient(t)) for t in (50.0, 150.0, 300.0)]
        fit = fit_material_constants(pts, "tpa", freeze={"TO": 2.138})
        assert fit.params.amplitudes()["TA"] == pytest.approx(0.233, rel=1e-9)
        assert fit.params.amplitudes()["TO"] == 2.138

    def test_kerr_degenerate(self):
        with pytest.raises(DegenerateFitError):
            fit_material_constants([(0.0, 1e-18), (0.0, 1.1e-18)], "kerr")

    def test_tpa_basis_linear(self):
        b = tpa_basis(300.0)
        assert 0.233 * b["TA"] + 2.138 * b["TO"] == pytest.approx(tpa_coefficient(300.0), rel=1e-14)
