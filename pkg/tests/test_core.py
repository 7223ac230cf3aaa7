import numpy as np
import pytest
from scipy.constants import physical_constants

import afcsim as a
from afcsim.core import AbsorptionSpectrum
from afcsim.errors import (
    InvalidRange,
    NegativeField,
    NonPositiveInput,
    NonPositiveTemperature,
    TooManyBins,
)

MU_B = physical_constants["Bohr magneton"][0]
K_B = physical_constants["Boltzmann constant"][0]
H = physical_constants["Planck constant"][0]


class TestMakeGrid:
    def test_basic_binning(self):
        g = a.make_grid(-100e6, 100e6, 0.5e6)
        assert g.n_bins == 400
        assert g.centers[0] == pytest.approx(-99.75e6)
        assert g.centers[-1] == pytest.approx(99.75e6)

    def test_wideband_bin_count(self):
        g = a.make_grid(-3.2e9, 3.2e9, 0.5e6)
        assert g.n_bins == 12800

    def test_uniform_spacing(self):
        g = a.make_grid(-1e9, 1e9, 0.7e6)
        diffs = np.diff(g.centers)
        assert np.max(np.abs(diffs / g.bin_width - 1.0)) < 1e-9

    def test_degenerate_range(self):
        with pytest.raises(InvalidRange):
            a.make_grid(0.0, 0.0, 1e6)

    def test_inverted_range(self):
        with pytest.raises(InvalidRange):
            a.make_grid(1e6, -1e6, 1e5)

    def test_too_many_bins(self):
        with pytest.raises(TooManyBins):
            a.make_grid(0.0, 1e9, 0.01)

    def test_subgrid_alignment(self):
        g = a.make_grid(-100e6, 100e6, 0.5e6)
        sub, sl = g.subgrid(-50e6, 50e6)
        assert np.allclose(sub.centers, g.centers[sl])


class TestLevelStructure:
    def test_zeeman_zero_field(self):
        assert a.zeeman_splitting(0.0, 15.13) == 0.0

    def test_zeeman_3kg(self):
        expected = 15.13 * MU_B * 0.3 / H
        val = a.zeeman_splitting(0.3, 15.13)
        assert val == pytest.approx(expected)
        assert val == pytest.approx(63.5e9, abs=0.1e9)
        assert val > 50e9

    def test_zeeman_800g(self):
        assert a.zeeman_splitting(0.08, 15.13) == pytest.approx(16.9e9, abs=0.1e9)

    def test_zeeman_negative_field(self):
        with pytest.raises(NegativeField):
            a.zeeman_splitting(-0.1, 15.13)

    def test_zeeman_linear_in_field(self):
        vals = [a.zeeman_splitting(b, 15.13) for b in (0.05, 0.1, 0.2)]
        assert vals[1] == pytest.approx(2 * vals[0], rel=1e-12)
        assert vals[2] == pytest.approx(4 * vals[0], rel=1e-12)

    def test_spin_width_static_only(self):
        assert a.spin_inhom_width(0.0, 0.4e9, 14.5e9) == pytest.approx(0.4e9)

    def test_spin_width_3kg(self):
        assert a.spin_inhom_width(0.3, 0.4e9, 14.5e9) == pytest.approx(4.75e9)

    def test_spin_width_600g(self):
        assert a.spin_inhom_width(0.06, 0.4e9, 14.5e9) == pytest.approx(1.27e9)

    def test_spin_width_linear(self):
        base = a.spin_inhom_width(0.0, 0.4e9, 14.5e9)
        for b in (0.01, 0.1, 0.4):
            assert a.spin_inhom_width(b, 0.4e9, 14.5e9) - base == pytest.approx(
                14.5e9 * b, rel=1e-12)

    def test_polarization_zero_field(self):
        assert a.boltzmann_polarization(0.0, 0.7, 15.13) == 0.0

    def test_polarization_3kg(self):
        expected = np.tanh(15.13 * MU_B * 0.3 / (2 * K_B * 0.7))
        val = a.boltzmann_polarization(0.3, 0.7, 15.13)
        assert val == pytest.approx(expected)
        assert val == pytest.approx(0.975, abs=1e-3)

    def test_polarization_350g(self):
        assert a.boltzmann_polarization(0.035, 0.7, 15.13) == pytest.approx(
            0.249, abs=2e-3)

    def test_polarization_bad_temperature(self):
        with pytest.raises(NonPositiveTemperature):
            a.boltzmann_polarization(0.1, 0.0, 15.13)

    def test_polarization_odd_monotone_saturating(self):
        # odd in B (checked through the defining identity), monotone, -> 1
        fields = np.linspace(0.0, 1.0, 40)
        vals = np.array([a.boltzmann_polarization(b, 0.7, 15.13) for b in fields])
        assert np.all(np.diff(vals) > 0)
        assert vals[-1] < 1.0
        assert vals[-1] > 0.999
        x = 15.13 * MU_B * fields / (2 * K_B * 0.7)
        assert np.allclose(vals, -np.tanh(-x))


class TestMaterialParams:
    def test_defaults_valid(self):
        p = a.MaterialParams()
        assert p.g_factor == 15.13
        assert p.t1_opt == 2.1e-3
        assert p.alpha_ff == 1e9

    def test_branching_bounds(self):
        with pytest.raises(NonPositiveInput):
            a.MaterialParams(beta_zeeman=0.7, beta_shf=0.4)

    def test_positive_rates(self):
        with pytest.raises(NonPositiveInput):
            a.MaterialParams(t1_opt=-1.0)

    def test_temperature(self):
        with pytest.raises(NonPositiveTemperature):
            a.MaterialParams(temperature=0.0)


class TestEquilibriumState:
    def test_zero_field_even_split(self):
        g = a.make_grid(-50e6, 50e6, 1e6)
        st = a.init_equilibrium_state(g, a.MaterialParams(b_field=0.0))
        assert np.allclose(st.n_g, 0.5)
        assert np.allclose(st.n_z, 0.5)
        assert np.all(st.n_h == 0)
        assert np.all(st.n_e == 0)

    def test_3kg_polarized(self):
        g = a.make_grid(-50e6, 50e6, 1e6)
        st = a.init_equilibrium_state(g, a.MaterialParams(b_field=0.3))
        assert st.n_g[0] == pytest.approx(0.987, abs=1e-3)
        assert st.n_z[0] == pytest.approx(0.013, abs=1e-3)

    def test_conservation_validated(self):
        g = a.make_grid(-50e6, 50e6, 1e6)
        st = a.init_equilibrium_state(g, a.MaterialParams())
        st.n_g[3] += 1e-6
        with pytest.raises(NonPositiveInput):
            st.validate()

    def test_custom_profile_rescaled(self):
        g = a.make_grid(-50e6, 50e6, 1e6)
        p = a.MaterialParams(peak_od=2.0)
        st = a.init_equilibrium_state(g, p, profile=np.linspace(1.0, 3.0, g.n_bins))
        assert st.weight.max() == pytest.approx(2.0)


class TestAbsorptionSpectrum:
    def test_fresh_flat_spectrum(self):
        p = a.MaterialParams()
        g = a.make_grid(-100e6, 100e6, 0.5e6)
        st = a.init_equilibrium_state(g, p)
        spec = a.absorption_spectrum(st, p)
        level = 2.0 * st.n_g[0]
        assert np.max(np.abs(spec.od - level)) / level < 1e-6

    def test_single_bin_hole_and_antihole(self):
        p = a.MaterialParams()  # 3 kG: anti-hole 63.5 GHz away
        g = a.make_grid(-1.5e9, 1.5e9, 2e6)
        st = a.init_equilibrium_state(g, p)
        ref = a.absorption_spectrum(st, p)
        st2 = st.copy()
        i = g.index_of(0.0)
        moved = st2.n_g[i]
        st2.n_z[i] += moved
        st2.n_g[i] = 0.0
        spec = a.absorption_spectrum(st2, p)
        delta = ref.od - spec.od
        hole_area = delta.sum() * g.bin_width
        expected = st.weight[i] * moved * g.bin_width
        assert hole_area == pytest.approx(expected, rel=0.01)
        # anti-hole mass within +-1.4 GHz of the hole is a deep Gaussian tail
        gained = -delta[delta < 0].sum() * g.bin_width
        assert gained < 1e-3 * expected

    def test_band_hole_width_convolution_oracle(self):
        p = a.MaterialParams(gamma_h_fwhm=1e6)
        g = a.make_grid(-100e6, 100e6, 0.5e6)
        st = a.init_equilibrium_state(g, p)
        band = np.abs(g.centers) <= 12.5e6
        st.n_z[band] += st.n_g[band]
        st.n_g[band] = 0.0
        spec = a.absorption_spectrum(st, p)

        # independent oracle: numerically convolve the 25 MHz top-hat with a
        # unit-area Lorentzian of the homogeneous width on a finer axis
        nu = np.linspace(-100e6, 100e6, 20001)
        hat = (np.abs(nu) <= 12.5e6).astype(float)
        gam = p.gamma_h_fwhm
        dx = nu[1] - nu[0]
        kern = (gam / 2) / (nu ** 2 + (gam / 2) ** 2)
        kern /= kern.sum()
        profile = np.convolve(hat, kern, mode="same")
        half = 0.5 * profile.max()
        above = nu[profile > half]
        fwhm_oracle = above.max() - above.min()

        od = spec.od
        base = od[np.abs(g.centers) > 60e6].mean()
        depth = base - od.min()
        below = g.centers[od < base - depth / 2]
        fwhm_meas = below.max() - below.min() + g.bin_width
        assert fwhm_meas == pytest.approx(fwhm_oracle, rel=0.05)

    def test_total_od_sum_rule_with_antihole_in_window(self):
        p = a.MaterialParams(b_field=0.002)
        g = a.make_grid(-3e9, 3e9, 2e6)
        st = a.init_equilibrium_state(g, p)
        ref = a.absorption_spectrum(st, p)
        st2 = st.copy()
        sel = np.abs(g.centers) < 20e6
        st2.n_z[sel] += 0.5 * st2.n_g[sel]
        st2.n_g[sel] *= 0.5
        spec = a.absorption_spectrum(st2, p)
        tot_ref = ref.od.sum() * g.bin_width
        tot = spec.od.sum() * g.bin_width
        assert abs(tot - tot_ref) / tot_ref < 1e-3

    def test_linearity_in_populations(self):
        p = a.MaterialParams()
        g = a.make_grid(-100e6, 100e6, 1e6)
        st1 = a.init_equilibrium_state(g, p)
        st2 = st1.copy()
        sel = np.abs(g.centers) < 30e6
        st2.n_z[sel] += 0.4 * st2.n_g[sel]
        st2.n_g[sel] *= 0.6
        mix = st1.copy()
        alpha = 0.3
        for name in ("n_g", "n_z", "n_h", "n_e"):
            setattr(mix, name,
                    alpha * getattr(st1, name) + (1 - alpha) * getattr(st2, name))
        s1 = a.absorption_spectrum(st1, p)
        s2 = a.absorption_spectrum(st2, p)
        sm = a.absorption_spectrum(mix, p)
        assert np.max(np.abs(sm.od - (alpha * s1.od + (1 - alpha) * s2.od))) < 1e-9

    def test_excited_population_does_not_absorb(self):
        p = a.MaterialParams()
        g = a.make_grid(-50e6, 50e6, 1e6)
        st = a.init_equilibrium_state(g, p)
        st2 = st.copy()
        i = g.index_of(0.0)
        st2.n_e[i] = st2.n_g[i]
        st2.n_g[i] = 0.0
        spec = a.absorption_spectrum(st2, p)
        ref = a.absorption_spectrum(st, p)
        # the bin turned dark: only the hole shows, no new absorption anywhere
        assert np.all(spec.od <= ref.od + 1e-12)

    def test_csv_serialization(self, tmp_path):
        p = a.MaterialParams()
        g = a.make_grid(-10e6, 10e6, 1e6)
        st = a.init_equilibrium_state(g, p)
        spec = a.absorption_spectrum(st, p)
        path = tmp_path / "spec.csv"
        spec.write_csv(path)
        text = path.read_text()
        assert text.startswith("detuning_hz,od\n")
        assert "\r" not in text
        rows = text.strip().split("\n")[1:]
        assert len(rows) == g.n_bins
        vals = np.array([[float(c) for c in r.split(",")] for r in rows])
        assert np.allclose(vals[:, 0], g.centers)
        assert np.allclose(vals[:, 1], spec.od)

    def test_od_must_be_nonnegative_finite(self):
        g = a.make_grid(-10e6, 10e6, 1e6)
        with pytest.raises(NonPositiveInput):
            AbsorptionSpectrum(grid=g, od=np.full(g.n_bins, -0.1))
        with pytest.raises(NonPositiveInput):
            AbsorptionSpectrum(grid=g, od=np.full(g.n_bins, np.nan))
