"""Periodogram normalization, spectral model fits, and floor subtraction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linemet import (EdgeDetectParams, EdgeSet, PalasantzasParams, PsdConfig,
                     PsdCurve, compute_psd, fit_palasantzas, palasantzas_model,
                     psd0_for_sigma, roughness_report, sample_edge_trace,
                     unbias)

DX = 0.8


def model_curve(psd0, xi, hurst, floor, length=1024, pixel_size=DX):
    freqs = np.arange(1, length // 2 + 1) / (length * pixel_size)
    density = palasantzas_model(freqs, psd0, xi, hurst=hurst) + floor
    return PsdCurve(frequencies=freqs, density=density, n_traces_averaged=1,
                    trace_length=length, pixel_size=pixel_size)


class TestPeriodogram:
    def test_pure_tone_lands_in_its_own_bin(self):
        length, amplitude, k = 512, 0.7, 31
        tone = amplitude * np.sin(2.0 * np.pi * k * np.arange(length) / length)
        curve = compute_psd(tone, DX)
        expected = (amplitude ** 2 / 2.0) / curve.df
        assert curve.density[k - 1] == pytest.approx(expected, rel=1e-12)
        assert np.delete(curve.density, k - 1).max() < 1e-20 * expected

    def test_rectangular_sum_reproduces_detrended_variance(self):
        rng = np.random.default_rng(7)
        trace = rng.normal(0.0, 2.0, size=256) + 5.0
        curve = compute_psd(trace, DX)
        area = curve.density.sum() * curve.df
        assert area == pytest.approx(trace.var(), rel=1e-12)

    def test_frequency_grid_runs_from_1_over_l_to_nyquist(self):
        curve = compute_psd(np.random.default_rng(0).normal(size=128), DX)
        assert curve.frequencies[0] == pytest.approx(1.0 / (128 * DX))
        assert curve.frequencies[-1] == pytest.approx(0.5 / DX)
        assert curve.df == pytest.approx(1.0 / (128 * DX))

    def test_density_scales_with_amplitude_squared(self):
        tone = np.sin(2.0 * np.pi * 9 * np.arange(256) / 256)
        one = compute_psd(tone, DX)
        three = compute_psd(3.0 * tone, DX)
        assert three.density[8] == pytest.approx(9.0 * one.density[8],
                                                 rel=1e-12)

    def test_stack_average_is_mean_of_single_trace_spectra(self):
        rng = np.random.default_rng(11)
        stack = rng.normal(size=(5, 128))
        pooled = compute_psd(stack, DX)
        singles = np.array([compute_psd(t, DX).density for t in stack])
        assert pooled.n_traces_averaged == 5
        assert np.allclose(pooled.density, singles.mean(axis=0), rtol=1e-12)

    @pytest.mark.parametrize("window", ["none", "hann"])
    def test_white_noise_floor_is_2_sigma_squared_delta(self, window):
        rng = np.random.default_rng(99)
        traces = rng.normal(0.0, 1.0, size=(400, 512))
        curve = compute_psd(traces, DX, PsdConfig(window=window))
        floor = curve.density[:-1].mean()
        assert abs(floor - 1.6) < 0.02 * 1.6

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), half=st.integers(32, 512),
           log_scale=st.floats(-2.0, 2.0))
    def test_parseval_holds_for_arbitrary_traces(self, seed, half, log_scale):
        rng = np.random.default_rng(seed)
        trace = rng.normal(0.0, 10.0 ** log_scale, size=2 * half)
        curve = compute_psd(trace, DX)
        area = curve.density.sum() * curve.df
        assert area == pytest.approx(trace.var(), rel=1e-9)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            compute_psd(np.zeros(65), DX)
        with pytest.raises(ValueError):
            compute_psd(np.zeros(32), DX)
        with pytest.raises(ValueError):
            compute_psd(np.full(128, np.nan), DX)
        with pytest.raises(ValueError):
            compute_psd(np.zeros((2, 2, 64)), DX)


class TestSpectralModel:
    def test_psd0_makes_the_model_integrate_to_sigma_squared(self):
        psd0 = psd0_for_sigma(1.0, 20.0, hurst=0.75)
        freqs = np.linspace(0.0, 5.0, 2_000_001)
        area = np.trapezoid(palasantzas_model(freqs, psd0, 20.0, hurst=0.75),
                            freqs)
        assert abs(area - 1.0) < 1e-3

    def test_psd0_scales_with_sigma_squared(self):
        one = psd0_for_sigma(1.0, 20.0, hurst=0.75)
        two = psd0_for_sigma(2.0, 20.0, hurst=0.75)
        assert two == pytest.approx(4.0 * one, rel=1e-12)

    def test_free_exponent_matches_hurst_parameterization(self):
        freqs = np.linspace(0.01, 0.5, 50)
        a = palasantzas_model(freqs, 100.0, 20.0, hurst=0.75)
        b = palasantzas_model(freqs, 100.0, 20.0, model=2, exponent_free=2.5)
        assert np.allclose(a, b, rtol=1e-12)

    def test_model_validation(self):
        with pytest.raises(ValueError):
            palasantzas_model(np.array([0.1]), -1.0, 20.0, hurst=0.75)
        with pytest.raises(ValueError):
            palasantzas_model(np.array([0.1]), 100.0, 20.0, hurst=1.5)
        with pytest.raises(ValueError):
            palasantzas_model(np.array([0.1]), 100.0, 20.0, model=2,
                              exponent_free=0.5)


class TestFit:
    def test_clean_curve_parameters_recovered_within_1_percent(self):
        psd0 = psd0_for_sigma(1.0, 20.0, hurst=0.75)
        curve = model_curve(psd0, 20.0, 0.75, floor=0.4)
        fit = fit_palasantzas(curve)
        assert fit.converged
        assert abs(fit.psd0 - psd0) / psd0 < 0.01
        assert abs(fit.xi - 20.0) / 20.0 < 0.01
        assert abs(fit.hurst - 0.75) < 0.01
        assert abs(fit.noise_floor - 0.4) / 0.4 < 0.01
        in_band = float(np.sqrt((curve.density - 0.4).sum() * curve.df))
        assert abs(fit.sigma_unbiased - in_band) / in_band < 0.01

    def test_fit_scale_equivariance(self):
        psd0 = psd0_for_sigma(1.0, 20.0, hurst=0.75)
        base = model_curve(psd0, 20.0, 0.75, floor=0.4)
        scaled = PsdCurve(frequencies=base.frequencies,
                          density=4.0 * base.density, n_traces_averaged=1,
                          trace_length=base.trace_length, pixel_size=DX)
        fit_base = fit_palasantzas(base)
        fit_scaled = fit_palasantzas(scaled)
        assert fit_scaled.psd0 == pytest.approx(4.0 * fit_base.psd0, rel=1e-3)
        assert fit_scaled.xi == pytest.approx(fit_base.xi, rel=1e-3)
        assert fit_scaled.sigma_unbiased == pytest.approx(
            2.0 * fit_base.sigma_unbiased, rel=1e-3)

    def test_too_few_bins_raise(self):
        psd0 = psd0_for_sigma(1.0, 20.0, hurst=0.75)
        curve = model_curve(psd0, 20.0, 0.75, floor=0.4, length=64)
        with pytest.raises(ValueError, match="usable bins"):
            fit_palasantzas(curve, PsdConfig(low_freq_exclusion=20))


class TestUnbias:
    def flat_curve(self, level=1.6, length=256):
        freqs = np.arange(1, length // 2 + 1) / (length * DX)
        return PsdCurve(frequencies=freqs, density=np.full(freqs.size, level),
                        n_traces_averaged=1, trace_length=length,
                        pixel_size=DX)

    def test_zero_floor_is_identity(self):
        curve = self.flat_curve()
        unbiased, sigma_b, sigma_u = unbias(curve, 0.0)
        assert np.array_equal(unbiased.density, curve.density)
        assert sigma_u == sigma_b

    def test_flat_curve_at_the_floor_has_zero_roughness(self):
        curve = self.flat_curve(level=1.6)
        unbiased, sigma_b, sigma_u = unbias(curve, 1.6)
        assert np.all(unbiased.density == 0.0)
        assert sigma_u == 0.0
        assert sigma_b == pytest.approx(
            np.sqrt(1.6 * curve.density.size * curve.df))

    def test_subtraction_clamps_at_zero(self):
        curve = self.flat_curve(level=1.0)
        unbiased, sigma_b, sigma_u = unbias(curve, 2.0)
        assert np.all(unbiased.density == 0.0)
        assert sigma_u == 0.0

    def test_negative_floor_rejected(self):
        with pytest.raises(ValueError):
            unbias(self.flat_curve(), -0.1)

    def test_unbiased_sigma_never_exceeds_biased(self):
        rng = np.random.default_rng(3)
        freqs = np.arange(1, 129) / (256 * DX)
        density = rng.uniform(0.5, 3.0, size=128)
        curve = PsdCurve(frequencies=freqs, density=density,
                         n_traces_averaged=1, trace_length=256, pixel_size=DX)
        _, sigma_b, sigma_u = unbias(curve, 0.7)
        assert sigma_u <= sigma_b


class TestRoughnessReport:
    def independent_edge_set(self, rows=512, n_lines=8):
        params = PalasantzasParams(sigma=0.8, xi=20.0, hurst=0.75)
        lines = []
        position = 20.0
        for li in range(n_lines):
            left = position + sample_edge_trace(params, 1, rows, DX,
                                                900 + 2 * li)
            right = position + 16.0 + sample_edge_trace(params, 1, rows, DX,
                                                        901 + 2 * li)
            lines.append((left, right))
            position += 32.0
        return EdgeSet(lines=lines, rows=rows, pixel_size=DX,
                       params=EdgeDetectParams(), kept_rows=np.arange(rows))

    def test_width_variance_doubles_edge_variance_for_independent_edges(self):
        report = roughness_report(self.independent_edge_set())
        ratio = (report.lwr.fit.sigma_biased ** 2
                 / (2.0 * report.ler.fit.sigma_biased ** 2))
        assert 0.85 < ratio < 1.15

    def test_report_structure(self):
        edge_set = self.independent_edge_set(n_lines=3)
        report = roughness_report(edge_set)
        assert len(report.per_line_ler) == 3
        assert len(report.per_line_lwr) == 3
        assert report.ler.biased.n_traces_averaged == 6
        assert report.lwr.biased.n_traces_averaged == 3
        assert report.lwr.unbiased.frequencies.shape == \
            report.lwr.biased.frequencies.shape

    def test_odd_row_counts_are_trimmed_to_even(self):
        params = PalasantzasParams(sigma=0.5, xi=20.0, hurst=0.75)
        rows = 129
        left = 20.0 + sample_edge_trace(params, 1, 256, DX, 50)[:rows]
        right = 36.0 + sample_edge_trace(params, 1, 256, DX, 51)[:rows]
        edge_set = EdgeSet(lines=[(left, right)], rows=rows, pixel_size=DX,
                           params=EdgeDetectParams(), kept_rows=np.arange(rows))
        report = roughness_report(edge_set)
        assert report.lwr.biased.trace_length == 128


class TestPsdConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(low_freq_exclusion=-1),
        dict(noise_band_fraction=0.0),
        dict(noise_band_fraction=0.5),
        dict(window="hamming"),
        dict(model=3),
        dict(detrend="linear"),
    ])
    def test_bad_configs_raise(self, kwargs):
        with pytest.raises(ValueError):
            PsdConfig(**kwargs)
