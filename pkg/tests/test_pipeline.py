"""Whole-image analysis reports, truth references, and report artifacts."""

import json

import numpy as np
import pytest

from linemet import (AnalysisConfig, EdgeDetectParams, Histogram, NoiseSpec,
                     PalasantzasParams, PatternSpec, analyze_image,
                     fit_bimodal, linescan_snr, realized_edge_sigma,
                     realized_width_sigma, report_to_dict, synthesize)
from linemet.pipeline import _fit_histogram, write_psd_csv, write_report_json

ROUGH = PalasantzasParams(sigma=0.6, xi=20.0, hurst=0.75)
PATTERN = PatternSpec(cd=16.0, pitch=32.0, n_lines=6, line_level=0.5343,
                      space_level=0.4657)
CONFIG = AnalysisConfig(edges=EdgeDetectParams(poly_order=5, fit_halfwidth=5))

FIT_KEYS = {"psd0_nm3", "xi_nm", "hurst", "exponent_free", "noise_floor_nm3",
            "sigma_biased_nm", "sigma_unbiased_nm", "threesigma_unbiased_nm",
            "model", "fit_rms_log_residual", "converged"}


@pytest.fixture(scope="module")
def case():
    image, truth = synthesize(ROUGH, PATTERN,
                              NoiseSpec(electrons_per_pixel_per_frame=120.0,
                                        n_frames=64, seed=21),
                              height=256, pixel_size=0.8,
                              trace_master_seed=21)
    return image, truth, analyze_image(image, CONFIG)


class TestAnalyzeImage:
    def test_report_is_well_formed(self, case):
        _, _, report = case
        assert report.snr.linescan_snr > 2.0
        assert report.snr.bins == 256
        assert 15.0 < report.cd.mean_cd < 17.0
        assert report.cd.n_lines == 6
        assert len(report.cd.per_line_mean) == 6
        assert report.cd.rows == report.edges.rows <= 256
        assert report.roughness.ler.biased.n_traces_averaged == 12
        assert report.roughness.lwr.biased.n_traces_averaged == 6
        assert len(report.roughness.per_line_ler) == 6
        assert len(report.roughness.per_line_lwr) == 6

    def test_default_config_detects_the_same_lines(self, case):
        image, _, _ = case
        report = analyze_image(image)
        assert report.cd.n_lines == 6

    def test_unbiased_sigmas_track_the_realized_truth(self, case):
        _, truth, report = case
        kept = report.edges.kept_rows
        true_lwr = realized_width_sigma(truth, kept)
        true_ler = realized_edge_sigma(truth, kept)
        assert abs(report.roughness.lwr.fit.sigma_unbiased
                   - true_lwr) / true_lwr < 0.2
        assert abs(report.roughness.ler.fit.sigma_unbiased
                   - true_ler) / true_ler < 0.2


class TestRealizedSigmas:
    def test_width_sigma_matches_a_per_line_recomputation(self, case):
        _, truth, _ = case
        kept = np.arange(10, 200)
        variances = []
        for line in range(truth.width_traces().shape[0]):
            trace = truth.width_traces()[line][kept]
            variances.append(np.mean((trace - trace.mean()) ** 2))
        expected = float(np.sqrt(np.mean(variances)))
        assert abs(realized_width_sigma(truth, kept) - expected) < 1e-12

    def test_edge_sigma_matches_a_per_edge_recomputation(self, case):
        _, truth, _ = case
        kept = np.arange(0, 256)
        variances = [np.mean((trace[kept] - trace[kept].mean()) ** 2)
                     for trace in truth.edges_nm]
        expected = float(np.sqrt(np.mean(variances)))
        assert abs(realized_edge_sigma(truth, kept) - expected) < 1e-12


class TestHistogramFallback:
    CENTERS = (np.arange(256) + 0.5) / 256.0

    def counts(self, m1, i1, s1, m2, i2, s2):
        return (m1 * np.exp(-((self.CENTERS - i1) ** 2) / (2.0 * s1 ** 2))
                + m2 * np.exp(-((self.CENTERS - i2) ** 2) / (2.0 * s2 ** 2)))

    def test_merged_modes_still_get_a_finite_snr(self):
        hist = Histogram(centers=self.CENTERS,
                         counts=self.counts(5000.0, 0.5, 0.08, 1.0, 0.5, 0.08))
        fit = _fit_histogram(hist)
        assert np.isfinite(linescan_snr(fit))

    def test_separated_modes_match_the_direct_fit(self):
        hist = Histogram(centers=self.CENTERS,
                         counts=self.counts(5000.0, 0.25, 0.05,
                                            7000.0, 0.75, 0.07))
        direct = linescan_snr(fit_bimodal(hist))
        assert abs(linescan_snr(_fit_histogram(hist)) - direct) < 1e-6 * direct


class TestArtifacts:
    def test_report_dict_schema(self, case):
        _, _, report = case
        d = report_to_dict(report)
        assert set(d) == {"snr", "cd", "ler", "lwr",
                          "per_line_lwr", "per_line_ler"}
        assert set(d["snr"]) == {"linescan_snr", "bins", "fit"}
        assert set(d["snr"]["fit"]) == {"m1", "i1", "s1", "m2", "i2", "s2",
                                        "residual_rms", "converged"}
        assert set(d["cd"]) == {"mean_cd_nm", "cd_std_nm", "per_line_mean_nm",
                                "n_lines", "rows"}
        assert set(d["lwr"]) == FIT_KEYS
        assert all(set(entry) == FIT_KEYS for entry in d["per_line_ler"])
        assert d["lwr"]["threesigma_unbiased_nm"] == pytest.approx(
            3.0 * d["lwr"]["sigma_unbiased_nm"])
        assert d["cd"]["mean_cd_nm"] == report.cd.mean_cd

    def test_report_json_round_trips(self, case, tmp_path):
        _, _, report = case
        path = tmp_path / "report.json"
        write_report_json(report, path)
        loaded = json.loads(path.read_text())
        assert loaded == report_to_dict(report)

    def test_psd_csv_layout(self, case, tmp_path):
        _, _, report = case
        bundle = report.roughness.lwr
        path = tmp_path / "curve.csv"
        write_psd_csv(bundle, path)
        header = path.read_text().splitlines()[0]
        assert header == "frequency_per_nm,density_nm3,unbiased_density_nm3"
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert np.array_equal(data[:, 0], bundle.biased.frequencies)
        assert np.array_equal(data[:, 1], bundle.biased.density)
        assert np.array_equal(data[:, 2], bundle.unbiased.density)
