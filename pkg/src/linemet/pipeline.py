"""Single-image analysis pipeline shared by the CLI and the evaluators."""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .edges import EdgeDetectParams, EdgeSet, detect_edges, mean_cd
from .psd import PsdConfig, roughness_report
from .snr import (fit_bimodal, grayscale_histogram, linescan_snr,
                  quantile_init, SnrReport)


@dataclass(frozen=True)
class AnalysisConfig:
    bins: int = 256
    histogram_border: int = 2
    edges: EdgeDetectParams = field(default_factory=EdgeDetectParams)
    psd: PsdConfig = field(default_factory=PsdConfig)


@dataclass(frozen=True, eq=False)
class ImageReport:
    snr: SnrReport
    cd: object
    roughness: object
    edges: EdgeSet


def _fit_histogram(hist):
    """Best of a mode-seeded and a quartile-seeded two-Gaussian fit.

    Both starting points are fitted and the lower-residual result wins,
    preferring converged fits. The two inits reach different local minima
    exactly when the modes have merged (low SNR regime), where the
    quartile-seeded fit is the one that finds the physical pair.
    """
    candidates = []
    try:
        candidates.append(fit_bimodal(hist))
    except ValueError:
        pass
    candidates.append(fit_bimodal(hist, init=quantile_init(hist)))
    converged = [fit for fit in candidates if fit.converged]
    pool = converged if converged else candidates
    return min(pool, key=lambda fit: fit.residual)


def analyze_image(image, config=None):
    """Histogram SNR, mean CD, and roughness spectra of one image.

    When the two histogram modes have merged (low SNR regime) the
    two-Gaussian fit falls back to quartile-based starting values, so an
    SNR number is still reported; its reliability is whatever the number
    itself says it is.
    """
    if config is None:
        config = AnalysisConfig()
    hist = grayscale_histogram(image, bins=config.bins,
                               border=config.histogram_border)
    fit = _fit_histogram(hist)
    snr_report = SnrReport(linescan_snr=linescan_snr(fit), fit=fit,
                           bins=config.bins)
    edge_set = detect_edges(image, config.edges)
    cd_report = mean_cd(edge_set)
    roughness = roughness_report(edge_set, config.psd)
    return ImageReport(snr=snr_report, cd=cd_report, roughness=roughness,
                       edges=edge_set)


def realized_width_sigma(truth, kept_rows):
    """True width sigma (nm) realized over the surviving rows.

    Mean of the per-line detrended width variances, square rooted: the
    exact quantity a width-trace PSD area estimates once detection noise
    is removed.
    """
    widths = truth.width_traces()[:, kept_rows]
    variances = widths.var(axis=1)
    return float(np.sqrt(variances.mean()))


def realized_edge_sigma(truth, kept_rows):
    """True single-edge sigma (nm) realized over the surviving rows."""
    edges = truth.edges_nm[:, kept_rows]
    return float(np.sqrt(edges.var(axis=1).mean()))


def _fit_dict(fit):
    return {
        "psd0_nm3": fit.psd0,
        "xi_nm": fit.xi,
        "hurst": fit.hurst,
        "exponent_free": fit.exponent_free,
        "noise_floor_nm3": fit.noise_floor,
        "sigma_biased_nm": fit.sigma_biased,
        "sigma_unbiased_nm": fit.sigma_unbiased,
        "threesigma_unbiased_nm": 3.0 * fit.sigma_unbiased,
        "model": fit.model,
        "fit_rms_log_residual": fit.fit_rms_log_residual,
        "converged": fit.converged,
    }


def report_to_dict(report):
    """JSON-ready dictionary of one image report (no curves)."""
    f = report.snr.fit
    return {
        "snr": {
            "linescan_snr": report.snr.linescan_snr,
            "bins": report.snr.bins,
            "fit": {"m1": f.m1, "i1": f.i1, "s1": f.s1,
                    "m2": f.m2, "i2": f.i2, "s2": f.s2,
                    "residual_rms": f.residual, "converged": f.converged},
        },
        "cd": {
            "mean_cd_nm": report.cd.mean_cd,
            "cd_std_nm": report.cd.cd_std,
            "per_line_mean_nm": report.cd.per_line_mean,
            "n_lines": report.cd.n_lines,
            "rows": report.cd.rows,
        },
        "ler": _fit_dict(report.roughness.ler.fit),
        "lwr": _fit_dict(report.roughness.lwr.fit),
        "per_line_lwr": [_fit_dict(b.fit) for b in report.roughness.per_line_lwr],
        "per_line_ler": [_fit_dict(b.fit) for b in report.roughness.per_line_ler],
    }


def write_report_json(report, path):
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=1)


def write_psd_csv(bundle, path):
    """Curve CSV: frequency, biased density, unbiased density."""
    rows = np.column_stack([bundle.biased.frequencies,
                            bundle.biased.density,
                            bundle.unbiased.density])
    header = "frequency_per_nm,density_nm3,unbiased_density_nm3"
    np.savetxt(path, rows, delimiter=",", header=header, comments="")
