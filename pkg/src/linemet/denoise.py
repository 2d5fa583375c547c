"""Reference denoisers and noisy-versus-denoised evaluation.

The denoisers are registration points for comparing arbitrary external
denoising output (kind "external") against simple classical baselines on
the same footing; none of them is the point of the toolkit. Evaluation
always runs the full analysis on both images of a pair and reports the
SNR, CD, and unbiased roughness movements.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, median_filter
from skimage.restoration import denoise_nl_means

from .image import GrayImage, load_image

_KINDS = ("gaussian", "median", "nlmeans", "external")


@dataclass(frozen=True)
class DenoiserSpec:
    """One active denoiser kind plus its parameters.

    gaussian: gaussian_sigma in pixels (separable, reflective borders)
    median: square window of radius median_radius pixels
    nlmeans: patch radius, search radius, and strength h in intensity
        units; h defaults to 0.8 times the estimated noise sigma
    external: file found by external_pattern with {stem} substituted by
        the source path minus its suffix
    """

    kind: str = "nlmeans"
    gaussian_sigma: float = 1.0
    median_radius: int = 1
    nl_patch_radius: int = 2
    nl_search_radius: int = 5
    nl_h: float = None
    external_pattern: str = "{stem}.denoised.pgm"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}")
        if self.gaussian_sigma < 0:
            raise ValueError("gaussian_sigma must be >= 0")
        if self.median_radius < 1:
            raise ValueError("median_radius must be >= 1")
        if self.nl_patch_radius < 1 or self.nl_search_radius < 1:
            raise ValueError("nlmeans radii must be >= 1")
        if self.nl_h is not None and self.nl_h <= 0:
            raise ValueError("nl_h must be positive when given")


def noise_sigma(samples):
    """Robust per-pixel noise sigma from horizontal first differences.

    Differences of neighboring pixels are sqrt(2) sigma wide where the
    scene is flat; the median absolute deviation ignores the sparse edge
    columns that a mean square would count as noise.
    """
    diffs = np.diff(samples, axis=1).ravel()
    mad = np.median(np.abs(diffs - np.median(diffs)))
    return float(1.4826 * mad / np.sqrt(2.0))


def denoise(image, spec, source_path=None):
    """Apply the active denoiser; geometry and pixel size are preserved.

    A gaussian sigma below 1e-6 returns the input image unchanged, bit for
    bit. The external kind loads the partner file named by the pattern and
    requires ``source_path``; mismatched geometry or pixel size raises.
    """
    if spec.kind == "gaussian":
        if spec.gaussian_sigma < 1e-6:
            return image
        out = gaussian_filter(image.samples, sigma=spec.gaussian_sigma,
                              mode="reflect")
    elif spec.kind == "median":
        size = 2 * spec.median_radius + 1
        out = median_filter(image.samples, size=size, mode="reflect")
    elif spec.kind == "nlmeans":
        sigma_est = noise_sigma(image.samples)
        h = spec.nl_h if spec.nl_h is not None else 0.8 * max(sigma_est, 1e-6)
        out = denoise_nl_means(image.samples,
                               patch_size=2 * spec.nl_patch_radius + 1,
                               patch_distance=spec.nl_search_radius,
                               h=h, sigma=sigma_est, fast_mode=True,
                               preserve_range=True)
    else:
        if source_path is None:
            raise ValueError("external denoising needs the source image path")
        stem = str(Path(source_path).with_suffix(""))
        partner = Path(spec.external_pattern.format(stem=stem))
        if not partner.exists():
            raise FileNotFoundError(f"paired denoised file {partner} not found")
        paired = load_image(partner, pixel_size_nm=image.pixel_size)
        if paired.samples.shape != image.samples.shape:
            raise ValueError(
                f"paired file {partner} has shape {paired.samples.shape[::-1]}, "
                f"expected {image.samples.shape[::-1]}")
        return paired
    out = np.clip(out, 0.0, 1.0)
    return GrayImage(samples=out, pixel_size=image.pixel_size,
                     bit_depth_source=image.bit_depth_source)


@dataclass(frozen=True)
class DenoiseComparison:
    """Noisy-versus-denoised movements of every headline metric.

    Percent deltas follow the reporting conventions: dsnr_pct is absolute
    relative change, dcd_pct signed relative change, both against the
    noisy value. Truth errors are filled when a ground truth is supplied
    and compare each side's unbiased width sigma against the realized
    width sigma of the true edges over that side's surviving rows.
    """

    snr_noisy: float
    snr_denoised: float
    dsnr_pct: float
    cd_noisy: float
    cd_denoised: float
    dcd_pct: float
    lwr_sigma_biased_noisy: float
    lwr_sigma_unbiased_noisy: float
    lwr_sigma_biased_denoised: float
    lwr_sigma_unbiased_denoised: float
    sigma_true: float = None
    err_unbiased_noisy: float = None
    err_unbiased_denoised: float = None


def evaluate_denoiser(noisy, denoised, truth=None, config=None):
    """Analyze both images of a pair and tabulate the movements."""
    from .pipeline import analyze_image, realized_width_sigma
    from .snr import snr_delta
    from .edges import cd_delta

    if noisy.samples.shape != denoised.samples.shape:
        raise ValueError("noisy and denoised images must share geometry")
    rep_n = analyze_image(noisy, config)
    rep_d = analyze_image(denoised, config)
    snr_n = rep_n.snr.linescan_snr
    snr_d = rep_d.snr.linescan_snr
    cd_n = rep_n.cd.mean_cd
    cd_d = rep_d.cd.mean_cd
    fit_n = rep_n.roughness.lwr.fit
    fit_d = rep_d.roughness.lwr.fit

    sigma_true = err_n = err_d = None
    if truth is not None:
        true_n = realized_width_sigma(truth, rep_n.edges.kept_rows)
        true_d = realized_width_sigma(truth, rep_d.edges.kept_rows)
        sigma_true = true_n
        err_n = abs(fit_n.sigma_unbiased - true_n) / true_n
        err_d = abs(fit_d.sigma_unbiased - true_d) / true_d

    return DenoiseComparison(
        snr_noisy=snr_n, snr_denoised=snr_d,
        dsnr_pct=snr_delta(snr_n, snr_d),
        cd_noisy=cd_n, cd_denoised=cd_d,
        dcd_pct=cd_delta(cd_n, cd_d),
        lwr_sigma_biased_noisy=fit_n.sigma_biased,
        lwr_sigma_unbiased_noisy=fit_n.sigma_unbiased,
        lwr_sigma_biased_denoised=fit_d.sigma_biased,
        lwr_sigma_unbiased_denoised=fit_d.sigma_unbiased,
        sigma_true=sigma_true,
        err_unbiased_noisy=err_n,
        err_unbiased_denoised=err_d,
    )
