"""Grayscale histograms, two-Gaussian fits, and linescan SNR metrics.

A line-space image's intensity histogram is two populations, space pixels
and line pixels. Fitting it with a sum of two Gaussians

    H(I) = m1 * exp(-(I - i1)^2 / (2 s1^2)) + m2 * exp(-(I - i2)^2 / (2 s2^2))

separates the plateau levels from their noise spreads, and the linescan
signal-to-noise ratio is the peak separation over the mean spread,
``2 (i2 - i1) / (s1 + s2)``. Below about 2 the two modes merge and every
downstream estimate loses reliability; the analysis still reports the value
so the regime is visible.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.ndimage import uniform_filter1d

from .fitting import least_squares_lm


class Histogram(NamedTuple):
    centers: np.ndarray
    counts: np.ndarray


@dataclass(frozen=True)
class HistogramFit:
    """Two-Gaussian histogram fit, canonically ordered so i1 < i2.

    residual is the RMS count residual of the fit; converged reflects the
    optimizer's stopping condition.
    """

    m1: float
    i1: float
    s1: float
    m2: float
    i2: float
    s2: float
    residual: float
    converged: bool


@dataclass(frozen=True)
class SnrReport:
    linescan_snr: float
    fit: HistogramFit
    bins: int
    snr_db: float = None


def grayscale_histogram(image, bins=256, border=2):
    """Histogram of image samples over [0, 1] with uniform bin centers.

    A border of the given width in pixels is excluded, since raster edges
    carry partial-field artifacts in real acquisitions; counts sum to the
    number of interior pixels.
    """
    if bins < 32:
        raise ValueError("bins must be >= 32")
    if border < 0:
        raise ValueError("border must be >= 0")
    h, w = image.samples.shape
    if h - 2 * border < 1 or w - 2 * border < 1:
        raise ValueError("border leaves no pixels")
    interior = image.samples[border:h - border, border:w - border]
    counts, edges = np.histogram(interior, bins=bins, range=(0.0, 1.0))
    centers = 0.5 * (edges[:-1] + edges[1:])
    return Histogram(centers=centers, counts=counts.astype(np.float64))


def _two_gaussians(centers, p):
    m1, i1, s1, m2, i2, s2 = p
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        g1 = np.exp(-((centers - i1) ** 2) / (2.0 * s1 ** 2))
        g2 = np.exp(-((centers - i2) ** 2) / (2.0 * s2 ** 2))
        return m1 * g1 + m2 * g2, g1, g2


def _hwhm_bins(smooth, peak):
    half = smooth[peak] / 2.0
    left = peak
    while left > 0 and smooth[left] > half:
        left -= 1
    right = peak
    while right < smooth.size - 1 and smooth[right] > half:
        right += 1
    return max(min(peak - left, right - peak), 1)


def _mode_init_impl(hist):
    """Starting parameters from the two tallest smoothed local maxima.

    The second maximum must sit outside the first one's half width, so a
    noisy summit does not get mistaken for two modes.
    """
    counts = hist.counts
    centers = hist.centers
    binwidth = centers[1] - centers[0]
    smooth = uniform_filter1d(counts, size=3, mode="nearest")
    interior = np.arange(1, smooth.size - 1)
    is_max = (smooth[interior] > smooth[interior - 1]) & \
             (smooth[interior] >= smooth[interior + 1])
    peaks = interior[is_max]
    if peaks.size < 2:
        return None
    order = np.argsort(smooth[peaks])[::-1]
    first = peaks[order[0]]
    separation = max(2 * _hwhm_bins(smooth, first), 2)
    rest = peaks[order[1:]]
    rest = rest[np.abs(rest - first) > separation]
    if rest.size == 0:
        return None
    chosen = np.sort([first, rest[0]])

    params = []
    for peak in chosen:
        sigma = _hwhm_bins(smooth, peak) * binwidth / np.sqrt(2.0 * np.log(2.0))
        params.extend([max(counts[peak], 1.0), centers[peak], sigma])
    return np.array(params)


def quantile_init(hist):
    """Starting values for a unimodal histogram, from quartile locations.

    Intended as the fallback ``init`` for fit_bimodal when the two modes
    have merged; the resulting fit is only as identifiable as the data.
    """
    counts = hist.counts
    centers = hist.centers
    total = counts.sum()
    if total <= 0:
        raise ValueError("empty histogram")
    cum = np.cumsum(counts) / total
    i1 = centers[np.searchsorted(cum, 0.25)]
    i2 = centers[np.searchsorted(cum, 0.75)]
    binwidth = centers[1] - centers[0]
    mean = np.sum(centers * counts) / total
    std = np.sqrt(np.sum((centers - mean) ** 2 * counts) / total)
    sigma = max(0.6 * std, binwidth)
    amp = max(counts.max() / 2.0, 1.0)
    if i2 - i1 < binwidth:
        i2 = min(i1 + 2 * binwidth, centers[-1])
    return HistogramFit(m1=amp, i1=float(i1), s1=sigma, m2=amp, i2=float(i2),
                        s2=sigma, residual=float("inf"), converged=False)


def fit_bimodal(hist, init=None):
    """Least-squares two-Gaussian fit of a histogram.

    Without an explicit ``init`` the start comes from the two tallest local
    maxima of the 3-bin-smoothed counts (their positions, half-widths, and
    peak counts); a histogram without two such maxima raises, and callers
    facing merged modes can pass ``quantile_init(hist)`` instead. The
    returned peaks are ordered i1 < i2 and widths are reported positive.
    """
    counts = hist.counts
    centers = hist.centers
    if init is not None:
        p0 = np.array([init.m1, init.i1, init.s1, init.m2, init.i2, init.s2],
                      dtype=float)
    else:
        p0 = _mode_init_impl(hist)
        if p0 is None:
            raise ValueError(
                "cannot locate two modes in the histogram; pass an explicit init")

    def residual(p):
        model, _, _ = _two_gaussians(centers, p)
        return model - counts

    def jacobian(p):
        m1, i1, s1, m2, i2, s2 = p
        _, g1, g2 = _two_gaussians(centers, p)
        d1 = centers - i1
        d2 = centers - i2
        jac = np.empty((centers.size, 6))
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            jac[:, 0] = g1
            jac[:, 1] = m1 * g1 * d1 / s1 ** 2
            jac[:, 2] = m1 * g1 * d1 ** 2 / s1 ** 3
            jac[:, 3] = g2
            jac[:, 4] = m2 * g2 * d2 / s2 ** 2
            jac[:, 5] = m2 * g2 * d2 ** 2 / s2 ** 3
        return jac

    result = least_squares_lm(residual, p0, jac=jacobian, max_iter=200,
                              ftol=1e-10)
    m1, i1, s1, m2, i2, s2 = result.params
    s1, s2 = abs(s1), abs(s2)
    converged = result.converged
    if m1 <= 0 or m2 <= 0:
        converged = False
        m1, m2 = max(m1, 1e-300), max(m2, 1e-300)
    # A component wider than the whole intensity range, or centered far
    # outside it, is a flat baseline standing in for a mode.
    if not (s1 <= 1.0 and s2 <= 1.0 and -0.5 <= i1 <= 1.5 and -0.5 <= i2 <= 1.5):
        converged = False
    if i1 > i2:
        m1, i1, s1, m2, i2, s2 = m2, i2, s2, m1, i1, s1
    rms = float(np.sqrt(result.cost / centers.size))
    return HistogramFit(m1=float(m1), i1=float(i1), s1=float(s1),
                        m2=float(m2), i2=float(i2), s2=float(s2),
                        residual=rms, converged=converged)


def linescan_snr(fit):
    """Peak separation over mean spread, ``2 (i2 - i1) / (s1 + s2)``.

    Nonnegative by the fit's canonical ordering. Values below about 2
    indicate merged modes and unreliable downstream estimates.
    """
    return 2.0 * (fit.i2 - fit.i1) / (fit.s1 + fit.s2)


def snr_db(signal_variance, noise_variance):
    """Decibel ratio ``10 log10(signal_variance / noise_variance)``."""
    if signal_variance <= 0 or noise_variance <= 0:
        raise ValueError("variances must be positive")
    return 10.0 * np.log10(signal_variance / noise_variance)


def snr_delta(snr_noisy, snr_denoised):
    """Absolute relative SNR change in percent against the noisy value."""
    if snr_noisy <= 0:
        raise ValueError("snr_noisy must be positive")
    return abs(snr_denoised - snr_noisy) / snr_noisy * 100.0
