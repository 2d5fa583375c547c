"""One-sided roughness power spectra, spectral model fits, and unbiasing.

Spectra are one-sided periodograms over the discrete frequencies
``f_k = k / (L * pixel_size)`` for ``k = 1 .. L/2`` (DC excluded). Interior
bins carry a factor 2 from conjugate pairing; the Nyquist coefficient is its
own conjugate pair, so it keeps the two-sided weight. With that convention
the plain rectangular sum ``sum(density) * df`` reproduces the detrended
trace variance to rounding error, which is the normalization everything
downstream relies on: the area under a PSD is a variance in nm^2 when
frequencies are 1/nm and densities nm^3.

The spectral model family is a Lorentzian power law with either a Hurst
exponent (model 1, exponent ``2*hurst + 1``) or a free exponent (model 2):

    model(f) = psd0 / (1 + (2*pi*f*xi)**2) ** (exponent / 2)

Measured spectra sit on a white noise floor from per-row edge detection
error; ``fit_palasantzas`` estimates model and floor jointly in log space
and ``unbias`` subtracts the floor to recover the noise-free variance.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .fitting import least_squares_lm

_MODELS = (1, 2)


@dataclass(frozen=True, eq=False)
class PsdCurve:
    """Averaged one-sided periodogram and how it was computed.

    frequencies: 1/nm, strictly increasing, first entry 1/(L*pixel_size)
    density: nm^3, one value per frequency
    """

    frequencies: np.ndarray
    density: np.ndarray
    n_traces_averaged: int
    trace_length: int
    pixel_size: float
    detrend: str = "mean"

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=np.float64)
        dens = np.asarray(self.density, dtype=np.float64)
        if freqs.ndim != 1 or freqs.shape != dens.shape:
            raise ValueError("frequencies and density must be matching 1-D arrays")
        if freqs.size < 2 or np.any(np.diff(freqs) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if not np.all(np.isfinite(dens)) or np.any(dens < 0):
            raise ValueError("density must be finite and nonnegative")
        freqs = freqs.copy()
        dens = dens.copy()
        freqs.flags.writeable = False
        dens.flags.writeable = False
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "density", dens)

    @property
    def df(self):
        return 1.0 / (self.trace_length * self.pixel_size)


@dataclass(frozen=True)
class PsdConfig:
    """Knobs for spectrum estimation and fitting.

    low_freq_exclusion drops that many of the lowest bins from the model fit
    only; variance integrals always run over the full band.
    """

    low_freq_exclusion: int = 3
    noise_band_fraction: float = 0.2
    window: str = "none"
    model: int = 1
    detrend: str = "mean"

    def __post_init__(self):
        if self.low_freq_exclusion < 0:
            raise ValueError("low_freq_exclusion must be >= 0")
        if not (0.0 < self.noise_band_fraction < 0.5):
            raise ValueError("noise_band_fraction must be in (0, 0.5)")
        if self.window not in ("none", "hann"):
            raise ValueError("window must be 'none' or 'hann'")
        if self.model not in _MODELS:
            raise ValueError("model must be 1 or 2")
        if self.detrend not in ("none", "mean"):
            raise ValueError("detrend must be 'none' or 'mean'")


@dataclass(frozen=True)
class PalasantzasFit:
    """Spectral model plus white floor fitted to a measured curve.

    sigma_biased and sigma_unbiased are square roots of the full-band curve
    area before and after floor subtraction, in nm. For model 1 the shape is
    reported through hurst in (0, 1]; for model 2 through exponent_free > 1.
    """

    psd0: float
    xi: float
    hurst: float
    exponent_free: float
    noise_floor: float
    sigma_biased: float
    sigma_unbiased: float
    model: int
    fit_rms_log_residual: float
    converged: bool


def palasantzas_model(f, psd0, xi, hurst=None, model=1, exponent_free=None):
    """Evaluate the spectral model at frequencies ``f`` (1/nm)."""
    exponent = _model_exponent(hurst, model, exponent_free)
    if psd0 <= 0 or xi <= 0:
        raise ValueError("psd0 and xi must be positive")
    f = np.asarray(f, dtype=np.float64)
    return psd0 / (1.0 + (2.0 * np.pi * f * xi) ** 2) ** (exponent / 2.0)


def _model_exponent(hurst, model, exponent_free):
    if model == 1:
        if hurst is None:
            raise ValueError("model 1 requires hurst")
        if not (0.0 < hurst <= 1.0):
            raise ValueError("hurst must be in (0, 1]")
        return 2.0 * hurst + 1.0
    if model == 2:
        if exponent_free is None:
            raise ValueError("model 2 requires exponent_free")
        if exponent_free <= 1.0:
            raise ValueError("exponent_free must exceed 1 for a finite area")
        return float(exponent_free)
    raise ValueError("model must be 1 or 2")


def psd0_for_sigma(sigma, xi, hurst=None, model=1, exponent_free=None):
    """Zero-frequency density making the one-sided model area equal sigma^2.

    Closed form of ``integral_0^inf model(f) df = sigma^2`` via the Beta
    function; exponent must exceed 1 for the integral to exist.
    """
    exponent = _model_exponent(hurst, model, exponent_free)
    if sigma < 0 or xi <= 0:
        raise ValueError("sigma must be >= 0 and xi > 0")
    ratio = np.exp(gammaln(exponent / 2.0) - gammaln((exponent - 1.0) / 2.0))
    return sigma ** 2 * 2.0 * np.pi * xi * (2.0 / np.sqrt(np.pi)) * ratio


def compute_psd(traces, pixel_size, config=None):
    """Averaged one-sided periodogram of equal-length traces in nm.

    Accepts a single trace or a stack of traces (rows are traces). Traces
    are detrended per config (mean removal by default), optionally windowed
    (Hann, power normalized), transformed, and the per-trace densities are
    averaged bin-wise.
    """
    if config is None:
        config = PsdConfig()
    if not (pixel_size > 0):
        raise ValueError("pixel_size must be positive")
    arr = np.atleast_2d(np.asarray(traces, dtype=np.float64))
    if arr.ndim != 2:
        raise ValueError("traces must be 1-D or a stack of 1-D arrays")
    n_traces, length = arr.shape
    if length < 64 or length % 2 != 0:
        raise ValueError("traces must have even length >= 64")
    if not np.all(np.isfinite(arr)):
        raise ValueError("traces must be finite")

    work = arr
    if config.detrend == "mean":
        work = work - work.mean(axis=1, keepdims=True)
    if config.window == "hann":
        win = np.hanning(length)
        win = win / np.sqrt(np.mean(win ** 2))
        work = work * win

    spectrum = np.fft.rfft(work, axis=1)
    power = (spectrum.real ** 2 + spectrum.imag ** 2)[:, 1:]
    density = (2.0 * pixel_size / length) * power
    density[:, -1] *= 0.5
    mean_density = density.mean(axis=0)

    freqs = np.arange(1, length // 2 + 1) / (length * pixel_size)
    return PsdCurve(frequencies=freqs, density=mean_density,
                    n_traces_averaged=n_traces, trace_length=length,
                    pixel_size=float(pixel_size), detrend=config.detrend)


def unbias(curve, noise_floor):
    """Subtract a white floor from a curve, clamping at zero.

    Returns ``(unbiased_curve, sigma_biased, sigma_unbiased)`` where the
    sigmas are full-band areas of the input and output curves, square
    rooted. sigma_unbiased never exceeds sigma_biased.
    """
    if noise_floor < 0:
        raise ValueError("noise_floor must be >= 0")
    clamped = np.maximum(curve.density - noise_floor, 0.0)
    df = curve.df
    sigma_biased = float(np.sqrt(np.sum(curve.density) * df))
    sigma_unbiased = float(np.sqrt(np.sum(clamped) * df))
    unbiased = replace(curve, frequencies=curve.frequencies, density=clamped)
    return unbiased, sigma_biased, sigma_unbiased


def _fit_mask(curve, config):
    idx = np.arange(curve.density.size)
    mask = (idx >= config.low_freq_exclusion) & (curve.density > 0)
    mask &= np.isfinite(curve.density)
    return mask


def _default_init(curve, config, mask):
    dens = curve.density
    freqs = curve.frequencies
    n_noise = max(1, int(round(config.noise_band_fraction * dens.size)))
    floor0 = float(np.mean(dens[-n_noise:]))
    floor0 = max(floor0, 1e-300)
    included = dens[mask]
    psd0_0 = float(np.mean(included[:3])) - floor0
    psd0_0 = max(psd0_0, 1e-3 * floor0)
    above = mask & (dens - floor0 <= psd0_0 / 2.0)
    if np.any(above):
        f_half = freqs[above][0]
    else:
        f_half = float(np.median(freqs[mask]))
    xi0 = 1.0 / (2.0 * np.pi * max(f_half, freqs[0]))
    return psd0_0, xi0, floor0


def fit_palasantzas(curve, config=None, init=None):
    """Fit the spectral model plus a white floor to a measured curve.

    The residual is ``log10(density) - log10(model + floor)`` over the bins
    that survive the low frequency exclusion and are positive; at least 16
    such bins are required. All parameters stay positive through a log
    parameterization (the model 2 exponent through ``1 + exp``), and a
    model 1 shape that drifts above hurst = 1 is reported capped at 1.

    ``init`` may carry starting values as attributes psd0, xi, noise_floor,
    and hurst or exponent_free (a previous PalasantzasFit works); otherwise
    the start is derived from the curve itself: floor from the mean of the
    top noise_band_fraction of the band, psd0 from the lowest included bins
    minus the floor, xi from the half-power crossing, shape from 0.75.
    """
    if config is None:
        config = PsdConfig()
    mask = _fit_mask(curve, config)
    n_used = int(mask.sum())
    if n_used < 16:
        raise ValueError(
            f"only {n_used} usable bins after exclusions, need at least 16")
    freqs = curve.frequencies[mask]
    logd = np.log10(curve.density[mask])

    if init is not None:
        psd0_0 = float(init.psd0)
        xi0 = float(init.xi)
        floor0 = max(float(init.noise_floor), 1e-300)
        if config.model == 1:
            shape0 = float(init.hurst)
        else:
            shape0 = float(init.exponent_free)
    else:
        psd0_0, xi0, floor0 = _default_init(curve, config, mask)
        shape0 = 0.75 if config.model == 1 else 2.5

    if config.model == 1:
        theta0 = np.log([psd0_0, xi0, shape0, floor0])

        def unpack(theta):
            psd0, xi, hurst, floor = np.exp(theta)
            return psd0, xi, 2.0 * hurst + 1.0, floor
    else:
        theta0 = np.log([psd0_0, xi0, max(shape0 - 1.0, 1e-6), floor0])

        def unpack(theta):
            psd0, xi, shape, floor = np.exp(theta)
            return psd0, xi, 1.0 + shape, floor

    two_pi_f = 2.0 * np.pi * freqs

    def residual(theta):
        # Wild trial steps can overflow; a non-finite cost just gets the
        # step rejected, so the warnings carry no information.
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            psd0, xi, exponent, floor = unpack(theta)
            model = psd0 / (1.0 + (two_pi_f * xi) ** 2) ** (exponent / 2.0)
            return np.log10(model + floor) - logd

    result = least_squares_lm(residual, theta0, max_iter=300, ftol=1e-10)
    with np.errstate(over="ignore"):
        psd0, xi, exponent, floor = unpack(result.params)
    if config.model == 1:
        hurst = min((exponent - 1.0) / 2.0, 1.0)
        exponent_free = 2.0 * hurst + 1.0
    else:
        exponent_free = exponent
        hurst = min(max((exponent - 1.0) / 2.0, 1e-9), 1.0)
    _, sigma_biased, sigma_unbiased = unbias(curve, floor)
    rms = float(np.sqrt(result.cost / n_used))
    return PalasantzasFit(psd0=float(psd0), xi=float(xi), hurst=float(hurst),
                          exponent_free=float(exponent_free),
                          noise_floor=float(floor),
                          sigma_biased=sigma_biased,
                          sigma_unbiased=sigma_unbiased,
                          model=config.model,
                          fit_rms_log_residual=rms,
                          converged=result.converged)


@dataclass(frozen=True, eq=False)
class PsdBundle:
    """A measured curve with its fit and floor-subtracted counterpart."""

    biased: PsdCurve
    unbiased: PsdCurve
    fit: PalasantzasFit

    @property
    def threesigma_biased(self):
        return 3.0 * self.fit.sigma_biased

    @property
    def threesigma_unbiased(self):
        return 3.0 * self.fit.sigma_unbiased


@dataclass(frozen=True, eq=False)
class RoughnessReport:
    """Pooled and per-line edge and width roughness spectra.

    ler pools the periodograms of every individual edge trace; lwr pools the
    per-line width traces. per_line_ler fits each line's own pair of edges,
    per_line_lwr each line's width trace alone.
    """

    ler: PsdBundle
    lwr: PsdBundle
    per_line_ler: list
    per_line_lwr: list


def _bundle(traces, pixel_size, config):
    curve = compute_psd(traces, pixel_size, config)
    fit = fit_palasantzas(curve, config)
    unbiased, _, _ = unbias(curve, fit.noise_floor)
    return PsdBundle(biased=curve, unbiased=unbiased, fit=fit)


def roughness_report(edge_set, config=None):
    """Full roughness analysis of a detected edge set.

    Trace length is trimmed to the nearest even row count. Requires at
    least 64 surviving rows (compute_psd precondition).
    """
    if config is None:
        config = PsdConfig()
    length = edge_set.rows - (edge_set.rows % 2)
    edges = []
    widths = []
    for left, right in edge_set.lines:
        edges.append(left[:length])
        edges.append(right[:length])
        widths.append(right[:length] - left[:length])
    pixel_size = edge_set.pixel_size
    ler = _bundle(np.array(edges), pixel_size, config)
    lwr = _bundle(np.array(widths), pixel_size, config)
    per_line_ler = [_bundle(np.array(edges[2 * i:2 * i + 2]), pixel_size, config)
                    for i in range(len(edge_set.lines))]
    per_line_lwr = [_bundle(np.array([widths[i]]), pixel_size, config)
                    for i in range(len(edge_set.lines))]
    return RoughnessReport(ler=ler, lwr=lwr, per_line_ler=per_line_ler,
                           per_line_lwr=per_line_lwr)
