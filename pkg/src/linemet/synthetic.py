"""Synthetic line-space images with known edge roughness and shot noise.

The generator is the ground truth oracle for the whole toolkit: edges are
drawn from the same spectral model family the analysis fits, rasters are
painted with analytic pixel coverage, and frame noise is Poisson counting
statistics. Every random quantity is reproducible from explicit seeds.
"""

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .image import GrayImage
from .psd import palasantzas_model, psd0_for_sigma, _model_exponent


@dataclass(frozen=True)
class PalasantzasParams:
    """Roughness amplitude sigma (nm), correlation length xi (nm), and
    shape, either a Hurst exponent or a free spectral exponent."""

    sigma: float
    xi: float
    hurst: float = 0.75
    exponent_free: float = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if not (0.0 < self.hurst <= 1.0):
            raise ValueError("hurst must be in (0, 1]")
        if self.exponent_free is not None and self.exponent_free <= 1.0:
            raise ValueError("exponent_free must exceed 1")


@dataclass(frozen=True)
class PatternSpec:
    """Nominal line-space geometry and contrast, lengths in nm.

    line_level and space_level are ideal intensities in [0, 1];
    edge_blur_sigma is an isotropic Gaussian image blur standing in for the
    beam and resist transfer; the edge effect adds a Gaussian brightness
    bump of the given amplitude and width centered on every true edge.
    """

    cd: float = 16.0
    pitch: float = 32.0
    n_lines: int = 6
    line_level: float = 0.75
    space_level: float = 0.25
    edge_blur_sigma: float = 0.8
    edge_effect_amplitude: float = 0.0
    edge_effect_width: float = 2.0

    def __post_init__(self):
        if not (0 < self.cd < self.pitch):
            raise ValueError("need 0 < cd < pitch")
        if self.n_lines < 1:
            raise ValueError("n_lines must be >= 1")
        if not (0.0 <= self.space_level < self.line_level <= 1.0):
            raise ValueError("need 0 <= space_level < line_level <= 1")
        if self.edge_blur_sigma < 0:
            raise ValueError("edge_blur_sigma must be >= 0")
        if self.edge_effect_amplitude < 0:
            raise ValueError("edge_effect_amplitude must be >= 0")
        if self.edge_effect_width <= 0:
            raise ValueError("edge_effect_width must be positive")


@dataclass(frozen=True)
class NoiseSpec:
    """Poisson dose model: mean detected electrons per pixel per frame at
    intensity 1.0, number of averaged frames, and the stream seed."""

    electrons_per_pixel_per_frame: float = 120.0
    n_frames: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.electrons_per_pixel_per_frame <= 0:
            raise ValueError("electrons_per_pixel_per_frame must be positive")
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must fit in 64 bits")


def sample_edge_trace(params, model, n_points, pixel_size, seed):
    """Draw one edge displacement trace (nm) from the spectral model.

    Fourier coefficients are independent complex Gaussians scaled so the
    expected one-sided periodogram equals the model exactly at every
    discrete frequency, with psd0 set from (sigma, xi, shape) so the
    continuous one-sided model area is sigma^2. Hermitian symmetry holds by
    construction and the trace mean is exactly zero. n_points must be a
    power of two, at least 64.
    """
    n = int(n_points)
    if n < 64 or n & (n - 1) != 0:
        raise ValueError("n_points must be a power of two >= 64")
    if not (pixel_size > 0):
        raise ValueError("pixel_size must be positive")
    _model_exponent(params.hurst, model, params.exponent_free)

    if params.sigma == 0.0:
        return np.zeros(n)
    psd0 = psd0_for_sigma(params.sigma, params.xi, params.hurst, model,
                          params.exponent_free)
    freqs = np.arange(1, n // 2 + 1) / (n * pixel_size)
    target = palasantzas_model(freqs, psd0, params.xi, params.hurst, model,
                               params.exponent_free)

    rng = np.random.default_rng(int(seed))
    interior = target[:-1] * n / (4.0 * pixel_size)
    spectrum = np.zeros(n // 2 + 1, dtype=np.complex128)
    spectrum[1:-1] = np.sqrt(interior) * (
        rng.standard_normal(n // 2 - 1) + 1j * rng.standard_normal(n // 2 - 1))
    spectrum[-1] = np.sqrt(target[-1] * n / pixel_size) * rng.standard_normal()
    return np.fft.irfft(spectrum, n=n)


def nominal_edge_positions(spec, width_nm):
    """Ideal edge x positions (nm), ordered left to right, lines centered
    in their pitch cells and the pattern centered in the raster."""
    total = spec.n_lines * spec.pitch
    if total > width_nm:
        raise ValueError(
            f"pattern spans {total} nm but the raster is only {width_nm} nm wide")
    x0 = (width_nm - total) / 2.0
    positions = []
    for i in range(spec.n_lines):
        left = x0 + i * spec.pitch + (spec.pitch - spec.cd) / 2.0
        positions.extend([left, left + spec.cd])
    return np.array(positions)


def render_pattern(spec, edge_traces, width, height, pixel_size):
    """Paint a noise-free raster from per-row edge displacements.

    edge_traces holds one displacement trace (nm) per physical edge,
    ordered left to right (left then right of line 0, then line 1, ...),
    each of length ``height``. Transitions are antialiased by exact pixel
    coverage, the raster is blurred with edge_blur_sigma, and edge effect
    bumps are added at the displaced edge positions before clamping to
    [0, 1]. Rows where edges collapse, cross a neighbor, or leave the
    raster raise with the first offending row named.
    """
    width = int(width)
    height = int(height)
    if width < 8 or height < 8:
        raise ValueError("raster must be at least 8x8")
    traces = [np.asarray(t, dtype=np.float64) for t in edge_traces]
    if len(traces) != 2 * spec.n_lines:
        raise ValueError(
            f"need {2 * spec.n_lines} edge traces, got {len(traces)}")
    for t in traces:
        if t.shape != (height,):
            raise ValueError("every edge trace must have length equal to height")

    width_nm = width * pixel_size
    nominal = nominal_edge_positions(spec, width_nm)
    positions = np.stack([nominal[e] + traces[e] for e in range(len(traces))],
                         axis=1)

    inside = (positions > 0.0) & (positions < width_nm)
    ordered = np.diff(positions, axis=1) > 0.0
    bad = ~(inside.all(axis=1) & ordered.all(axis=1))
    if np.any(bad):
        row = int(np.argmax(bad))
        raise ValueError(
            f"edge ordering violated at row {row}: displaced edges collapse, "
            f"cross, or leave the raster")

    pixel_lo = np.arange(width) * pixel_size
    samples = np.full((height, width), spec.space_level)
    swing = spec.line_level - spec.space_level
    for i in range(spec.n_lines):
        left = positions[:, 2 * i][:, None]
        right = positions[:, 2 * i + 1][:, None]
        coverage = (np.clip((right - pixel_lo) / pixel_size, 0.0, 1.0)
                    - np.clip((left - pixel_lo) / pixel_size, 0.0, 1.0))
        samples += swing * coverage

    if spec.edge_blur_sigma > 0:
        samples = gaussian_filter(samples, sigma=spec.edge_blur_sigma / pixel_size,
                                  mode="reflect")

    if spec.edge_effect_amplitude > 0:
        centers = pixel_lo + pixel_size / 2.0
        w2 = 2.0 * spec.edge_effect_width ** 2
        for e in range(positions.shape[1]):
            offsets = centers[None, :] - positions[:, e][:, None]
            samples += spec.edge_effect_amplitude * np.exp(-offsets ** 2 / w2)

    samples = np.clip(samples, 0.0, 1.0)
    return GrayImage(samples=samples, pixel_size=pixel_size)


def _poisson_frame(ideal_samples, electrons, seed, frame_index):
    """Poisson counts of one frame, from its own counter-based substream.

    Each frame takes a disjoint 2^192-wide counter block of a Philox
    stream keyed by the seed, so a frame's counts depend only on (seed,
    frame_index, pixel) and never on how many frames are simulated.
    """
    bitgen = np.random.Philox(key=int(seed), counter=[0, 0, 0, int(frame_index)])
    rng = np.random.Generator(bitgen)
    return rng.poisson(electrons * ideal_samples).astype(np.float64)


def simulate_frames(ideal, noise):
    """Average Poisson frames of an ideal image and rescale to [0, 1].

    Frame k of any run shares its substream with frame k of every other
    run at the same seed, so the first four frames of a 64-frame average
    are identical to a 4-frame average's frames. A zero ideal image stays
    exactly zero (Poisson at rate 0).
    """
    electrons = noise.electrons_per_pixel_per_frame
    acc = np.zeros_like(ideal.samples)
    for k in range(noise.n_frames):
        acc += _poisson_frame(ideal.samples, electrons, noise.seed, k)
    samples = np.clip(acc / (noise.n_frames * electrons), 0.0, 1.0)
    return GrayImage(samples=samples, pixel_size=ideal.pixel_size,
                     bit_depth_source=ideal.bit_depth_source)


@dataclass(frozen=True)
class GroundTruth:
    """Everything needed to score an analysis of one synthetic image."""

    roughness: PalasantzasParams
    model: int
    pattern: PatternSpec
    noise: NoiseSpec
    pixel_size: float
    width: int
    height: int
    edges_nm: np.ndarray  # (2 * n_lines, height) absolute positions

    def width_traces(self):
        return self.edges_nm[1::2] - self.edges_nm[0::2]


def write_truth(truth, path):
    payload = {
        "roughness": asdict(truth.roughness),
        "model": truth.model,
        "pattern": asdict(truth.pattern),
        "noise": asdict(truth.noise),
        "pixel_size_nm": truth.pixel_size,
        "width_px": truth.width,
        "height_px": truth.height,
        "edges_nm": np.asarray(truth.edges_nm).tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def load_truth(path):
    payload = json.loads(Path(path).read_text())
    return GroundTruth(
        roughness=PalasantzasParams(**payload["roughness"]),
        model=int(payload["model"]),
        pattern=PatternSpec(**payload["pattern"]),
        noise=NoiseSpec(**payload["noise"]),
        pixel_size=float(payload["pixel_size_nm"]),
        width=int(payload["width_px"]),
        height=int(payload["height_px"]),
        edges_nm=np.array(payload["edges_nm"], dtype=np.float64),
    )


def trace_seed(master_seed, *indices):
    """Stable 64-bit stream seed derived from a master seed and indices."""
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=tuple(int(i) for i in indices))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def synthesize(roughness, pattern, noise, model=1, width=None, height=512,
               pixel_size=0.8, trace_master_seed=None):
    """Convenience path from parameters to (noisy image, ground truth).

    Edge trace seeds derive from ``trace_master_seed`` (default: the noise
    seed) and the edge index only, so reruns with a different frame count
    reuse identical true edges. ``width`` defaults to the pattern plus one
    pitch of margin.
    """
    if width is None:
        width = int(np.ceil((pattern.n_lines + 1) * pattern.pitch / pixel_size))
    if trace_master_seed is None:
        trace_master_seed = noise.seed
    traces = [sample_edge_trace(roughness, model, height, pixel_size,
                                trace_seed(trace_master_seed, 1, e))
              for e in range(2 * pattern.n_lines)]
    ideal = render_pattern(pattern, traces, width, height, pixel_size)
    noisy = simulate_frames(ideal, noise)
    nominal = nominal_edge_positions(pattern, width * pixel_size)
    edges_nm = np.stack([nominal[e] + traces[e] for e in range(len(traces))])
    truth = GroundTruth(roughness=roughness, model=model, pattern=pattern,
                        noise=noise, pixel_size=pixel_size, width=width,
                        height=height, edges_nm=edges_nm)
    return noisy, truth
