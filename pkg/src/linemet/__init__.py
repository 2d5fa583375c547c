"""Line-space SEM metrology toolkit.

Linescan SNR from two-Gaussian histogram fits, sub-pixel edge detection
with mean CD statistics, and noise-unbiased LER/LWR power spectral density
analysis, validated end to end against a built-in synthetic image
generator with known ground truth roughness and Poisson frame noise.
"""

from .image import GrayImage, PgmError, load_image, save_image
from .synthetic import (GroundTruth, NoiseSpec, PalasantzasParams,
                        PatternSpec, load_truth, nominal_edge_positions,
                        render_pattern, sample_edge_trace, simulate_frames,
                        synthesize, trace_seed, write_truth)
from .snr import (Histogram, HistogramFit, SnrReport, fit_bimodal,
                  grayscale_histogram, linescan_snr, quantile_init, snr_db,
                  snr_delta)
from .edges import (CdReport, EdgeDetectionError, EdgeDetectParams, EdgeSet,
                    cd_delta, detect_edges, mean_cd, width_trace)
from .psd import (PalasantzasFit, PsdBundle, PsdConfig, PsdCurve,
                  RoughnessReport, compute_psd, fit_palasantzas,
                  palasantzas_model, psd0_for_sigma, roughness_report, unbias)
from .denoise import DenoiseComparison, DenoiserSpec, denoise, evaluate_denoiser
from .pipeline import (AnalysisConfig, ImageReport, analyze_image,
                       realized_edge_sigma, realized_width_sigma,
                       report_to_dict)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
