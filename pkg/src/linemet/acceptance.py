"""Self-generating verification suite behind ``linemet acceptance``.

Every criterion synthesizes its own data from the seed, measures one
quantitative claim about the toolkit, and returns a verdict dictionary
{name, measured, bound, pass}. ``run_all`` executes all ten in a fixed
order; reruns with the same seed reproduce every measured value exactly.

The image-grid criteria share one frozen operating point: 16 nm lines on a
32 nm pitch at 0.8 nm pixels, sigma 0.6 nm, xi 20 nm, hurst 0.75, plateau
swing 0.0686 around mid-gray at 120 electrons/pixel/frame. That point was
tuned so the 4-frame images land just below linescan SNR 2 while every
higher frame count stays analyzable, which is exactly the regime the
roughness-unbiasing claims are about.
"""

import csv
import filecmp
import json
import os
import shutil

import numpy as np

from .edges import EdgeDetectParams, EdgeDetectionError, EdgeSet
from .denoise import DenoiserSpec, denoise
from .pipeline import AnalysisConfig, analyze_image, realized_width_sigma
from .psd import (PsdConfig, PsdCurve, compute_psd, fit_palasantzas,
                  palasantzas_model, psd0_for_sigma, roughness_report)
from .snr import Histogram, fit_bimodal
from .synthetic import (NoiseSpec, PalasantzasParams, PatternSpec,
                        sample_edge_trace, synthesize)

PIXEL = 0.8
ROWS = 512
SWING = 0.0686
DOSE = 120.0
ROUGHNESS = PalasantzasParams(sigma=0.6, xi=20.0, hurst=0.75)
PATTERN = PatternSpec(cd=16.0, pitch=32.0, n_lines=10,
                      line_level=0.5 + SWING / 2.0,
                      space_level=0.5 - SWING / 2.0)
ANALYSIS = AnalysisConfig(edges=EdgeDetectParams(poly_order=5, fit_halfwidth=5))
FRAME_LADDER = (4, 8, 16, 32, 64)
SNR_RELIABLE = 2.0
# Tall images push the first ten included PSD bins below the correlation
# knee, where the roughness signal dwarfs both detection-noise residues.
# The wide fit window keeps row rejection and the soft compression of
# large excursions negligible even on the 4-frame member, so the three
# spectra stay comparable bin by bin.
TRIPLE_ROWS = 2048
TRIPLE_ANALYSIS = AnalysisConfig(
    edges=EdgeDetectParams(poly_order=5, fit_halfwidth=7))


def _verdict(name, measured, bound, ok):
    return {"name": name, "measured": measured, "bound": bound,
            "pass": bool(ok)}


def _pmap(fn, items, jobs):
    from .cli import _pmap as pool_map

    return pool_map(fn, items, jobs)


# --------------------------------------------------- 1: PSD normalization

def criterion_parseval(seed):
    """Area under the one-sided periodogram equals the detrended variance."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        length = 2 * int(rng.integers(32, 1025))
        scale = 10.0 ** rng.uniform(-2.0, 2.0)
        trace = rng.normal(0.0, scale, length) + rng.uniform(-5.0, 5.0)
        curve = compute_psd(trace, PIXEL)
        area = float(curve.density.sum() * curve.df)
        variance = float(np.var(trace))
        worst = max(worst, abs(area - variance) / variance)
    return _verdict("psd_parseval", worst, 1e-9, worst < 1e-9)


# ----------------------------------------------- 2: synthesis vs model

def log_bands(start, stop, per_decade=8, min_bins=16):
    """Contiguous index bands, geometrically spaced, each >= min_bins wide.

    Band averages tame the chi-squared scatter of single periodogram bins,
    which at a few hundred averaged traces would otherwise swamp a
    10 percent bin-level comparison.
    """
    bands = []
    lo = start
    while lo < stop:
        hi = max(int(round(lo * 10.0 ** (1.0 / per_decade))), lo + min_bins)
        hi = min(hi, stop)
        if stop - hi < min_bins:
            hi = stop
        bands.append((lo, hi))
        lo = hi
    return bands


def criterion_synthesis(seed):
    """Averaged periodogram of synthesized traces matches the target model."""
    params = PalasantzasParams(sigma=1.0, xi=20.0, hurst=0.75)
    traces = np.stack([sample_edge_trace(params, 1, 2048, PIXEL, seed * 7 + k)
                       for k in range(200)])
    curve = compute_psd(traces, PIXEL)
    psd0 = psd0_for_sigma(1.0, 20.0, hurst=0.75)
    model = palasantzas_model(curve.frequencies, psd0, 20.0, hurst=0.75)
    half = curve.density.size // 2
    worst = 0.0
    for lo, hi in log_bands(PsdConfig().low_freq_exclusion, half):
        ratio = curve.density[lo:hi].mean() / model[lo:hi].mean()
        worst = max(worst, abs(ratio - 1.0))
    measured = 100.0 * worst
    return _verdict("spectral_synthesis_midband_pct", measured, 10.0,
                    measured < 10.0)


# ------------------------------------- 3/4/5: frame ladder (shared grid)

def _ladder_case(task):
    seed, frames = task
    noise = NoiseSpec(electrons_per_pixel_per_frame=DOSE, n_frames=frames,
                      seed=seed)
    image, truth = synthesize(ROUGHNESS, PATTERN, noise, height=ROWS,
                              pixel_size=PIXEL, trace_master_seed=seed)
    try:
        report = analyze_image(image, ANALYSIS)
    except EdgeDetectionError as exc:
        return {"frames": frames, "seed": seed, "abort": str(exc)}
    sigma_true = realized_width_sigma(truth, report.edges.kept_rows)
    sigma_meas = report.roughness.lwr.fit.sigma_unbiased
    return {"frames": frames, "seed": seed, "abort": None,
            "snr": report.snr.linescan_snr,
            "err_pct": abs(sigma_meas - sigma_true) / sigma_true * 100.0}


def run_frame_ladder(seed, jobs, n_seeds=50):
    tasks = [(seed + k, frames) for frames in FRAME_LADDER
             for k in range(n_seeds)]
    cases = _pmap(_ladder_case, tasks, jobs)
    ladder = {}
    for frames in FRAME_LADDER:
        rows = [c for c in cases if c["frames"] == frames]
        aborts = [c for c in rows if c["abort"]]
        good = [c for c in rows if not c["abort"]]
        ladder[frames] = {
            "aborts": len(aborts),
            "snr_median": float(np.median([c["snr"] for c in good]))
            if good else float("nan"),
            "err_median_pct": float(np.median([c["err_pct"] for c in good]))
            if good else float("nan"),
            "cases": good,
        }
    return ladder


def criterion_unbias(ladder):
    """Median recovery error <= 10% wherever median SNR clears 2."""
    aborts = sum(stats["aborts"] for stats in ladder.values())
    qualifying = [f for f, stats in ladder.items()
                  if stats["snr_median"] > SNR_RELIABLE]
    worst = max(ladder[f]["err_median_pct"] for f in qualifying)
    ok = aborts == 0 and bool(qualifying) and worst <= 10.0
    measured = (f"worst qualifying median {worst:.2f}% over frames "
                f"{qualifying}, {aborts} aborts")
    return _verdict("unbiasing_accuracy", measured,
                    "<= 10% at every frame count with median SNR > 2", ok)


def criterion_low_snr(ladder):
    """Error medians fall with frames; the sub-2-SNR point is beyond 10%."""
    frames = sorted(ladder)
    errs = [ladder[f]["err_median_pct"] for f in frames]
    monotone = all(a >= b for a, b in zip(errs, errs[1:]))
    snr4 = ladder[4]["snr_median"]
    ok = monotone and snr4 < SNR_RELIABLE and errs[0] > 10.0
    measured = ("medians " + "/".join(f"{e:.2f}" for e in errs) +
                f"% for frames {frames}, 4-frame SNR {snr4:.2f}")
    return _verdict("low_snr_breakdown", measured,
                    "nonincreasing in frames; 4-frame point SNR < 2 and "
                    "error > 10%", ok)


def criterion_frame_scaling(ladder):
    """SNR grows with the square root of the frame count."""
    by4 = {c["seed"]: c["snr"] for c in ladder[4]["cases"]}
    by64 = {c["seed"]: c["snr"] for c in ladder[64]["cases"]}
    shared = sorted(set(by4) & set(by64))[:20]
    ratios = [by64[s] / by4[s] for s in shared]
    measured = float(np.mean(ratios))
    ok = len(ratios) == 20 and abs(measured - 4.0) <= 0.15 * 4.0
    return _verdict("frame_snr_scaling", measured, "4.0 within 15%", ok)


# --------------------------------- 6/7/8: denoising triples (shared grid)

def _restrict_rows(edge_set, rows):
    """The same edge set cut down to an explicit set of kept rows."""
    mask = np.isin(edge_set.kept_rows, rows)
    lines = [(left[mask], right[mask]) for left, right in edge_set.lines]
    return EdgeSet(lines=lines, rows=int(rows.size),
                   pixel_size=edge_set.pixel_size, params=edge_set.params,
                   kept_rows=rows)


def _triple_case(task):
    """One matched noisy-4 / denoised-4 / noisy-64 comparison.

    All three images share the same true edges. Each image rejects its
    own borderline rows, and rejections censor the largest excursions, so
    the spectra are compared on the intersection of the kept rows: that
    way all three curves see the identical true trace and differ only by
    their measurement noise.
    """
    (seed,) = task
    noise4 = NoiseSpec(electrons_per_pixel_per_frame=DOSE, n_frames=4,
                       seed=seed)
    noise64 = NoiseSpec(electrons_per_pixel_per_frame=DOSE, n_frames=64,
                        seed=seed)
    img4, truth = synthesize(ROUGHNESS, PATTERN, noise4, height=TRIPLE_ROWS,
                             pixel_size=PIXEL, trace_master_seed=seed)
    img64, _ = synthesize(ROUGHNESS, PATTERN, noise64, height=TRIPLE_ROWS,
                          pixel_size=PIXEL, trace_master_seed=seed)
    den4 = denoise(img4, DenoiserSpec(kind="nlmeans"))
    reports = [analyze_image(img, TRIPLE_ANALYSIS)
               for img in (img4, den4, img64)]
    r4, rd, r64 = reports

    common = r4.edges.kept_rows
    for report in (rd, r64):
        common = np.intersect1d(common, report.edges.kept_rows)

    def curves(report):
        lwr = roughness_report(_restrict_rows(report.edges, common),
                               TRIPLE_ANALYSIS.psd).lwr
        return {"freq": lwr.biased.frequencies, "biased": lwr.biased.density,
                "unbiased": lwr.unbiased.density}

    return {"seed": seed,
            "snr_noisy": r4.snr.linescan_snr,
            "snr_denoised": rd.snr.linescan_snr,
            "cd_noisy": r4.cd.mean_cd, "cd_denoised": rd.cd.mean_cd,
            "noisy4": curves(r4), "den4": curves(rd), "noisy64": curves(r64)}


def run_denoise_triples(seed, jobs, n_seeds=20):
    return _pmap(_triple_case, [(seed + k,) for k in range(n_seeds)], jobs)


def criterion_cd_invariance(triples):
    """Denoising moves the mean CD by less than 5% on every image."""
    deltas = [abs(t["cd_noisy"] - t["cd_denoised"]) / t["cd_noisy"] * 100.0
              for t in triples]
    worst = max(deltas)
    return _verdict("denoise_cd_invariance_pct", worst, 5.0, worst < 5.0)


def criterion_snr_improvement(triples):
    """Denoising raises the linescan SNR on every image."""
    gains = [t["snr_denoised"] - t["snr_noisy"] for t in triples]
    worst = min(gains)
    return _verdict("denoise_snr_gain_min", worst, "> 0 on all 20 images",
                    worst > 0.0)


def _mean_on_grid(triples, key, which, grid):
    stack = [np.interp(grid, t[key]["freq"], t[key][which])
             for t in triples]
    return np.mean(stack, axis=0)


def criterion_psd_structure(triples):
    """Denoising drops the high-frequency floor but preserves low bins.

    Seed-averaged curves: the denoised biased spectrum must sit below the
    noisy one over the top half of the band, while the unbiased low bins
    of noisy, denoised, and 64-frame curves agree within 15%.

    Kept-row counts differ per image, so curve lengths differ. All share
    the same Nyquist and the shortest curve has the highest first
    frequency, so its grid lies inside every support; everything is
    resampled onto it before averaging.
    """
    keys = ("noisy4", "den4", "noisy64")
    freq = min((t[k]["freq"] for t in triples for k in keys), key=len)
    noisy_b = _mean_on_grid(triples, "noisy4", "biased", freq)
    den_b = _mean_on_grid(triples, "den4", "biased", freq)
    half = freq.size // 2
    below = float(np.mean(den_b[half:] < noisy_b[half:]))

    lfe = PsdConfig().low_freq_exclusion
    low = slice(lfe, lfe + 10)
    curves = [_mean_on_grid(triples, key, "unbiased", freq)[low]
              for key in keys]
    stack = np.stack(curves)
    spread = (stack.max(axis=0) - stack.min(axis=0)) / stack.mean(axis=0)
    worst_spread = float(100.0 * spread.max())
    ok = below >= 0.95 and worst_spread <= 15.0
    measured = (f"{100 * below:.1f}% of top-half bins lower; worst low-bin "
                f"spread {worst_spread:.2f}%")
    return _verdict("psd_structure", measured,
                    ">= 95% bins lower and <= 15% low-bin spread", ok)


# ------------------------------------------ 9: estimator self-consistency

def criterion_estimators(seed):
    """Both fitters recover known parameters, exactly and under noise."""
    rng = np.random.default_rng(seed + 17)
    failures = []

    centers = (np.arange(256) + 0.5) / 256.0
    true = np.array([3000.0, 0.3, 0.05, 2000.0, 0.7, 0.04])
    counts = (true[0] * np.exp(-((centers - true[1]) ** 2) / (2 * true[2] ** 2))
              + true[3] * np.exp(-((centers - true[4]) ** 2) / (2 * true[5] ** 2)))
    fit = fit_bimodal(Histogram(centers, counts))
    got = np.array([fit.m1, fit.i1, fit.s1, fit.m2, fit.i2, fit.s2])
    clean_err = float(100.0 * np.max(np.abs(got / true - 1.0)))
    if clean_err >= 1.0:
        failures.append(f"bimodal clean {clean_err:.3f}%")

    samples = np.concatenate([rng.normal(0.3, 0.05, 180000),
                              rng.normal(0.7, 0.04, 120000)])
    counts_mc, edges = np.histogram(samples, bins=256, range=(0.0, 1.0))
    hist = Histogram((edges[:-1] + edges[1:]) / 2.0, counts_mc.astype(float))
    fit_mc = fit_bimodal(hist)
    mc_err = 100.0 * max(abs(fit_mc.i1 / 0.3 - 1.0), abs(fit_mc.i2 / 0.7 - 1.0),
                         abs(fit_mc.s1 / 0.05 - 1.0), abs(fit_mc.s2 / 0.04 - 1.0))
    if mc_err >= 5.0:
        failures.append(f"bimodal mc {mc_err:.3f}%")

    length = 1024
    freqs = np.arange(1, length // 2 + 1) / (length * PIXEL)
    psd0 = psd0_for_sigma(1.0, 20.0, hurst=0.75)
    floor = 0.4
    density = palasantzas_model(freqs, psd0, 20.0, hurst=0.75) + floor
    curve = PsdCurve(frequencies=freqs, density=density, n_traces_averaged=1,
                     trace_length=length, pixel_size=PIXEL, detrend="mean")
    pfit = fit_palasantzas(curve)
    pal_err = 100.0 * max(abs(pfit.psd0 / psd0 - 1.0),
                          abs(pfit.xi / 20.0 - 1.0),
                          abs(pfit.hurst / 0.75 - 1.0),
                          abs(pfit.noise_floor / floor - 1.0))
    if pal_err >= 1.0:
        failures.append(f"palasantzas clean {pal_err:.3f}%")

    params = PalasantzasParams(sigma=1.0, xi=20.0, hurst=0.75)
    clean = np.stack([sample_edge_trace(params, 1, length, PIXEL,
                                        seed * 11 + 3 + k)
                      for k in range(64)])
    sigma_e = 0.35
    noisy = clean + rng.normal(0.0, sigma_e, clean.shape)
    mfit = fit_palasantzas(compute_psd(noisy, PIXEL))
    sigma_real = float(np.sqrt(np.mean(np.var(clean, axis=1))))
    mc_pal_err = 100.0 * abs(mfit.sigma_unbiased / sigma_real - 1.0)
    if mc_pal_err >= 5.0:
        failures.append(f"palasantzas mc {mc_pal_err:.3f}%")

    measured = (f"clean {clean_err:.4f}%/{pal_err:.4f}%, "
                f"mc {mc_err:.2f}%/{mc_pal_err:.2f}%")
    return _verdict("estimator_self_consistency", measured,
                    "clean < 1%, noisy < 5%", not failures)


# ----------------------------------------------------- 10: determinism

def _numeric_leaves(node, out):
    if isinstance(node, dict):
        for v in node.values():
            _numeric_leaves(v, out)
    elif isinstance(node, (list, tuple)):
        for v in node:
            _numeric_leaves(v, out)
    elif isinstance(node, (int, float)) and not isinstance(node, bool):
        out.append(float(node))


def criterion_determinism(seed, jobs, out_dir):
    """generate + analyze rerun bit- and value-identically."""
    from .cli import main

    base = os.path.join(out_dir, "determinism")
    shutil.rmtree(base, ignore_errors=True)
    worst = 0.0
    identical = True
    dirs = []
    for tag in ("a", "b"):
        gen = os.path.join(base, f"gen_{tag}")
        rep = os.path.join(base, f"rep_{tag}")
        args = ["generate", "--out", gen, "--seed", str(seed),
                "--jobs", str(jobs), "--frames", "4,64", "--seeds", "2",
                "--lines", "4", "--rows", "256", "--sigma", "0.5",
                "--dose", "200.0", "--contrast", "0.12"]
        if main(args) != 0:
            return _verdict("determinism", f"generate failed in {gen}",
                            "exit 0", False)
        pgms = sorted(p for p in os.listdir(gen) if p.endswith(".pgm"))
        if main(["analyze", os.path.join(gen, "*.pgm"), "--out", rep,
                 "--seed", str(seed), "--jobs", str(jobs)]) != 0:
            return _verdict("determinism", f"analyze failed in {rep}",
                            "exit 0", False)
        dirs.append((gen, rep, pgms))

    (gen_a, rep_a, pgms_a), (gen_b, rep_b, pgms_b) = dirs
    identical &= pgms_a == pgms_b
    for name in pgms_a:
        identical &= filecmp.cmp(os.path.join(gen_a, name),
                                 os.path.join(gen_b, name), shallow=False)
    for name in sorted(p for p in os.listdir(rep_a) if p.endswith(".json")):
        with open(os.path.join(rep_a, name)) as fh:
            va = []
            _numeric_leaves(json.load(fh), va)
        with open(os.path.join(rep_b, name)) as fh:
            vb = []
            _numeric_leaves(json.load(fh), vb)
        if len(va) != len(vb):
            identical = False
            continue
        for x, y in zip(va, vb):
            scale = max(abs(x), abs(y), 1e-300)
            worst = max(worst, abs(x - y) / scale)
    ok = identical and worst <= 1e-12
    measured = f"bytes identical: {identical}, worst numeric delta {worst:.2e}"
    return _verdict("determinism", measured,
                    "byte-identical images, reports equal to 1e-12", ok)


# ------------------------------------------------------------- the suite

def write_ladder_csv(ladder, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frames", "aborts", "snr_median", "err_median_pct"])
        for frames in sorted(ladder):
            stats = ladder[frames]
            writer.writerow([frames, stats["aborts"],
                             f"{stats['snr_median']:.6g}",
                             f"{stats['err_median_pct']:.6g}"])


def run_all(seed=1000, jobs=0, out_dir="."):
    """Run the ten verification criteria and return their verdicts."""
    os.makedirs(out_dir, exist_ok=True)
    verdicts = [criterion_parseval(seed), criterion_synthesis(seed)]
    ladder = run_frame_ladder(seed, jobs)
    write_ladder_csv(ladder, os.path.join(out_dir, "ladder.csv"))
    verdicts += [criterion_unbias(ladder), criterion_low_snr(ladder),
                 criterion_frame_scaling(ladder)]
    triples = run_denoise_triples(seed, jobs)
    verdicts += [criterion_cd_invariance(triples),
                 criterion_snr_improvement(triples),
                 criterion_psd_structure(triples),
                 criterion_estimators(seed),
                 criterion_determinism(seed, jobs, out_dir)]
    return verdicts
