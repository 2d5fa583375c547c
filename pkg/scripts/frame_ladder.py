"""Frame-averaging ladder: SNR and roughness recovery versus dose.

Synthesizes the same rough line/space pattern at a ladder of frame
counts, analyzes every image, and tabulates the median linescan SNR and
the biased/unbiased LWR sigma errors against the realized ground truth.
The unbiased column should stay flat while the biased one blows up as
frames drop; the CSV holds one row per image for finer slicing.

Run from the repository root:

    python scripts/frame_ladder.py --out ladder.csv
    python scripts/frame_ladder.py --frames 4,16,64 --seeds 10 --plot ladder.png
"""

import argparse
import csv
import sys

import numpy as np

from linemet import (AnalysisConfig, EdgeDetectionError, EdgeDetectParams,
                     NoiseSpec, PalasantzasParams, PatternSpec, analyze_image,
                     realized_width_sigma, synthesize)

COLUMNS = ["frames", "seed", "snr", "cd_nm", "sigma_true_nm",
           "err_biased_pct", "err_unbiased_pct"]


def int_list(text):
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def build_parser():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int_list, default=(4, 8, 16, 32, 64))
    parser.add_argument("--seeds", type=int, default=5, help="images per rung")
    parser.add_argument("--seed0", type=int, default=2000)
    parser.add_argument("--sigma", type=float, default=0.6)
    parser.add_argument("--xi", type=float, default=20.0)
    parser.add_argument("--hurst", type=float, default=0.75)
    parser.add_argument("--contrast", type=float, default=0.0686)
    parser.add_argument("--dose", type=float, default=120.0)
    parser.add_argument("--cd", type=float, default=16.0)
    parser.add_argument("--pitch", type=float, default=32.0)
    parser.add_argument("--lines", type=int, default=10)
    parser.add_argument("--rows", type=int, default=512)
    parser.add_argument("--out", default=None, help="per-image CSV path")
    parser.add_argument("--plot", default=None, help="summary PNG path")
    return parser


def run_cell(frames, seed, args, config):
    rough = PalasantzasParams(sigma=args.sigma, xi=args.xi, hurst=args.hurst)
    pattern = PatternSpec(cd=args.cd, pitch=args.pitch, n_lines=args.lines,
                          line_level=0.5 + args.contrast / 2.0,
                          space_level=0.5 - args.contrast / 2.0)
    noise = NoiseSpec(electrons_per_pixel_per_frame=args.dose,
                      n_frames=frames, seed=seed)
    image, truth = synthesize(rough, pattern, noise, height=args.rows,
                              trace_master_seed=seed)
    report = analyze_image(image, config)
    true_sigma = realized_width_sigma(truth, report.edges.kept_rows)
    fit = report.roughness.lwr.fit
    return {
        "frames": frames,
        "seed": seed,
        "snr": report.snr.linescan_snr,
        "cd_nm": report.cd.mean_cd,
        "sigma_true_nm": true_sigma,
        "err_biased_pct":
            100.0 * abs(fit.sigma_biased - true_sigma) / true_sigma,
        "err_unbiased_pct":
            100.0 * abs(fit.sigma_unbiased - true_sigma) / true_sigma,
    }


def summarize(rows, frames):
    rung = [r for r in rows if r["frames"] == frames]
    med = lambda key: float(np.median([r[key] for r in rung]))
    return med("snr"), med("err_biased_pct"), med("err_unbiased_pct")


def plot_summary(rows, frame_counts, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    stats = np.array([summarize(rows, f) for f in frame_counts])
    fig, (ax_snr, ax_err) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_snr.plot(frame_counts, stats[:, 0], "o-")
    ax_snr.set(xlabel="frames", ylabel="median linescan SNR", xscale="log")
    ax_err.plot(frame_counts, stats[:, 1], "s--", label="biased")
    ax_err.plot(frame_counts, stats[:, 2], "o-", label="unbiased")
    ax_err.set(xlabel="frames", ylabel="median LWR sigma error [%]",
               xscale="log")
    ax_err.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    print(f"wrote {path}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    config = AnalysisConfig(edges=EdgeDetectParams(poly_order=5,
                                                   fit_halfwidth=5))
    rows, aborts = [], 0
    for frames in args.frames:
        for index in range(args.seeds):
            try:
                rows.append(run_cell(frames, args.seed0 + index, args, config))
            except EdgeDetectionError as exc:
                aborts += 1
                print(f"abort at frames={frames} seed={args.seed0 + index}: "
                      f"{exc}", file=sys.stderr)

    print(f"{'frames':>6} {'snr_med':>8} {'err_biased%':>12} "
          f"{'err_unbiased%':>14}")
    for frames in args.frames:
        snr, biased, unbiased = summarize(rows, frames)
        print(f"{frames:>6} {snr:>8.3f} {biased:>12.2f} {unbiased:>14.2f}")
    if aborts:
        print(f"{aborts} images aborted", file=sys.stderr)

    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {args.out}")
    if args.plot:
        plot_summary(rows, args.frames, args.plot)
    return 0 if not aborts else 1


if __name__ == "__main__":
    sys.exit(main())
