"""Batch command line front end.

Subcommands
    generate    synthetic line/space image grids with .truth.json sidecars
    analyze     per-image reports (JSON), PSD and edge CSVs, summary.csv
    compare     noisy/denoised pair table plus an SNR-vs-roughness scatter
    acceptance  self-generating end-to-end verification suite

Artifact schemas are stable (schema v1) and pinned by golden tests:
    summary.csv   id,path,snr,cd_nm,cd_std_nm,ler3s_biased_nm,
                  ler3s_unbiased_nm,lwr3s_biased_nm,lwr3s_unbiased_nm,
                  xi_nm,hurst,noise_floor_nm3,rows_kept,error
    compare.csv   id,frames,snr_noisy,snr_denoised,dsnr_pct,cd_noisy_nm,
                  cd_denoised_nm,dcd_pct,ulwr3s_noisy_nm,ulwr3s_denoised_nm,
                  sigma_true_nm
    scatter.csv   id,frames,side,snr,ulwr3s_nm
    edges csv     row,line,left_nm,right_nm

A flat key=value config file (--config) supplies defaults for any long flag
of the chosen subcommand (key = flag name with dashes as underscores);
explicit flags win. Exit codes: 0 success, 1 any per-image or criterion
failure, 2 bad usage or bad config.
"""

import argparse
import csv
import glob
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .denoise import DenoiserSpec, denoise
from .edges import EdgeDetectParams, cd_delta
from .image import PgmError, load_image, save_image
from .pipeline import (AnalysisConfig, analyze_image, realized_width_sigma,
                       report_to_dict, write_psd_csv, write_report_json)
from .psd import PsdConfig
from .snr import snr_delta
from .synthetic import (NoiseSpec, PalasantzasParams, PatternSpec, load_truth,
                        synthesize, write_truth)

SUMMARY_COLUMNS = ["id", "path", "snr", "cd_nm", "cd_std_nm",
                   "ler3s_biased_nm", "ler3s_unbiased_nm", "lwr3s_biased_nm",
                   "lwr3s_unbiased_nm", "xi_nm", "hurst", "noise_floor_nm3",
                   "rows_kept", "error"]
COMPARE_COLUMNS = ["id", "frames", "snr_noisy", "snr_denoised", "dsnr_pct",
                   "cd_noisy_nm", "cd_denoised_nm", "dcd_pct",
                   "ulwr3s_noisy_nm", "ulwr3s_denoised_nm", "sigma_true_nm"]
SCATTER_COLUMNS = ["id", "frames", "side", "snr", "ulwr3s_nm"]


class ConfigError(ValueError):
    """Bad config file or flag combination (exit code 2)."""


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters of one CLI run."""

    command: str
    inputs: tuple = ()
    out: str = "."
    seed: int = 1000
    jobs: int = 0


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])


def _pmap(fn, items, jobs):
    """Order-preserving map over a worker pool (jobs 0 = auto, 1 = inline)."""
    items = list(items)
    if jobs == 0:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=1))


def _ensure_outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {path!r} is not writable: {exc}")
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path!r} is not writable")


def _int_list(text):
    try:
        return tuple(int(tok) for tok in str(text).split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma list of ints: {text!r}")


def _float_list(text):
    try:
        return tuple(float(tok) for tok in str(text).split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma list of floats: {text!r}")


# ---------------------------------------------------------------- generate

def _gen_task_name(frames, contrast, index):
    return f"img_f{frames:02d}_c{contrast:.4f}_s{index:05d}"


def _gen_worker(task):
    (path, truth_path, rough, pattern, noise, model, rows, pixel) = task
    image, truth = synthesize(rough, pattern, noise, model=model,
                              height=rows, pixel_size=pixel,
                              trace_master_seed=noise.seed)
    save_image(image, path)
    write_truth(truth, truth_path)
    return path


def cmd_generate(ns):
    _ensure_outdir(ns.out)
    try:
        rough = PalasantzasParams(sigma=ns.sigma, xi=ns.xi, hurst=ns.hurst,
                                  exponent_free=ns.exponent)
        tasks = []
        for contrast in ns.contrast:
            pattern = PatternSpec(cd=ns.cd, pitch=ns.pitch, n_lines=ns.lines,
                                  line_level=0.5 + contrast / 2.0,
                                  space_level=0.5 - contrast / 2.0,
                                  edge_blur_sigma=ns.blur)
            for frames in ns.frames:
                for index in range(ns.seeds):
                    noise = NoiseSpec(electrons_per_pixel_per_frame=ns.dose,
                                      n_frames=frames, seed=ns.seed + index)
                    stem = os.path.join(ns.out,
                                        _gen_task_name(frames, contrast, index))
                    tasks.append((stem + ".pgm", stem + ".truth.json", rough,
                                  pattern, noise, ns.model, ns.rows,
                                  ns.pixel_size_nm))
    except ValueError as exc:
        raise ConfigError(str(exc))
    paths = _pmap(_gen_worker, tasks, ns.jobs)
    print(f"generated {len(paths)} images under {ns.out}")
    return 0


# ----------------------------------------------------------------- analyze

def _analysis_config(ns):
    try:
        edges = EdgeDetectParams(threshold_fraction=ns.threshold_fraction,
                                 poly_order=ns.poly_order,
                                 fit_halfwidth=ns.fit_halfwidth,
                                 smoothing_halfwidth=ns.smoothing_halfwidth,
                                 min_run=ns.min_run)
        psd = PsdConfig(low_freq_exclusion=ns.low_freq_exclusion,
                        window=ns.window, model=ns.model)
        return AnalysisConfig(bins=ns.bins, histogram_border=ns.border,
                              edges=edges, psd=psd)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _expand_inputs(patterns, skip_denoised=False):
    paths = []
    for pattern in patterns:
        hits = sorted(glob.glob(pattern))
        paths.extend(hits if hits else [pattern])
    paths = [p for p in paths if p.endswith(".pgm")]
    if skip_denoised:
        paths = [p for p in paths if not p.endswith(".denoised.pgm")]
    seen, unique = set(), []
    for p in paths:
        if p not in seen:
            seen.add(p)
            unique.append(p)
    return unique


def _write_edges_csv(edge_set, path):
    rows = []
    for line_index, (left, right) in enumerate(edge_set.lines):
        for k in range(edge_set.rows):
            rows.append({"row": int(edge_set.kept_rows[k]), "line": line_index,
                         "left_nm": float(left[k]), "right_nm": float(right[k])})
    _write_csv(path, ["row", "line", "left_nm", "right_nm"], rows)


def _analyze_worker(task):
    path, out_dir, pixel_override, config = task
    image_id = os.path.splitext(os.path.basename(path))[0]
    row = {c: "" for c in SUMMARY_COLUMNS}
    row["id"] = image_id
    row["path"] = path
    try:
        image = load_image(path, pixel_size_nm=pixel_override)
        report = analyze_image(image, config)
    except (OSError, ValueError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    stem = os.path.join(out_dir, image_id)
    write_report_json(report, stem + ".report.json")
    write_psd_csv(report.roughness.ler, stem + ".psd_ler.csv")
    write_psd_csv(report.roughness.lwr, stem + ".psd_lwr.csv")
    _write_edges_csv(report.edges, stem + ".edges.csv")
    ler, lwr = report.roughness.ler.fit, report.roughness.lwr.fit
    row.update(snr=report.snr.linescan_snr, cd_nm=report.cd.mean_cd,
               cd_std_nm=report.cd.cd_std,
               ler3s_biased_nm=3.0 * ler.sigma_biased,
               ler3s_unbiased_nm=3.0 * ler.sigma_unbiased,
               lwr3s_biased_nm=3.0 * lwr.sigma_biased,
               lwr3s_unbiased_nm=3.0 * lwr.sigma_unbiased,
               xi_nm=lwr.xi, hurst=lwr.hurst, noise_floor_nm3=lwr.noise_floor,
               rows_kept=report.cd.rows)
    return row


def cmd_analyze(ns):
    _ensure_outdir(ns.out)
    config = _analysis_config(ns)
    paths = _expand_inputs(ns.inputs)
    if not paths:
        raise ConfigError("no input images matched")
    tasks = [(p, ns.out, ns.pixel_size_nm, config) for p in paths]
    rows = _pmap(_analyze_worker, tasks, ns.jobs)
    _write_csv(os.path.join(ns.out, "summary.csv"), SUMMARY_COLUMNS, rows)
    failures = [r for r in rows if r["error"]]
    for r in failures:
        print(f"error: {r['path']}: {r['error']}", file=sys.stderr)
    print(f"analyzed {len(rows) - len(failures)}/{len(rows)} images "
          f"-> {ns.out}/summary.csv")
    return 1 if failures else 0


# ----------------------------------------------------------------- compare

def _compare_worker(task):
    noisy_path, denoised_path, config, denoiser = task
    image_id = os.path.splitext(os.path.basename(noisy_path))[0]
    row = {c: "" for c in COMPARE_COLUMNS}
    row["id"] = image_id
    scatter = []
    try:
        noisy = load_image(noisy_path)
        if not os.path.exists(denoised_path):
            if denoiser is None:
                return row, scatter, "no denoised partner"
            save_image(denoise(noisy, denoiser), denoised_path)
        den = load_image(denoised_path)
        rep_n = analyze_image(noisy, config)
        rep_d = analyze_image(den, config)
    except (OSError, ValueError) as exc:
        return row, scatter, f"{type(exc).__name__}: {exc}"

    truth_path = os.path.splitext(noisy_path)[0] + ".truth.json"
    if os.path.exists(truth_path):
        truth = load_truth(truth_path)
        row["frames"] = truth.noise.n_frames
        row["sigma_true_nm"] = realized_width_sigma(truth,
                                                    rep_n.edges.kept_rows)
    row.update(snr_noisy=rep_n.snr.linescan_snr,
               snr_denoised=rep_d.snr.linescan_snr,
               dsnr_pct=snr_delta(rep_n.snr.linescan_snr,
                                  rep_d.snr.linescan_snr),
               cd_noisy_nm=rep_n.cd.mean_cd, cd_denoised_nm=rep_d.cd.mean_cd,
               dcd_pct=cd_delta(rep_n.cd.mean_cd, rep_d.cd.mean_cd),
               ulwr3s_noisy_nm=3.0 * rep_n.roughness.lwr.fit.sigma_unbiased,
               ulwr3s_denoised_nm=3.0 * rep_d.roughness.lwr.fit.sigma_unbiased)
    for side, rep in (("noisy", rep_n), ("denoised", rep_d)):
        scatter.append({"id": image_id, "frames": row["frames"], "side": side,
                        "snr": rep.snr.linescan_snr,
                        "ulwr3s_nm": 3.0 * rep.roughness.lwr.fit.sigma_unbiased})
    return row, scatter, None


def _denoiser_from_flag(name):
    if name == "none":
        return None
    try:
        return DenoiserSpec(kind=name)
    except ValueError as exc:
        raise ConfigError(str(exc))


def cmd_compare(ns):
    _ensure_outdir(ns.out)
    config = _analysis_config(ns)
    denoiser = _denoiser_from_flag(ns.denoiser)
    noisy_paths = _expand_inputs(ns.inputs, skip_denoised=True)
    if not noisy_paths:
        raise ConfigError("no input images matched")
    tasks = [(p, os.path.splitext(p)[0] + ".denoised.pgm", config, denoiser)
             for p in noisy_paths]
    results = _pmap(_compare_worker, tasks, ns.jobs)

    rows, scatter, skipped = [], [], []
    for (noisy_path, _, _, _), (row, points, error) in zip(tasks, results):
        if error is not None:
            skipped.append((noisy_path, error))
            continue
        rows.append(row)
        scatter.extend(points)
    _write_csv(os.path.join(ns.out, "compare.csv"), COMPARE_COLUMNS, rows)
    _write_csv(os.path.join(ns.out, "scatter.csv"), SCATTER_COLUMNS, scatter)
    for path, error in skipped:
        print(f"skipped {path}: {error}", file=sys.stderr)
    print(f"compared {len(rows)} pairs -> {ns.out}/compare.csv")
    return 0 if rows and not skipped else 1


# -------------------------------------------------------------- acceptance

def cmd_acceptance(ns):
    from .acceptance import run_all

    _ensure_outdir(ns.out)
    verdicts = run_all(seed=ns.seed, jobs=ns.jobs, out_dir=ns.out)
    with open(os.path.join(ns.out, "acceptance.json"), "w") as fh:
        json.dump(verdicts, fh, indent=1)
    ok = True
    for v in verdicts:
        ok &= v["pass"]
        print(f"[{'PASS' if v['pass'] else 'FAIL'}] {v['name']}: "
              f"measured {v['measured']} vs bound {v['bound']}")
    print(f"acceptance: {sum(v['pass'] for v in verdicts)}/{len(verdicts)} "
          f"criteria pass -> {ns.out}/acceptance.json")
    return 0 if ok else 1


# ------------------------------------------------------------------ parser

def _add_common(parser):
    parser.add_argument("--config", default=None,
                        help="flat key=value defaults file (flags win)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=1000)
    parser.add_argument("--jobs", type=int, default=0,
                        help="worker count, 0 = one per CPU")


def _add_analysis_flags(parser):
    parser.add_argument("--pixel-size-nm", type=float, default=None,
                        help="override the PGM header pixel size")
    parser.add_argument("--bins", type=int, default=256)
    parser.add_argument("--border", type=int, default=2)
    parser.add_argument("--threshold-fraction", type=float, default=0.5)
    parser.add_argument("--poly-order", type=int, default=3)
    parser.add_argument("--fit-halfwidth", type=int, default=3)
    parser.add_argument("--smoothing-halfwidth", type=int, default=1)
    parser.add_argument("--min-run", type=int, default=4)
    parser.add_argument("--low-freq-exclusion", type=int, default=3)
    parser.add_argument("--window", choices=("none", "hann"), default="none")
    parser.add_argument("--model", type=int, choices=(1, 2), default=1)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="linemet",
        description="Line/space SEM metrology: SNR, CD, and roughness PSD.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="synthesize image grids")
    _add_common(gen)
    gen.add_argument("--frames", type=_int_list, default=(4, 8, 16, 32, 64),
                     help="comma list of frame counts")
    gen.add_argument("--contrast", type=_float_list, default=(0.0686,),
                     help="comma list of plateau swings around 0.5")
    gen.add_argument("--seeds", type=int, default=3, help="images per cell")
    gen.add_argument("--cd", type=float, default=16.0)
    gen.add_argument("--pitch", type=float, default=32.0)
    gen.add_argument("--lines", type=int, default=10)
    gen.add_argument("--rows", type=int, default=512)
    gen.add_argument("--pixel-size-nm", type=float, default=0.8)
    gen.add_argument("--sigma", type=float, default=0.6)
    gen.add_argument("--xi", type=float, default=20.0)
    gen.add_argument("--hurst", type=float, default=0.75)
    gen.add_argument("--exponent", type=float, default=None,
                     help="free spectral exponent (model 2)")
    gen.add_argument("--model", type=int, choices=(1, 2), default=1)
    gen.add_argument("--dose", type=float, default=120.0,
                     help="electrons per pixel per frame")
    gen.add_argument("--blur", type=float, default=0.8,
                     help="edge blur sigma in nm")
    gen.set_defaults(func=cmd_generate)

    ana = sub.add_parser("analyze", help="report on existing images")
    _add_common(ana)
    ana.add_argument("inputs", nargs="+", help="PGM paths or globs")
    _add_analysis_flags(ana)
    ana.set_defaults(func=cmd_analyze)

    cmp_ = sub.add_parser("compare", help="noisy vs denoised pair table")
    _add_common(cmp_)
    cmp_.add_argument("inputs", nargs="+", help="noisy PGM paths or globs")
    _add_analysis_flags(cmp_)
    cmp_.add_argument("--denoiser", default="none",
                      choices=("none", "gaussian", "median", "nlmeans"),
                      help="build missing denoised partners with this filter")
    cmp_.set_defaults(func=cmd_compare)

    acc = sub.add_parser("acceptance", help="run the verification suite")
    _add_common(acc)
    acc.set_defaults(func=cmd_acceptance)
    return parser


def _coerce_default(action, text):
    if isinstance(action, (argparse._StoreTrueAction,
                           argparse._StoreFalseAction)):
        lowered = text.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean for {action.dest}: {text!r}")
    if action.type is not None:
        try:
            return action.type(text)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"bad value for {action.dest}: {exc}")
    return text


def _parse_config_file(path):
    pairs = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(
                        f"{path}:{lineno}: expected key=value, got {raw!r}")
                key, value = line.split("=", 1)
                pairs[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}")
    return pairs


def _apply_config_file(parser, argv):
    """Inject config-file values as subparser defaults (flags still win)."""
    if not argv or argv[0] not in ("generate", "analyze", "compare",
                                   "acceptance"):
        return
    path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif token.startswith("--config="):
            path = token.split("=", 1)[1]
    if path is None:
        return
    sub = parser._subparsers._group_actions[0].choices[argv[0]]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, text in _parse_config_file(path).items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("help", "config", "inputs"):
            raise ConfigError(f"unknown config key {key!r} for {argv[0]}")
        defaults[dest] = _coerce_default(actions[dest], text)
    sub.set_defaults(**defaults)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        ns = parser.parse_args(argv)
        return ns.func(ns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
