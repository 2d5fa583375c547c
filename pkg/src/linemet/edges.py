"""Sub-pixel edge detection and critical dimension statistics.

Lines run vertically: each image row crosses every edge once, and the
per-row crossing abscissas form the roughness traces everything downstream
consumes. Positions are reported in nm with pixel centers at
``(column + 0.5) * pixel_size``, so a transition whose 50 percent crossing
sits at a pixel center lands exactly on that center.

Detection is two-stage. The column-mean profile locates each line coarsely:
plateau levels come from the medians of the lower and upper halves of the
column-mean distribution (robust against edge-effect bumps and outliers),
and a line is a run of columns above the threshold level flanked by long
enough runs below it. Then every row is box-smoothed, a low-order
polynomial is fitted around the nominal crossing column, and the crossing
of the threshold level is located by bisection on the fitted polynomial.
Rows whose polynomial never crosses in the right direction are rejected;
more than 2 percent rejected rows on any edge aborts the detection, since
the surviving trace would no longer be a trustworthy sample of the edge.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d


class EdgeDetectionError(ValueError):
    """Detection preconditions violated or too many rows rejected."""


@dataclass(frozen=True)
class EdgeDetectParams:
    """Detection knobs; lengths are in pixels.

    threshold_fraction places the crossing level between the plateau
    levels; fit_halfwidth sets the polynomial window (2 * fit_halfwidth + 1
    samples) around the nominal crossing; smoothing_halfwidth the per-row
    box filter; min_run the shortest accepted above- or below-threshold
    column run.
    """

    threshold_fraction: float = 0.5
    poly_order: int = 3
    fit_halfwidth: int = 3
    smoothing_halfwidth: int = 1
    min_run: int = 4

    def __post_init__(self):
        if not (0.0 < self.threshold_fraction < 1.0):
            raise ValueError("threshold_fraction must be in (0, 1)")
        if self.poly_order < 1:
            raise ValueError("poly_order must be >= 1")
        if 2 * self.fit_halfwidth + 1 <= self.poly_order + 1:
            raise ValueError("fit window must exceed the polynomial order")
        if self.smoothing_halfwidth < 0:
            raise ValueError("smoothing_halfwidth must be >= 0")
        if self.min_run < 1:
            raise ValueError("min_run must be >= 1")


@dataclass(frozen=True, eq=False)
class EdgeSet:
    """Per-line (left, right) traces in nm over the surviving rows.

    kept_rows maps trace entries back to image rows; rows failing detection
    on any edge are excluded from every trace so rows stay aligned.
    """

    lines: list
    rows: int
    pixel_size: float
    params: EdgeDetectParams
    kept_rows: np.ndarray

    def __post_init__(self):
        if len(self.lines) < 1:
            raise ValueError("need at least one line")
        kept = np.asarray(self.kept_rows, dtype=np.intp)
        if kept.shape != (self.rows,):
            raise ValueError("kept_rows must have one entry per surviving row")
        previous_right = None
        frozen = []
        for left, right in self.lines:
            left = np.asarray(left, dtype=np.float64)
            right = np.asarray(right, dtype=np.float64)
            if left.shape != (self.rows,) or right.shape != (self.rows,):
                raise ValueError("every trace must have exactly rows entries")
            if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right))):
                raise ValueError("traces must be finite")
            if not np.all(left < right):
                raise ValueError("left edge must stay left of its right edge")
            if previous_right is not None and not np.all(previous_right < left):
                raise ValueError("lines must stay ordered left to right")
            previous_right = right
            frozen.append((left, right))
        object.__setattr__(self, "lines", frozen)

    @property
    def n_lines(self):
        return len(self.lines)


@dataclass(frozen=True)
class CdReport:
    """Pooled width statistics in nm (population std over all rows)."""

    mean_cd: float
    cd_std: float
    per_line_mean: list
    n_lines: int
    rows: int


def _line_runs(above, min_run, width):
    """Maximal above-threshold runs that qualify as full lines."""
    padded = np.concatenate([[False], above, [False]])
    flips = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, ends = flips[0::2], flips[1::2]
    runs = []
    for s, e in zip(starts, ends):
        if s == 0 or e == width:
            continue
        if e - s < min_run:
            continue
        left_flank = s - (ends[ends <= s][-1] if np.any(ends <= s) else 0)
        next_starts = starts[starts >= e]
        right_flank = (next_starts[0] if next_starts.size else width) - e
        if left_flank >= min_run and right_flank >= min_run:
            runs.append((int(s), int(e)))
    return runs


def _subpixel_crossings(smoothed, column, level, rising, params, nominal_frac):
    """Vectorized per-row polynomial crossing around one nominal column.

    Returns (positions in fractional columns, valid row mask). Positions
    are offsets from ``column`` resolved by bisection on the fitted
    polynomial; rows without a direction-correct sign change are invalid.
    """
    fh = params.fit_halfwidth
    x = np.arange(-fh, fh + 1, dtype=np.float64)
    window = smoothed[:, column - fh:column + fh + 1]
    vander = np.vander(x, params.poly_order + 1, increasing=True)
    coeffs = window @ np.linalg.pinv(vander).T
    fitted = coeffs @ vander.T
    g = fitted - level

    if rising:
        change = (g[:, :-1] <= 0.0) & (g[:, 1:] >= 0.0)
    else:
        change = (g[:, :-1] >= 0.0) & (g[:, 1:] <= 0.0)
    valid = change.any(axis=1)

    midpoints = x[:-1] + 0.5
    distance = np.abs(midpoints[None, :] - nominal_frac)
    distance = np.where(change, distance, np.inf)
    bracket = np.argmin(distance, axis=1)

    rows = np.arange(g.shape[0])
    lo = x[bracket]
    hi = lo + 1.0
    g_lo = g[rows, bracket]

    def poly_eval(points):
        acc = np.zeros_like(points)
        for k in range(params.poly_order, -1, -1):
            acc = acc * points + coeffs[:, k]
        return acc

    for _ in range(80):
        mid = 0.5 * (lo + hi)
        g_mid = poly_eval(mid) - level
        take_low = g_lo * g_mid <= 0.0
        hi = np.where(take_low, mid, hi)
        lo = np.where(take_low, lo, mid)
        g_lo = np.where(take_low, g_lo, g_mid)

    return column + 0.5 * (lo + hi), valid


def detect_edges(image, params=None):
    """Locate every full line's left and right edge trace in nm.

    Raises EdgeDetectionError when no full line exists (a bright run
    flanked by dark runs of at least min_run columns), when an edge sits
    too close to the raster border for its fit window, or when more than
    2 percent of rows fail on any edge.
    """
    if params is None:
        params = EdgeDetectParams()
    samples = image.samples
    height, width = samples.shape

    profile = samples.mean(axis=0)
    ranked = np.sort(profile)
    space_level = float(np.median(ranked[:width // 2]))
    line_level = float(np.median(ranked[width // 2:]))
    if line_level - space_level < 1e-9:
        raise EdgeDetectionError("no line found: column profile is flat")
    level = space_level + params.threshold_fraction * (line_level - space_level)

    runs = _line_runs(profile >= level, params.min_run, width)
    if not runs:
        raise EdgeDetectionError("no line found: no qualifying bright run")

    if params.smoothing_halfwidth > 0:
        smoothed = uniform_filter1d(samples, size=2 * params.smoothing_halfwidth + 1,
                                    axis=1, mode="reflect")
    else:
        smoothed = samples

    fh = params.fit_halfwidth
    edge_plan = []
    for s, e in runs:
        denom = profile[s] - profile[s - 1]
        frac = (level - profile[s - 1]) / denom if denom != 0 else 0.5
        left_cross = s - 1 + float(np.clip(frac, 0.0, 1.0))
        denom = profile[e - 1] - profile[e]
        frac = (profile[e - 1] - level) / denom if denom != 0 else 0.5
        right_cross = e - 1 + float(np.clip(frac, 0.0, 1.0))
        edge_plan.append((left_cross, True))
        edge_plan.append((right_cross, False))

    positions = []
    valid_all = np.ones(height, dtype=bool)
    for cross, rising in edge_plan:
        column = int(round(cross))
        if column - fh < 0 or column + fh >= width:
            raise EdgeDetectionError(
                f"edge at column {column} is too close to the raster border "
                f"for a halfwidth {fh} fit window")
        cols, valid = _subpixel_crossings(smoothed, column, level, rising,
                                          params, cross - column)
        rejected = 1.0 - valid.mean()
        if rejected > 0.02:
            raise EdgeDetectionError(
                f"edge detection unreliable: {rejected:.1%} of rows rejected "
                f"at the edge near column {column}")
        positions.append(cols)
        valid_all &= valid

    kept = np.flatnonzero(valid_all)
    lines = []
    for i in range(0, len(positions), 2):
        left = (positions[i][kept] + 0.5) * image.pixel_size
        right = (positions[i + 1][kept] + 0.5) * image.pixel_size
        lines.append((left, right))
    return EdgeSet(lines=lines, rows=int(kept.size), pixel_size=image.pixel_size,
                   params=params, kept_rows=kept)


def width_trace(edge_set, line_index):
    """Per-row width (nm) of one line, right edge minus left edge."""
    if not (0 <= line_index < edge_set.n_lines):
        raise IndexError(f"line_index {line_index} out of range "
                         f"for {edge_set.n_lines} lines")
    left, right = edge_set.lines[line_index]
    return right - left


def mean_cd(edge_set):
    """Pooled mean width over every line and surviving row."""
    widths = np.stack([width_trace(edge_set, i)
                       for i in range(edge_set.n_lines)])
    return CdReport(mean_cd=float(widths.mean()),
                    cd_std=float(widths.std()),
                    per_line_mean=[float(w.mean()) for w in widths],
                    n_lines=edge_set.n_lines,
                    rows=edge_set.rows)


def cd_delta(cd_noisy, cd_denoised):
    """Signed CD change in percent against the noisy value."""
    if cd_noisy <= 0:
        raise ValueError("cd_noisy must be positive")
    return (cd_noisy - cd_denoised) / cd_noisy * 100.0
