"""Synthetic disk/annulus frames and the percentile benchmark.

Frames use the pixel-centre convention of :mod:`diskfit.imagepipe`: pixel
``(n, m)`` covers ``[n - 1/2, n + 1/2] x [m - 1/2, m + 1/2]``. Boundary
pixels get their exact area coverage of the disk.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .circlefit import (
    CircleFit,
    EdgePolarity,
    fit_closed_form,
    fit_geometric_iterative,
)
from .errors import DiskFitError, ValidationError
from .imagepipe import GrayImage, KernelConfig, extract_edge_points, gradient_field

TECHNIQUES = ("closed_form", "iterative", "warm_started_iterative")
DEFAULT_NOISE_LEVELS = (1.0, 256.0, 1024.0)
DEFAULT_POINT_COUNTS = (30, 60, 120, 240, 320)
WORKERS_ENV = "DISKFIT_MAX_WORKERS"
POSITION_RANGES = ("per_axis", "max_dimension")


@dataclass(frozen=True)
class SynthDiskConfig:
    width: int = 640
    height: int = 480
    r_min: float = 30.0
    r_max: float = 270.0
    foreground: float = 255.0
    background: float = 0.0
    noise_lambda: float | None = None
    seed: int | None = 0
    # optional fixed geometry; unset fields are drawn at random
    x0: float | None = None
    y0: float | None = None
    r: float | None = None
    # "per_axis": x0 ~ U(0, width), y0 ~ U(0, height);
    # "max_dimension": both ~ U(0, max(width, height))
    position_range: str = "per_axis"

    def __post_init__(self):
        _check_common(self)
        if self.position_range not in POSITION_RANGES:
            raise ValidationError(f"position_range must be one of {POSITION_RANGES}")


@dataclass(frozen=True)
class SynthAnnulusConfig:
    width: int = 659
    height: int = 493
    r_min: float = 100.0
    r_max: float = 130.0
    foreground: float = 255.0
    background: float = 0.0
    noise_lambda: float | None = None
    seed: int | None = 0
    x0: float | None = None
    y0: float | None = None
    r: float | None = None
    inner_r: float = 40.0
    spider_count: int = 4
    spider_width: float = 4.0

    def __post_init__(self):
        _check_common(self)
        outer_min = self.r if self.r is not None else self.r_min
        if not 0 < self.inner_r < outer_min:
            raise ValidationError(f"need 0 < inner_r < outer radius, got inner_r={self.inner_r}")
        if self.spider_count < 0:
            raise ValidationError("spider_count must be >= 0")
        if self.spider_width < 0:
            raise ValidationError("spider_width must be >= 0")


def _check_common(cfg):
    if cfg.width < 1 or cfg.height < 1:
        raise ValidationError(f"bad frame size {cfg.width}x{cfg.height}")
    if not 0 < cfg.r_min < cfg.r_max:
        raise ValidationError(f"need 0 < r_min < r_max, got {cfg.r_min}, {cfg.r_max}")
    if not cfg.foreground > cfg.background >= 0:
        raise ValidationError("need foreground > background >= 0")
    if cfg.noise_lambda is not None and cfg.noise_lambda < 0:
        raise ValidationError("noise_lambda must be >= 0")
    if cfg.r is not None and not cfg.r > 0:
        raise ValidationError("r must be positive")


def child_seed(seed, *keys) -> int:
    """Deterministic 32-bit seed derived from ``seed`` and integer ``keys``."""
    entropy = [0 if seed is None else int(seed)] + [int(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


# ---------------------------------------------------------------------------
# exact disk / pixel overlap


def _half_chord_integral(u, r):
    # antiderivative of sqrt(r^2 - t^2) on [-r, r]
    h = np.sqrt(np.maximum(r * r - u * u, 0.0))
    return 0.5 * (u * h + r * r * np.arcsin(np.clip(u / r, -1.0, 1.0)))


def _quadrant_area(x, y, r):
    """Area of the disk |p| <= r inside {X <= x, Y <= y}."""
    xc = np.clip(x, -r, r)
    F = _half_chord_integral
    a = np.sqrt(np.maximum(r * r - y * y, 0.0))

    # y >= 0: the column is fully below y for |t| >= a, partially otherwise
    cl = np.clip(xc, -a, a)
    upper = (
        2.0 * (F(np.minimum(xc, -a), r) - F(-r, r))
        + y * (cl + a)
        + F(cl, r)
        - F(-a, r)
        + 2.0 * (F(np.maximum(xc, a), r) - F(a, r))
    )
    # y < 0: only |t| <= a contributes, by y + h(t)
    lower = y * (cl + a) + F(cl, r) - F(-a, r)
    lower = np.where(-y >= r, 0.0, lower)
    return np.where(y >= 0, upper, lower)


def disk_coverage(shape, x0: float, y0: float, r: float) -> np.ndarray:
    """Fraction of each pixel covered by the disk of radius ``r`` at ``(x0, y0)``."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    dist = np.hypot(xs - x0, ys - y0)
    cov = (dist < r).astype(np.float64)
    band = np.abs(dist - r) < 0.75  # half pixel diagonal is ~0.7071
    if np.any(band):
        bx = xs[band] - x0
        by = ys[band] - y0
        xa, xb = bx - 0.5, bx + 0.5
        ya, yb = by - 0.5, by + 0.5
        area = (
            _quadrant_area(xb, yb, r)
            - _quadrant_area(xa, yb, r)
            - _quadrant_area(xb, ya, r)
            + _quadrant_area(xa, ya, r)
        )
        cov[band] = np.clip(area, 0.0, 1.0)
    return cov


def _draw_geometry(cfg, rng, fit_inside: bool):
    r = cfg.r if cfg.r is not None else rng.uniform(cfg.r_min, cfg.r_max)
    if fit_inside:
        lo_x, hi_x = min(r + 4, cfg.width / 2), max(cfg.width - r - 4, cfg.width / 2)
        lo_y, hi_y = min(r + 4, cfg.height / 2), max(cfg.height - r - 4, cfg.height / 2)
    elif getattr(cfg, "position_range", "per_axis") == "max_dimension":
        top = float(max(cfg.width, cfg.height))
        lo_x, hi_x, lo_y, hi_y = 0.0, top, 0.0, top
    else:
        lo_x, hi_x, lo_y, hi_y = 0.0, float(cfg.width), 0.0, float(cfg.height)
    x0 = cfg.x0 if cfg.x0 is not None else rng.uniform(lo_x, hi_x)
    y0 = cfg.y0 if cfg.y0 is not None else rng.uniform(lo_y, hi_y)
    return float(x0), float(y0), float(r)


def render_disk(config: SynthDiskConfig = SynthDiskConfig()) -> tuple[GrayImage, CircleFit]:
    """Bright disk on a dark frame; radius uniform in range, centre drawn per ``position_range``.

    The centre may sit anywhere in its range, so parts of the disk can be
    clipped or, with ``"max_dimension"``, fall outside the frame entirely. If ``config.noise_lambda`` is set, Poisson noise is applied.
    """
    rng = np.random.default_rng(config.seed)
    x0, y0, r = _draw_geometry(config, rng, fit_inside=False)
    cov = disk_coverage((config.height, config.width), x0, y0, r)
    pixels = config.background + (config.foreground - config.background) * cov
    image = GrayImage(pixels)
    if config.noise_lambda is not None:
        image = apply_poisson_noise(image, config.noise_lambda, child_seed(config.seed, 1))
    return image, CircleFit(x0, y0, r, 0.0)


def spider_mask(shape, x0, y0, angles, width) -> np.ndarray:
    """Approximate coverage of radial bands of ``width`` starting at ``(x0, y0)``."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    dx = xs - x0
    dy = ys - y0
    mask = np.zeros(shape)
    for a in angles:
        ca, sa = math.cos(a), math.sin(a)
        along = dx * ca + dy * sa
        across = np.abs(-dx * sa + dy * ca)
        cov = np.clip(width / 2.0 + 0.5 - across, 0.0, 1.0) * (along > 0)
        np.maximum(mask, cov, out=mask)
    return mask


def render_annulus(
    config: SynthAnnulusConfig = SynthAnnulusConfig(),
) -> tuple[GrayImage, CircleFit, CircleFit]:
    """Bright ring with a dark central hole crossed by dark radial spider bands.

    The whole ring is kept inside the frame, as in a pupil image.
    """
    rng = np.random.default_rng(config.seed)
    x0, y0, r = _draw_geometry(config, rng, fit_inside=True)
    shape = (config.height, config.width)
    cov = disk_coverage(shape, x0, y0, r) - disk_coverage(shape, x0, y0, config.inner_r)
    if config.spider_count > 0 and config.spider_width > 0:
        phase = rng.uniform(0.0, 2.0 * math.pi / config.spider_count)
        angles = phase + 2.0 * math.pi * np.arange(config.spider_count) / config.spider_count
        cov = cov * (1.0 - spider_mask(shape, x0, y0, angles, config.spider_width))
    pixels = config.background + (config.foreground - config.background) * cov
    image = GrayImage(pixels)
    if config.noise_lambda is not None:
        image = apply_poisson_noise(image, config.noise_lambda, child_seed(config.seed, 1))
    return image, CircleFit(x0, y0, r, 0.0), CircleFit(x0, y0, config.inner_r, 0.0)


def apply_poisson_noise(image: GrayImage, lam: float, seed=None) -> GrayImage:
    """Replace every pixel by a Poisson draw with mean ``pixel + lam``."""
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    rng = np.random.default_rng(seed)
    return GrayImage(rng.poisson(image.pixels + lam).astype(np.float64))


# ---------------------------------------------------------------------------
# benchmark


@dataclass
class CellStats:
    technique: str
    noise_lambda: float
    points: int
    samples: int
    failures: int
    centre_error: list[float]  # p25, p50, p75
    radius_error: list[float]
    mean_time: float
    median_iterations: float


@dataclass
class BenchReport:
    noise_levels: list[float]
    point_counts: list[int]
    techniques: list[str]
    trials: int
    seed: int
    cells: list[CellStats] = field(default_factory=list)

    def cell(self, technique: str, noise_lambda: float, points: int) -> CellStats:
        for c in self.cells:
            if c.technique == technique and c.noise_lambda == noise_lambda and c.points == points:
                return c
        raise KeyError((technique, noise_lambda, points))

    def to_dict(self) -> dict:
        """JSON-ready dict; statistics of an all-failed cell become ``None``."""
        d = asdict(self)
        for c in d["cells"]:
            for k in ("centre_error", "radius_error"):
                c[k] = [None if math.isnan(v) else v for v in c[k]]
            for k in ("mean_time", "median_iterations"):
                if math.isnan(c[k]):
                    c[k] = None
        d["schema_version"] = "1.0"
        return d

    def format_table(self, metric: str = "centre_error") -> str:
        """Aligned table: rows technique x noise level, columns points x percentile."""
        head1 = f"{'Technique':<24}{'Noise':>8} |"
        head2 = f"{'':<24}{'':>8} |"
        for n in self.point_counts:
            head1 += f"{n:^21}|"
            head2 += "".join(f"{p:>7}" for p in ("25%", "50%", "75%")) + "|"
        lines = [f"{metric.replace('_', ' ')} (pixels)", head1, head2, "-" * len(head1)]
        for tech in self.techniques:
            for lam in self.noise_levels:
                row = f"{tech:<24}{lam:>8g} |"
                for n in self.point_counts:
                    vals = getattr(self.cell(tech, lam, n), metric)
                    row += "".join(f"{v:>7.2f}" for v in vals) + "|"
                lines.append(row)
        return "\n".join(lines)


@dataclass(frozen=True)
class _Record:
    trial: int
    technique: str
    noise_lambda: float
    points: int
    centre_error: float
    radius_error: float
    seconds: float
    iterations: int
    failed: bool


def _fit(technique, pts, rel_tol, max_iter):
    if technique == "closed_form":
        return fit_closed_form(pts, EdgePolarity.OUTER), 0
    if technique == "iterative":
        rep = fit_geometric_iterative(pts, None, rel_tol, max_iter)
        return rep.fit, rep.iterations
    if technique == "warm_started_iterative":
        init = fit_closed_form(pts, EdgePolarity.OUTER)
        rep = fit_geometric_iterative(pts, init, rel_tol, max_iter)
        return rep.fit, rep.iterations
    raise ValidationError(f"unknown technique {technique!r}")


def run_trial(trial, seed, noise_levels, point_counts, techniques, disk_config, kernel, rel_tol, max_iter):
    """All (noise, points, technique) measurements for one rendered disk."""
    cfg = SynthDiskConfig(**{**asdict(disk_config), "seed": child_seed(seed, trial), "noise_lambda": None})
    clean, truth = render_disk(cfg)
    out = []
    for li, lam in enumerate(noise_levels):
        noisy = apply_poisson_noise(clean, lam, child_seed(seed, trial, li))
        try:
            grad = gradient_field(noisy, kernel)
        except DiskFitError:
            grad = None
        for ni, npts in enumerate(point_counts):
            pts = None
            if grad is not None:
                try:
                    pts = extract_edge_points(grad, npts, child_seed(seed, trial, li, ni))
                except DiskFitError:
                    pts = None
            for tech in techniques:
                if pts is None:
                    out.append(_Record(trial, tech, lam, npts, math.nan, math.nan, math.nan, 0, True))
                    continue
                t0 = time.perf_counter()
                try:
                    fit, iters = _fit(tech, pts, rel_tol, max_iter)
                except DiskFitError:
                    out.append(_Record(trial, tech, lam, npts, math.nan, math.nan, math.nan, 0, True))
                    continue
                dt = time.perf_counter() - t0
                out.append(
                    _Record(
                        trial,
                        tech,
                        lam,
                        npts,
                        max(abs(fit.x0 - truth.x0), abs(fit.y0 - truth.y0)),
                        abs(fit.r - truth.r),
                        dt,
                        iters,
                        False,
                    )
                )
    return out


def _percentiles(values):
    if not values:
        return [math.nan] * 3
    return [float(v) for v in np.percentile(values, [25, 50, 75])]


def resolve_workers(workers: int | None) -> int:
    cap = os.environ.get(WORKERS_ENV)
    n = workers if workers is not None else 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValidationError(f"{WORKERS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


def run_benchmark(
    noise_levels=DEFAULT_NOISE_LEVELS,
    point_counts=DEFAULT_POINT_COUNTS,
    trials: int = 500,
    techniques=TECHNIQUES,
    seed: int = 0,
    disk_config: SynthDiskConfig = SynthDiskConfig(),
    kernel: KernelConfig = KernelConfig(),
    rel_tol: float = 1e-4,
    max_iter: int = 100,
    workers: int | None = None,
    return_records: bool = False,
):
    """Render ``trials`` disks and score every technique on every grid cell.

    Each disk is rendered once; each noise level gets its own Poisson draw
    and each point count its own subsample. Centre error is
    ``max(|dx0|, |dy0|)``, radius error ``|dR|``; fits that raise are counted
    as failures and left out of the percentiles.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    noise_levels = [float(v) for v in noise_levels]
    point_counts = [int(v) for v in point_counts]
    techniques = list(techniques)
    for t in techniques:
        if t not in TECHNIQUES:
            raise ValidationError(f"unknown technique {t!r}")
    args = (seed, noise_levels, point_counts, techniques, disk_config, kernel, rel_tol, max_iter)

    n_workers = resolve_workers(workers)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            chunks = list(pool.map(run_trial, range(trials), *[[a] * trials for a in args]))
    else:
        chunks = [run_trial(t, *args) for t in range(trials)]
    records = [r for chunk in chunks for r in chunk]

    report = BenchReport(noise_levels, point_counts, techniques, trials, seed)
    for tech in techniques:
        for lam in noise_levels:
            for npts in point_counts:
                cell = [r for r in records if r.technique == tech and r.noise_lambda == lam and r.points == npts]
                ok = [r for r in cell if not r.failed]
                report.cells.append(
                    CellStats(
                        technique=tech,
                        noise_lambda=lam,
                        points=npts,
                        samples=len(ok),
                        failures=len(cell) - len(ok),
                        centre_error=_percentiles([r.centre_error for r in ok]),
                        radius_error=_percentiles([r.radius_error for r in ok]),
                        mean_time=float(np.mean([r.seconds for r in ok])) if ok else math.nan,
                        median_iterations=float(np.median([r.iterations for r in ok])) if ok else math.nan,
                    )
                )
    if return_records:
        return report, records
    return report
