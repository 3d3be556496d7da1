"""Image to edge-point conversion.

A grayscale frame is filtered with separable Gaussian-derivative kernels,
the gradient-norm map is thresholded with Otsu's method and a random subset
of the edge pixels is returned together with their unit gradient directions.

Pixel ``(n, m)`` refers to column ``n`` and row ``m``; its centre sits at
``x = n, y = m``. Arrays are stored row-major as ``pixels[m, n]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import (
    DegenerateHistogramError,
    DimensionError,
    InsufficientEdgesError,
    ValidationError,
)

DEFAULT_BINS = 256


@dataclass(frozen=True)
class GrayImage:
    """Immutable 2-D nonnegative intensity raster."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise ValidationError(f"expected a non-empty 2-D array, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValidationError("image contains non-finite values")
        if np.any(px < 0):
            raise ValidationError("image contains negative values")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class KernelConfig:
    s2: float = 2.0
    half_width: int = 2

    def __post_init__(self):
        if not self.s2 > 0:
            raise ValidationError(f"s2 must be positive, got {self.s2}")
        if int(self.half_width) != self.half_width or self.half_width < 1:
            raise ValidationError(f"half_width must be an integer >= 1, got {self.half_width}")


@dataclass(frozen=True)
class GradientField:
    """Gradient components and magnitude; the outer ``valid_margin`` pixels are zeroed."""

    gx: np.ndarray
    gy: np.ndarray
    norm: np.ndarray
    valid_margin: int

    @property
    def width(self) -> int:
        return self.norm.shape[1]

    @property
    def height(self) -> int:
        return self.norm.shape[0]

    def interior(self, array: np.ndarray) -> np.ndarray:
        m = self.valid_margin
        return array[m : array.shape[0] - m, m : array.shape[1] - m]


class EdgePoint(NamedTuple):
    x: float
    y: float
    nx: float
    ny: float


class EdgePointSet:
    """Edge measurements ``(x, y, nx, ny)`` stored as rows of one ``(4, N)`` array.

    Normals are unit vectors when they come from :func:`extract_edge_points`;
    synthetic generators may pass noisy, non-unit vectors and the estimators
    accept them as-is.
    """

    __slots__ = ("data", "_unit")

    def __init__(self, x, y, nx, ny):
        cols = [np.asarray(c, dtype=np.float64).reshape(-1) for c in (x, y, nx, ny)]
        n = cols[0].size
        if any(c.size != n for c in cols):
            raise ValidationError("x, y, nx, ny must have equal length")
        data = np.empty((4, n))
        for i, c in enumerate(cols):
            data[i] = c
        data.setflags(write=False)
        self.data = data
        self._unit = None

    @property
    def unit_normals(self) -> bool:
        """True when every normal has unit length to within 1e-12."""
        if self._unit is None:
            sq = self.data[2] ** 2 + self.data[3] ** 2
            self._unit = bool(np.all(np.abs(sq - 1.0) <= 1e-12))
        return self._unit

    x = property(lambda self: self.data[0])
    y = property(lambda self: self.data[1])
    nx = property(lambda self: self.data[2])
    ny = property(lambda self: self.data[3])

    def __repr__(self):
        return f"EdgePointSet(n={len(self)})"

    @classmethod
    def from_points(cls, points) -> "EdgePointSet":
        arr = np.asarray(list(points), dtype=np.float64).reshape(-1, 4)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])

    def __len__(self) -> int:
        return self.x.size

    def __iter__(self) -> Iterator[EdgePoint]:
        for row in zip(self.x, self.y, self.nx, self.ny):
            yield EdgePoint(*map(float, row))

    def __getitem__(self, i) -> EdgePoint:
        return EdgePoint(float(self.x[i]), float(self.y[i]), float(self.nx[i]), float(self.ny[i]))

    def subset(self, index) -> "EdgePointSet":
        return EdgePointSet(self.x[index], self.y[index], self.nx[index], self.ny[index])

    def translated(self, dx: float, dy: float) -> "EdgePointSet":
        return EdgePointSet(self.x + dx, self.y + dy, self.nx, self.ny)

    def negated_normals(self) -> "EdgePointSet":
        return EdgePointSet(self.x, self.y, -self.nx, -self.ny)


def make_kernels(config: KernelConfig = KernelConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Return the 1-D derivative and smoothing taps indexed ``-half_width..half_width``.

    The Gaussian normalisation constant is deliberately left out: only the
    gradient direction and the relative magnitudes matter downstream.
    """
    p = np.arange(-config.half_width, config.half_width + 1, dtype=np.float64)
    smooth = np.exp(-(p**2) / (2.0 * config.s2))
    return p * smooth, smooth


def _correlate_valid(a: np.ndarray, taps: np.ndarray, axis: int, odd: bool) -> np.ndarray:
    # out[j] = sum_k taps[k] * a[j + k] over fully covered positions only.
    # Taps are even or odd about the centre, so mirrored samples are paired
    # first; this keeps the derivative of a constant exactly zero.
    hw = taps.size // 2
    n = a.shape[axis] - 2 * hw
    sl = [slice(None)] * a.ndim

    def window(j):
        sl[axis] = slice(j, j + n)
        return a[tuple(sl)]

    out = np.zeros_like(window(hw)) if odd else taps[hw] * window(hw)
    for p in range(1, hw + 1):
        pair = window(hw + p) - window(hw - p) if odd else window(hw + p) + window(hw - p)
        out += taps[hw + p] * pair
    return out


def gradient_field(image: GrayImage, config: KernelConfig = KernelConfig()) -> GradientField:
    """Filter ``image`` with the separable derivative kernels.

    ``gx[m, n] = sum_{p,q} I[m+q, n+p] * p*exp(-p^2/2s2) * exp(-q^2/2s2)`` and
    symmetrically for ``gy``, so ``gx > 0`` where intensity grows with x.
    """
    hw = config.half_width
    h, w = image.pixels.shape
    if h <= 2 * hw or w <= 2 * hw:
        raise DimensionError(f"image {w}x{h} too small for a {2 * hw + 1}-tap kernel")
    deriv, smooth = make_kernels(config)
    a = image.pixels
    gx_in = _correlate_valid(_correlate_valid(a, deriv, 1, odd=True), smooth, 0, odd=False)
    gy_in = _correlate_valid(_correlate_valid(a, smooth, 1, odd=False), deriv, 0, odd=True)

    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[hw : h - hw, hw : w - hw] = gx_in
    gy[hw : h - hw, hw : w - hw] = gy_in
    norm = np.hypot(gx, gy)
    for arr in (gx, gy, norm):
        arr.setflags(write=False)
    return GradientField(gx=gx, gy=gy, norm=norm, valid_margin=hw)


def otsu_threshold(values, bins: int = DEFAULT_BINS) -> float:
    """Otsu threshold over ``bins`` equal-width bins spanning ``[min, max]``.

    Candidates are the interior bin boundaries; values ``>=`` a boundary form
    the upper class. Class means are computed from the raw values rather than
    bin centres. Ties resolve to the lowest boundary.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValidationError("otsu_threshold needs at least one value")
    if bins < 2:
        raise ValidationError(f"bins must be >= 2, got {bins}")
    lo, hi = v.min(), v.max()
    if not hi > lo:
        raise DegenerateHistogramError("all values are identical; no threshold exists")

    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    sums, _ = np.histogram(v, bins=bins, range=(lo, hi), weights=v)
    w0 = np.cumsum(counts)[:-1].astype(np.float64)
    s0 = np.cumsum(sums)[:-1]
    w1 = v.size - w0
    s1 = sums.sum() - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = w0 * w1 * (s0 / w0 - s1 / w1) ** 2
    between[(w0 == 0) | (w1 == 0)] = -np.inf
    return float(edges[int(np.argmax(between)) + 1])


def extract_edge_points(
    field: GradientField,
    max_points: int,
    seed=None,
    bins: int = DEFAULT_BINS,
) -> EdgePointSet:
    """Select edge pixels above the Otsu threshold of the interior gradient norm.

    When there are more than ``max_points`` candidates a uniform subset is
    drawn without replacement from ``numpy.random.default_rng(seed)``.
    """
    if max_points < 3:
        raise ValidationError(f"max_points must be >= 3, got {max_points}")
    m = field.valid_margin
    norm = field.interior(field.norm)
    if norm.size == 0:
        raise InsufficientEdgesError("no interior pixels")
    try:
        thr = otsu_threshold(norm, bins=bins)
    except DegenerateHistogramError as exc:
        raise InsufficientEdgesError("flat gradient map, no edges found") from exc

    rows, cols = np.nonzero((norm > thr) & (norm > 0))
    if rows.size < 3:
        raise InsufficientEdgesError(f"only {rows.size} edge pixels above threshold")
    if rows.size > max_points:
        keep = np.sort(np.random.default_rng(seed).choice(rows.size, size=max_points, replace=False))
        rows, cols = rows[keep], cols[keep]

    rows = rows + m
    cols = cols + m
    g = field.norm[rows, cols]
    return EdgePointSet(
        x=cols.astype(np.float64),
        y=rows.astype(np.float64),
        nx=field.gx[rows, cols] / g,
        ny=field.gy[rows, cols] / g,
    )


def image_to_points(
    image: GrayImage,
    max_points: int,
    seed=None,
    config: KernelConfig = KernelConfig(),
    bins: int = DEFAULT_BINS,
) -> EdgePointSet:
    return extract_edge_points(gradient_field(image, config), max_points, seed, bins)
