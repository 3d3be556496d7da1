import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diskfit.errors import (
    DegenerateHistogramError,
    DimensionError,
    InsufficientEdgesError,
    ValidationError,
)
from diskfit.imagepipe import (
    EdgePointSet,
    GrayImage,
    KernelConfig,
    extract_edge_points,
    gradient_field,
    image_to_points,
    make_kernels,
    otsu_threshold,
)
from diskfit.synthbench import SynthDiskConfig, render_disk


def direct_gradient(pixels, config=KernelConfig()):
    """Brute-force 2-D correlation with the full outer-product kernels."""
    hw = config.half_width
    p = np.arange(-hw, hw + 1)
    g = np.exp(-(p**2) / (2 * config.s2))
    kx = np.outer(g, p * g)  # kx[q, p]: derivative along columns
    ky = np.outer(p * g, g)
    h, w = pixels.shape
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    for m in range(hw, h - hw):
        for n in range(hw, w - hw):
            patch = pixels[m - hw : m + hw + 1, n - hw : n + hw + 1]
            gx[m, n] = np.sum(patch * kx)
            gy[m, n] = np.sum(patch * ky)
    return gx, gy


def brute_otsu_binned(v, bins=256):
    """Score every bin boundary directly from the values on each side of it."""
    # class membership by histogram bin index, matching np.histogram at the edges
    lo, hi = v.min(), v.max()
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    idx = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, bins - 1)
    best, best_k = -1.0, None
    for k in range(1, bins):
        a = v[idx < k]
        b = v[idx >= k]
        if a.size == 0 or b.size == 0:
            continue
        score = a.size * b.size * (a.mean() - b.mean()) ** 2
        if score > best + 1e-9 * abs(best):
            best, best_k = score, k
    return edges[best_k]


# -- GrayImage / KernelConfig ----------------------------------------------


def test_gray_image_validation():
    img = GrayImage(np.ones((3, 4)))
    assert (img.width, img.height) == (4, 3)
    assert img.pixels.size == img.width * img.height
    with pytest.raises(ValidationError):
        GrayImage(np.array([[1.0, -1.0]]))
    with pytest.raises(ValidationError):
        GrayImage(np.array([[1.0, np.nan]]))
    with pytest.raises(ValidationError):
        GrayImage(np.ones(5))
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 3.0


@pytest.mark.parametrize("kw", [{"s2": 0}, {"s2": -1}, {"half_width": 0}, {"half_width": 1.5}])
def test_kernel_config_rejects_bad_values(kw):
    with pytest.raises(ValidationError):
        KernelConfig(**kw)


def test_kernel_taps():
    d, w = make_kernels()
    assert d.size == w.size == 5
    assert d[2] == 0.0
    # frozen from mpmath: 1*exp(-1/4) and exp(-4/4)
    assert d[3] == pytest.approx(0.77880078307140486825, abs=1e-15)
    assert w[4] == pytest.approx(0.36787944117144233402, abs=1e-15)
    np.testing.assert_allclose(d, -d[::-1])
    np.testing.assert_allclose(w, w[::-1])


# -- gradient_field ----------------------------------------------------------


def test_constant_image_has_zero_gradient():
    field = gradient_field(GrayImage(np.full((12, 14), 7.0)))
    assert np.all(field.gx == 0) and np.all(field.gy == 0) and np.all(field.norm == 0)


def test_vertical_step_points_along_x():
    px = np.zeros((20, 20))
    px[:, 10:] = 255.0
    field = gradient_field(GrayImage(px))
    inner_gy = field.interior(field.gy)
    assert np.allclose(inner_gy, 0.0, atol=1e-9)
    for col in (9, 10):
        assert np.all(field.gx[2:-2, col] > 0)
        np.testing.assert_allclose(field.gx[2:-2, col] / field.norm[2:-2, col], 1.0)


def test_separable_matches_direct_16x16(rng):
    px = rng.uniform(0, 255, (16, 16))
    field = gradient_field(GrayImage(px))
    gx, gy = direct_gradient(px)
    np.testing.assert_allclose(field.gx, gx, atol=1e-10, rtol=0)
    np.testing.assert_allclose(field.gy, gy, atol=1e-10, rtol=0)


@settings(max_examples=25, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(5, 64), st.integers(5, 64)), elements=st.floats(0, 1000)),
    st.sampled_from([KernelConfig(), KernelConfig(s2=1.0, half_width=1), KernelConfig(s2=3.0, half_width=3)]),
)
def test_separable_matches_direct_property(px, config):
    if min(px.shape) <= 2 * config.half_width:
        with pytest.raises(DimensionError):
            gradient_field(GrayImage(px), config)
        return
    field = gradient_field(GrayImage(px), config)
    gx, gy = direct_gradient(px, config)
    scale = max(1.0, np.abs(px).max())
    np.testing.assert_allclose(field.gx, gx, atol=1e-10 * scale, rtol=0)
    np.testing.assert_allclose(field.gy, gy, atol=1e-10 * scale, rtol=0)
    assert field.gx.shape == field.gy.shape == field.norm.shape == px.shape
    np.testing.assert_allclose(field.norm, np.hypot(field.gx, field.gy), rtol=1e-12)
    m = field.valid_margin
    assert np.all(field.norm[:m] == 0) and np.all(field.norm[:, -m:] == 0)


def test_too_small_image():
    with pytest.raises(DimensionError):
        gradient_field(GrayImage(np.zeros((4, 10))))


def test_disk_gradient_points_to_centre():
    img, truth = render_disk(SynthDiskConfig(x0=160.3, y0=120.7, r=60.0, width=320, height=240))
    pts = extract_edge_points(gradient_field(img), 10_000, seed=0)
    dx = truth.x0 - pts.x
    dy = truth.y0 - pts.y
    assert np.all(pts.nx * dx + pts.ny * dy > 0)


# -- otsu --------------------------------------------------------------------


def test_otsu_bimodal():
    t = otsu_threshold([0.0] * 100 + [10.0] * 100)
    assert 0 < t < 10


def test_otsu_degenerate():
    with pytest.raises(DegenerateHistogramError):
        otsu_threshold(np.full(10, 3.0))
    with pytest.raises(ValidationError):
        otsu_threshold([])


def test_otsu_gaussian_mixture_matches_scan(rng):
    v = np.concatenate([rng.normal(20, 5, 3000), rng.normal(80, 10, 1000)])
    assert otsu_threshold(v) == brute_otsu_binned(v)
    assert 30 < otsu_threshold(v) < 70


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.integers(2, 300), elements=st.floats(0, 1e4, allow_subnormal=False)),
    st.integers(2, 64),
)
def test_otsu_matches_exhaustive_property(v, bins):
    if v.max() == v.min():
        with pytest.raises(DegenerateHistogramError):
            otsu_threshold(v, bins)
        return
    t = otsu_threshold(v, bins)
    assert v.min() < t <= v.max()
    assert t == brute_otsu_binned(v, bins)


# -- extract_edge_points -----------------------------------------------------


def test_extract_exact_count_unit_norm():
    img, _ = render_disk(SynthDiskConfig(seed=3, x0=320, y0=240, r=120, noise_lambda=1))
    pts = image_to_points(img, 320, seed=1)
    assert len(pts) == 320
    np.testing.assert_allclose(pts.nx**2 + pts.ny**2, 1.0, atol=1e-9)
    assert pts.unit_normals


def test_extract_returns_all_when_few():
    img, _ = render_disk(SynthDiskConfig(x0=30, y0=30, r=10, width=60, height=60))
    field = gradient_field(img)
    everything = extract_edge_points(field, 10**6, seed=0)
    again = extract_edge_points(field, 10**6, seed=99)
    assert 3 <= len(everything) < 10**6
    np.testing.assert_array_equal(everything.data, again.data)


def test_extract_deterministic():
    img, _ = render_disk(SynthDiskConfig(seed=5, noise_lambda=256))
    field = gradient_field(img)
    a = extract_edge_points(field, 100, seed=42)
    b = extract_edge_points(field, 100, seed=42)
    c = extract_edge_points(field, 100, seed=43)
    np.testing.assert_array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_extract_blank_image():
    field = gradient_field(GrayImage(np.zeros((30, 30))))
    with pytest.raises(InsufficientEdgesError):
        extract_edge_points(field, 50, seed=0)


def test_extract_rejects_small_max_points():
    field = gradient_field(GrayImage(np.zeros((30, 30))))
    with pytest.raises(ValidationError):
        extract_edge_points(field, 2)


def test_edge_point_set_access():
    pts = EdgePointSet.from_points([(1, 2, 0.6, 0.8), (3, 4, 1, 0)])
    assert len(pts) == 2
    assert pts[1] == (3.0, 4.0, 1.0, 0.0)
    assert list(pts)[0].ny == 0.8
    assert pts.negated_normals()[0].nx == -0.6
    assert pts.translated(1, 1)[0].x == 2.0
    assert len(pts.subset([0])) == 1
    with pytest.raises(ValidationError):
        EdgePointSet([1, 2], [1], [1], [1])
    assert math.isclose(pts.data[2, 0] ** 2 + pts.data[3, 0] ** 2, 1.0)
