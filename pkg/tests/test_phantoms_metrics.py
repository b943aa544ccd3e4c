import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elastic_imaging import forward as fw
from elastic_imaging.errors import DimMismatch, IdenticalImages, ZeroSignal
from elastic_imaging.metrics import (
    MetricReport, minmax, mse, normalized_cross_correlation, psnr, psnr_conventional, report, ssim,
)
from elastic_imaging.phantoms import (
    add_noise, center_input, empirical_snr, make_rng, phantom_source, random_phantom, shepp_logan,
)


def test_philox_stream_frozen():
    # frozen outputs of numpy's Philox bit generator
    assert make_rng(0).random(3).tolist() == pytest.approx(
        [0.01406703566564771, 0.2577672456246177, 0.47156538101528966], rel=1e-15)
    assert make_rng(42).integers(0, 2**31, 3).tolist() == [1986878661, 184850304, 302057528]


def test_random_phantom_frozen(ref_grid):
    ph = random_phantom(0, ref_grid)
    assert len(ph.ellipses) == 2
    assert ph.ellipses[0].intensity == pytest.approx(8.71185546514005, rel=1e-14)
    assert float(ph.image.data.sum()) == pytest.approx(665.7149315604353, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_random_phantom_properties(small_grid, seed):
    ph = random_phantom(seed, small_grid)
    img = ph.image.data
    assert 1 <= len(ph.ellipses) <= 10
    assert img.min() >= 0 and img.max() == 1.0
    X, Y = small_grid.mesh()
    assert np.all(img[np.hypot(X, Y) > 1 - 4 * small_grid.h_x] == 0)
    assert np.array_equal(random_phantom(seed, small_grid).image.data, img)


def test_shepp_logan(ref_grid):
    ph = shepp_logan(ref_grid)
    assert len(ph.ellipses) == 10
    assert ph.image.data.max() == 1.0 and ph.image.data.min() == 0.0
    assert float(ph.image.data.sum()) == pytest.approx(911.21, rel=1e-9)


def test_phantom_files(tmp_path, small_grid):
    files = random_phantom(3, small_grid).write(tmp_path / "ph")
    assert [p.name for p in files] == ["ph.efd", "ph.json"]


def test_phantom_source(small_grid):
    ph = random_phantom(1, small_grid)
    F = phantom_source(ph)
    assert np.array_equal(F.stack()[0], ph.image.data) and not F.stack()[1].any()


def test_noise(small_grid):
    det = fw.circle_detectors(small_grid, 8, 16)
    rng = np.random.default_rng(0)
    m = fw.MeasurementSet(det, rng.standard_normal((2, 16, 8)))
    assert add_noise(m, math.inf, 0) is m
    noisy = add_noise(m, 10.0, 5)
    assert np.array_equal(noisy.traces, add_noise(m, 10.0, 5).traces)
    assert empirical_snr(m.traces, noisy.traces) == pytest.approx(10.0, abs=1.0)
    with pytest.raises(ZeroSignal):
        add_noise(fw.MeasurementSet(det, np.zeros((2, 16, 8))), 5.0, 0)


def test_center_input():
    assert np.allclose(center_input([1.0, 2.0, 3.0]), [-1, 0, 1])


def test_psnr_hand_computed():
    f = np.array([[1.0, 0.5], [0.0, 0.25]])
    t = np.array([[0.5, 0.5], [0.0, 0.25]])
    # 20 log10(4 · 1² / 0.5) = 20 log10 8
    assert psnr(f, t) == pytest.approx(20 * math.log10(8), rel=1e-14)
    # MSE = 0.0625, peak 0.5: 10 log10(0.25 / 0.0625)
    assert psnr_conventional(f, t) == pytest.approx(10 * math.log10(4), rel=1e-14)
    assert mse(f, t) == 0.0625
    with pytest.raises(IdenticalImages):
        psnr(f, f)
    with pytest.raises(DimMismatch):
        psnr(f, np.ones(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ssim_properties(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((8, 8))
    b = rng.random((8, 8))
    assert ssim(a, a) == 1.0
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)
    assert -1 <= ssim(a, b) <= 1


def test_ssim_frozen():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    b = np.array([[0.0, 0.5], [0.5, 0.0]])
    c1, c2 = 1e-4, 9e-4
    expect = (2 * 0.5 * 0.25 + c1) * (2 * 0.125 + c2) / ((0.25 + 0.0625 + c1) * (0.25 + 0.0625 + c2))
    assert ssim(a, b) == pytest.approx(expect, rel=1e-14)


def test_report_csv(tmp_path):
    rng = np.random.default_rng(0)
    rep = report(rng.random((4, 4)), rng.random((4, 4)))
    assert isinstance(rep, MetricReport) and rep.dims == (4, 4)
    path = tmp_path / "m.csv"
    rep.append_csv(path, "a")
    rep.append_csv(path, "b")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("label,psnr_db") and len(lines) == 3


def test_ncc_and_minmax():
    a = np.arange(4.0)
    assert normalized_cross_correlation(a, 2 * a + 1) == pytest.approx(1.0)
    assert minmax(a).tolist() == [0, 1 / 3, 2 / 3, 1]
    assert not minmax(np.ones(3)).any()
