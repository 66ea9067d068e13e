import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defocuskit import (ApertureSpec, DefocusModel, PsfTruncationWarning, build_psf_stack, make_psf,
                        zernike_defocus)
from defocuskit.imageio import read_image
from defocuskit.psf import pupil_mask, second_moment_radius


def test_zernike_center_and_edge():
    z = zernike_defocus(129)
    assert z[64, 64] == pytest.approx(-math.sqrt(3))
    assert z[64, 128] == pytest.approx(math.sqrt(3))
    assert z[0, 0] == 0.0  # corner lies outside the disk


def test_zernike_unnormalized_switch():
    z = zernike_defocus(33, normalized=False)
    assert z[16, 16] == pytest.approx(-1.0)
    assert z[16, 32] == pytest.approx(1.0)


def test_zernike_unit_mean_square_quadrature():
    n = 129
    c = (n - 1) / 2
    yy, xx = np.mgrid[:n, :n] - c
    disk = np.hypot(xx, yy) / c <= 1.0
    z = zernike_defocus(n)
    assert abs((z[disk] ** 2).mean() - 1.0) <= 0.02


def test_zernike_single_pixel():
    assert zernike_defocus(1).shape == (1, 1)
    with pytest.raises(ValueError):
        zernike_defocus(0)


@pytest.mark.parametrize("depth", [0.0, 0.3, -1.7, 4.0, 7.0])
def test_kernel_invariants(depth):
    k = make_psf(ApertureSpec(33), depth)
    assert k.shape == (33, 33)
    assert k.min() >= 0
    assert abs(k.sum() - 1.0) < 1e-12
    assert np.abs(k - k[::-1, ::-1]).max() < 1e-12


def test_zero_depth_peak_at_center():
    k = make_psf(ApertureSpec(65), 0.0)
    c = 32
    assert k[c, c] == k.max()
    assert (k == k.max()).sum() == 1


def test_zero_depth_is_airy_pattern():
    ap = ApertureSpec(31)
    expected = np.abs(np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(pupil_mask(31, 0.5))))) ** 2
    np.testing.assert_allclose(make_psf(ap, 0.0), expected / expected.sum(), atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 8.0), st.sampled_from([9, 17, 33]), st.booleans())
def test_psf_even_in_depth(depth, rho, noll):
    ap = ApertureSpec(rho, noll_normalized=noll)
    assert np.abs(make_psf(ap, depth) - make_psf(ap, -depth)).max() < 1e-12


def test_second_moment_grows_with_depth():
    ap = ApertureSpec(65)
    radii = [second_moment_radius(make_psf(ap, float(t))) for t in range(8)]
    assert all(b > a for a, b in zip(radii, radii[1:]))


def test_large_depth_is_annular():
    k = make_psf(ApertureSpec(65), 7.0)
    c = 32
    yy, xx = np.mgrid[:65, :65] - c
    r = np.hypot(xx, yy)
    ring_peak = max(k[(r > s - 0.5) & (r <= s + 0.5)].mean() for s in range(1, 20))
    assert k[c, c] < ring_peak


def test_oversampled_psf_crops_and_warns():
    ap = ApertureSpec(9, 0.5, oversample=5)
    with pytest.warns(PsfTruncationWarning):
        k = make_psf(ap, 12.0)
    assert k.shape == (9, 9)
    assert abs(k.sum() - 1) < 1e-12
    with warnings.catch_warnings():
        warnings.simplefilter("error", PsfTruncationWarning)
        make_psf(ap, 0.0)


def test_stack_depths_benchmark_model():
    stack = build_psf_stack(DefocusModel(141, 3, 0.1, 71, 9))
    assert stack.depths[70] == pytest.approx(0.0)
    assert stack.depths[0] == pytest.approx(7.0)
    assert stack.kernels.shape == (141, 9, 9)
    np.testing.assert_allclose(stack[70], make_psf(ApertureSpec(9), 0.0))


def test_stack_depths_guide_star_model():
    stack = build_psf_stack(DefocusModel(116, 5, 0.0296, 8, 23, "columns"))
    assert stack.depths[0] == pytest.approx(0.2072)
    assert stack.depths[-1] == pytest.approx(-3.1968)


def test_stack_aggregates_truncation_warning():
    with pytest.warns(PsfTruncationWarning, match="of 20 PSFs"):
        build_psf_stack(DefocusModel(20, 1, 2.0, 1, 9))


def test_stack_save(tmp_path):
    model = DefocusModel(3, 1, 0.5, 2, 9)
    stack = build_psf_stack(model)
    stack.save(str(tmp_path), model)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["metadata.txt", "psf_1.pgm", "psf_2.pgm", "psf_3.pgm"]
    img = read_image(str(tmp_path / "psf_2.pgm"))
    assert img.max() == 1.0
    np.testing.assert_allclose(img, stack[1] / stack[1].max(), atol=1 / 65535)
    meta = (tmp_path / "metadata.txt").read_text()
    assert "focal_position=2" in meta and "n_zones=3" in meta
