import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from conftest import random_operator, random_stack
from defocuskit import (BlurOperator, DefocusModel, DimensionError, NoiseSpec, apply, apply_adjoint,
                        build_masks, synthesize_data)


def brute_force_forward(x, kernels, dof):
    """Pixel-by-pixel sum of (mu_n x) * p_n with row bands."""
    l, w = x.shape
    rho = kernels.shape[1]
    out = np.zeros((l + rho - 1, w + rho - 1))
    for r in range(l):
        k = kernels[r // dof]
        for c in range(w):
            out[r:r + rho, c:c + rho] += x[r, c] * k
    return out


def test_forward_matches_brute_force(rng):
    op = random_operator(rng, 8, 4, 9, 32, physical=False)
    x = rng.random((32, 32))
    expected = brute_force_forward(x, op.psfs.kernels, 4)
    assert op.image_shape == (40, 40)
    assert np.abs(op.apply(x) - expected).max() < 1e-10


def test_single_zone_is_plain_convolution(rng):
    op = random_operator(rng, 1, 12, 7, 10, physical=False)
    x = rng.random((12, 10))
    expected = signal.convolve2d(x, op.psfs[0], mode="full")
    np.testing.assert_allclose(op.apply(x), expected, atol=1e-12)


def test_adjoint_is_valid_correlation(rng):
    op = random_operator(rng, 3, 5, 5, 11, physical=False)
    y = rng.random(op.image_shape)
    expected = np.vstack([signal.correlate2d(y[z * 5:z * 5 + 5 + 4], op.psfs[z], mode="valid")
                          for z in range(3)])
    np.testing.assert_allclose(op.adjoint(y), expected, atol=1e-12)


@pytest.mark.parametrize("backend", ["fft", "direct"])
@pytest.mark.parametrize("orientation", ["rows", "columns"])
def test_adjoint_identity(rng, backend, orientation):
    for n, s, rho in [(1, 3, 3), (4, 1, 9), (16, 8, 17), (4, 3, 17)]:
        op = random_operator(rng, n, s, rho, 13, backend, orientation, physical=False)
        x = rng.standard_normal(op.object_shape)
        y = rng.standard_normal(op.image_shape)
        lhs = np.vdot(op.apply(x), y)
        rhs = np.vdot(x, op.adjoint(y))
        assert abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y)) < 1e-10


def test_column_bands_are_transposed_row_bands(rng):
    stack = random_stack(rng, 5, 7)
    model = DefocusModel(5, 3, 0.1, 3, 7, "columns")
    cols = BlurOperator(build_masks(model, 9, 15), stack, (9, 15), "columns")
    rows_stack = type(stack)(stack.kernels.transpose(0, 2, 1).copy(), stack.depths)
    rows = BlurOperator(build_masks(model.replace(orientation="rows"), 15, 9), rows_stack, (15, 9))
    x = rng.random((9, 15))
    np.testing.assert_allclose(cols.apply(x), rows.apply(x.T).T, atol=1e-12)
    assert cols.image_shape == (15, 21)


@pytest.mark.parametrize("orientation", ["rows", "columns"])
def test_backends_agree(rng, orientation):
    fast = random_operator(rng, 6, 4, 11, 19, "fft", orientation)
    direct = BlurOperator(fast.masks, fast.psfs, fast.object_shape, orientation, "direct")
    x = rng.random(fast.object_shape)
    y = rng.random(fast.image_shape)
    assert np.abs(fast.apply(x) - direct.apply(x)).max() < 1e-9
    assert np.abs(fast.adjoint(y) - direct.adjoint(y)).max() < 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.sampled_from([1, 3, 5]), st.integers(1, 9),
       st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2 ** 31))
def test_linearity(n, s, rho, w, a, b, seed):
    rng = np.random.default_rng(seed)
    op = random_operator(rng, n, s, rho, w, physical=False)
    x, y = rng.random(op.object_shape), rng.random(op.object_shape)
    np.testing.assert_allclose(op.apply(a * x + b * y), a * op.apply(x) + b * op.apply(y),
                               atol=1e-10)


def test_norm_bounded_by_one(rng):
    # unit-sum nonnegative kernels make every zone a contraction in l2
    for _ in range(10):
        op = random_operator(rng, 5, 3, 9, 12)
        x = rng.standard_normal(op.object_shape)
        assert np.linalg.norm(op.apply(x)) <= np.linalg.norm(x) * (1 + 1e-12)


def test_mass_preserved(rng):
    op = random_operator(rng, 4, 2, 5, 8)
    x = rng.random(op.object_shape)
    assert op.apply(x).sum() == pytest.approx(x.sum(), rel=1e-12)


def test_module_functions(rng):
    op = random_operator(rng, 2, 2, 3, 4)
    x = rng.random(op.object_shape)
    y = rng.random(op.image_shape)
    np.testing.assert_array_equal(apply(op, x), op.apply(x))
    np.testing.assert_array_equal(apply_adjoint(op, y), op.adjoint(y))


def test_central_crop(rng):
    op = random_operator(rng, 2, 3, 5, 4)
    y = np.arange(np.prod(op.image_shape), dtype=float).reshape(op.image_shape)
    np.testing.assert_array_equal(op.central_crop(y), y[2:8, 2:6])


def test_delta_object_reproduces_kernel():
    model = DefocusModel(3, 3, 0.8, 1, 7)
    op = BlurOperator.from_model(model, (9, 9))
    x = np.zeros((9, 9))
    x[7, 4] = 1.0  # zone 3
    np.testing.assert_allclose(op.apply(x)[7:14, 4:11], op.psfs[2], atol=1e-14)


def test_synthesize_noiseless_equals_forward(rng):
    op = random_operator(rng, 3, 2, 5, 6)
    obj = rng.random(op.object_shape)
    np.testing.assert_array_equal(synthesize_data(op, obj), op.apply(obj))


def test_synthesize_is_seeded(rng):
    op = random_operator(rng, 3, 2, 5, 6)
    obj = rng.random(op.object_shape)
    noise = NoiseSpec("poisson", peak=1e3)
    a = synthesize_data(op, obj, noise, seed=4)
    assert np.array_equal(a, synthesize_data(op, obj, noise, seed=4))
    assert not np.array_equal(a, synthesize_data(op, obj, noise, seed=5))
    assert a.min() >= 0


def test_synthesize_rejects_out_of_range(rng):
    op = random_operator(rng, 2, 2, 3, 3)
    with pytest.raises(ValueError):
        synthesize_data(op, np.full(op.object_shape, 1.5))


def test_shape_errors(rng):
    op = random_operator(rng, 2, 2, 3, 3)
    with pytest.raises(DimensionError):
        op.apply(np.zeros((4, 4)))
    with pytest.raises(DimensionError):
        op.adjoint(np.zeros((4, 3)))
    with pytest.raises(ValueError):
        op.apply(np.full(op.object_shape, np.nan))
    with pytest.raises(ValueError):
        BlurOperator(op.masks, op.psfs, op.object_shape, backend="gpu")
    with pytest.raises(DimensionError):
        BlurOperator(op.masks[:1], op.psfs, op.object_shape)
