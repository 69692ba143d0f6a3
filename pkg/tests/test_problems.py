import math

import numpy as np
import pytest

from csnewton.problems import (
    add_noise_to_psnr,
    make_itv_instance,
    psnr,
    relative_error,
    shepp_logan,
)


def test_phantom_range_and_background():
    img = shepp_logan(64, 64)
    assert img.shape == (64, 64)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert img[0, 0] == 0.0  # corner lies outside the head ellipse


def test_phantom_center_value():
    # hand-derived from the ellipse table: only the two head ellipses cover
    # the origin, 1.0 - 0.8 = 0.2
    for n in (64, 256):
        img = shepp_logan(n, n)
        assert abs(img[n // 2, n // 2] - 0.2) <= 1e-12


def test_phantom_rejects_tiny():
    with pytest.raises(ValueError):
        shepp_logan(8, 8)


def test_psnr_hand_cases():
    base = np.zeros((10, 10))
    assert abs(psnr(base + 0.1, base) - 20.0) <= 1e-12
    assert abs(psnr(base + 0.01, base) - 40.0) <= 1e-12
    assert psnr(base, base) == math.inf
    with pytest.raises(ValueError):
        psnr(np.zeros((2, 2)), np.zeros((3, 3)))


def test_relative_error_cases():
    x = np.array([1.0, 2.0, -1.0])
    assert relative_error(x, x) == 0.0
    assert abs(relative_error(2 * x, x) - 1.0) <= 1e-15
    assert abs(relative_error(np.zeros(3), x) - 1.0) <= 1e-15
    with pytest.raises(ValueError):
        relative_error(x, np.zeros(3))


def test_noise_hits_target_psnr_exactly():
    img = shepp_logan(32, 32)
    noisy = add_noise_to_psnr(img, 22.2, seed=1)
    assert abs(psnr(noisy, img) - 22.2) <= 1e-9


def test_noise_deterministic_and_inf_passthrough():
    img = shepp_logan(32, 32)
    a = add_noise_to_psnr(img, 15.0, seed=9)
    b = add_noise_to_psnr(img, 15.0, seed=9)
    np.testing.assert_array_equal(a, b)
    clean = add_noise_to_psnr(img, math.inf, seed=9)
    np.testing.assert_array_equal(clean, img)
    assert clean is not img


def test_itv_instance_full_mask_noiseless_recovers():
    img = shepp_logan(16, 16)
    inst = make_itv_instance(img, 1.0, math.inf, seed=0)
    # full orthonormal sampling: adjoint inverts the measurement exactly
    np.testing.assert_allclose(
        inst.A.adjoint_apply(inst.b).reshape((16, 16), order="F"), img, atol=1e-12
    )


def test_itv_instance_quarter_mask_reproducible():
    img = shepp_logan(16, 16)
    a = make_itv_instance(img, 0.25, 22.2, seed=4)
    b = make_itv_instance(img, 0.25, 22.2, seed=4)
    assert len(a.mask) == 64
    assert a.mask.selected_indices[0] == 0  # constant row always sampled
    np.testing.assert_array_equal(a.mask.selected_indices, b.mask.selected_indices)
    np.testing.assert_array_equal(a.b, b.b)
    np.testing.assert_array_equal(a.noise, b.noise)


def test_itv_instance_measurement_consistency():
    img = shepp_logan(16, 16)
    inst = make_itv_instance(img, 0.25, 22.2, seed=4)
    noisy = inst.ground_truth + inst.noise
    np.testing.assert_array_equal(inst.b, inst.A.apply(noisy.ravel(order="F")))


def test_itv_instance_rejects_bad_ratio():
    with pytest.raises(ValueError):
        make_itv_instance(shepp_logan(16, 16), 0.0, math.inf, seed=0)
