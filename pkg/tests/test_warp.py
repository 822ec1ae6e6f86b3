import numpy as np
import pytest

from plumbline.model import DistortionParams
from plumbline.warp import cubic_weights, distort_image, sample_bicubic, undistort_image


def smooth_image(size=256):
    y, x = np.mgrid[0:size, 0:size]
    return 0.5 + 0.25 * np.sin(x / 7.0) * np.cos(y / 9.0) + 0.2 * np.sin((x + y) / 13.0)


class TestKernel:
    def test_partition_of_unity(self):
        t = np.linspace(0, 1, 101)
        assert np.allclose(cubic_weights(t).sum(axis=-1), 1.0, atol=1e-15)

    def test_interpolates_lattice(self):
        assert np.array_equal(cubic_weights(0.0), [0.0, 1.0, 0.0, 0.0])

    def test_samples_at_integers(self, rng):
        img = rng.random((10, 12))
        ys, xs = np.mgrid[1:8, 1:10]
        v, cov = sample_bicubic(img, xs.astype(float), ys.astype(float))
        assert cov.all()
        assert np.array_equal(v, img[1:8, 1:10])

    def test_reproduces_linear(self):
        y, x = np.mgrid[0:10, 0:10]
        img = 0.01 * x + 0.02 * y
        v, _ = sample_bicubic(img, np.array([3.3, 5.7]), np.array([4.1, 2.9]))
        assert np.allclose(v, [0.01 * 3.3 + 0.02 * 4.1, 0.01 * 5.7 + 0.02 * 2.9])

    def test_outside_support(self):
        img = np.ones((10, 10))
        v, cov = sample_bicubic(img, np.array([0.5, 8.5, np.nan]), np.array([5.0, 5.0, 5.0]))
        assert cov.tolist() == [False, False, False]
        assert np.all(v == 0.0)


class TestUndistort:
    def test_identity_interior_exact(self, rng):
        img = rng.random((40, 50))
        out, mask = undistort_image(img, DistortionParams.identity((25, 20)))
        assert np.array_equal(out[mask], img[mask])
        assert mask[1:-2, 1:-2].all()

    def test_constant_preserved(self):
        img = np.full((60, 60), 0.37)
        p = DistortionParams(c=(31, 28), gamma=-2e-5, b=(1e-3, -1e-3, 0, 0, 5e-4, 0))
        out, mask = undistort_image(img, p)
        assert mask.any()
        assert np.allclose(out[mask], 0.37, atol=1e-12)
        assert np.all(out[~mask] == 0.0)

    def test_output_clamped(self):
        img = np.zeros((30, 30))
        img[::2, ::2] = 1.0
        out, _ = undistort_image(img, DistortionParams(c=(15, 15), gamma=1e-4))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_custom_output_shape(self):
        out, mask = undistort_image(np.ones((20, 30)), DistortionParams.identity((15, 10)),
                                    out_shape=(10, 12))
        assert out.shape == (10, 12) and mask.shape == (10, 12)

    def test_round_trip_psnr(self):
        img = smooth_image()
        rho_max = np.hypot(128, 128)
        for beta in (-0.2, 0.2):
            p = DistortionParams(c=(128, 128), gamma=beta / rho_max**2)
            d, _ = distort_image(img, p)
            u, mask = undistort_image(d, p)
            inner = np.zeros_like(mask)
            inner[20:-20, 20:-20] = True
            inner &= mask
            # source of each compared pixel must itself have been covered
            _, dmask = distort_image(np.ones_like(img), p)
            keep = inner & undistort_image(dmask.astype(float), p)[0].astype(bool)
            mse = np.mean((u[keep] - img[keep]) ** 2)
            assert 10 * np.log10(1.0 / mse) > 35.0

    def test_infeasible_pixels_black(self):
        # outputs beyond the Harris saturation radius have no preimage
        p = DistortionParams(c=(20, 20), gamma=1e-2)
        out, mask = undistort_image(np.ones((40, 40)), p)
        assert not mask[0, 0] and out[0, 0] == 0.0
