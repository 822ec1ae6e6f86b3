"""Corrected output image by inverse mapping and Catmull-Rom interpolation."""

from __future__ import annotations

import numpy as np

from .model import DistortionParams, correct_point, invert_point

CATMULL_ROM_A = -0.5


def cubic_weights(t, a: float = CATMULL_ROM_A):
    """Weights of the four taps at offsets -1, 0, 1, 2 for fractional position ``t``.

    They sum to one and reduce to ``(0, 1, 0, 0)`` at ``t = 0``.
    """
    t = np.asarray(t, dtype=float)
    t2 = t * t
    t3 = t2 * t
    w0 = a * t3 - 2.0 * a * t2 + a * t
    w1 = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    w2 = -(a + 2.0) * t3 + (2.0 * a + 3.0) * t2 - a * t
    w3 = -a * t3 + a * t2
    return np.stack([w0, w1, w2, w3], axis=-1)


def sample_bicubic(img, x, y):
    """Sample ``img`` at real coordinates; returns ``(values, covered)``.

    A sample is covered when its whole 4x4 support lies inside the image;
    uncovered samples are 0.
    """
    img = np.asarray(img, dtype=float)
    h, w = img.shape
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    finite = np.isfinite(x) & np.isfinite(y)
    xf = np.floor(np.where(finite, x, 0.0))
    yf = np.floor(np.where(finite, y, 0.0))
    covered = finite & (xf >= 1) & (xf <= w - 3) & (yf >= 1) & (yf <= h - 3)
    out = np.zeros(x.shape)
    if not covered.any():
        return out, covered
    xi = xf[covered].astype(np.intp)
    yi = yf[covered].astype(np.intp)
    wx = cubic_weights(x[covered] - xi)
    wy = cubic_weights(y[covered] - yi)
    acc = np.zeros(len(xi))
    for j in range(4):
        row = np.zeros(len(xi))
        for i in range(4):
            row += wx[:, i] * img[yi + j - 1, xi + i - 1]
        acc += wy[:, j] * row
    out[covered] = acc
    return out, covered


def undistort_image(img, params: DistortionParams, out_shape=None):
    """Resample ``img`` so that output pixel ``x'`` shows input pixel ``D^-1(x')``.

    Args:
        img: ``(H, W)`` array in [0, 1].
        params: Correction parameters.
        out_shape: ``(H, W)`` of the output; defaults to the input shape.

    Returns:
        ``(image, mask)``; pixels whose source or its interpolation support
        falls outside the input (or outside the model's invertible range) are
        black and ``False`` in the mask.
    """
    img = np.asarray(img, dtype=float)
    h, w = out_shape or img.shape
    ys, xs = np.mgrid[0:h, 0:w]
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    src, valid = invert_point(params, pts, strict=False)
    src[~valid] = np.nan
    vals, covered = sample_bicubic(img, src[:, 0], src[:, 1])
    out = np.clip(vals, 0.0, 1.0).reshape(h, w)
    return out, covered.reshape(h, w)


def distort_image(img, params: DistortionParams, out_shape=None):
    """Inverse of :func:`undistort_image`: output pixel ``y`` shows ``img`` at ``D(y)``.

    Used to synthesize distorted test images from straight-line renders.
    """
    img = np.asarray(img, dtype=float)
    h, w = out_shape or img.shape
    ys, xs = np.mgrid[0:h, 0:w]
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    src, valid = correct_point(params, pts, strict=False)
    src[~valid] = np.nan
    vals, covered = sample_bicubic(img, src[:, 0], src[:, 1])
    out = np.clip(vals, 0.0, 1.0).reshape(h, w)
    return out, covered.reshape(h, w)
