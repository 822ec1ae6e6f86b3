"""Lens distortion self-calibration from straight edges by Hough entropy."""

from .edgels import EdgelSet, ExtractionConfig, extract_edgels
from .hough import OrientationHistogram, entropy, hough_1d
from .model import (DistortionParams, DomainError, Edgel, correct_point, invert_point,
                    jacobian, transform_edgel, transform_edgels)
from .optim import CalibrationResult, OptimConfig, TooFewEdgelsError, mcdh_calibrate
from .warp import distort_image, undistort_image

__all__ = [
    "CalibrationResult", "DistortionParams", "DomainError", "Edgel", "EdgelSet",
    "ExtractionConfig", "OptimConfig", "OrientationHistogram", "TooFewEdgelsError",
    "correct_point", "distort_image", "entropy", "extract_edgels", "hough_1d",
    "invert_point", "jacobian", "mcdh_calibrate", "transform_edgel", "transform_edgels",
    "undistort_image",
]
