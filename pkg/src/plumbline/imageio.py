"""Grayscale image and parameter-file I/O."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .model import DistortionParams

LUMA = np.array([0.299, 0.587, 0.114])


def read_gray(path) -> tuple[np.ndarray, int]:
    """Load an image as floats in [0, 1] plus its bit depth (8 or 16).

    Color images are reduced to luma.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64)
                bits = 16
                arr = arr / 65535.0
            else:
                bits = 8
                if mode in ("L", "P", "1", "LA"):
                    arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
                else:
                    rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
                    arr = rgb @ LUMA
    except (UnidentifiedImageError, OSError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    if not np.all(np.isfinite(arr)):
        raise OSError(f"image {path} contains non-finite values")
    return np.clip(arr, 0.0, 1.0), bits


def write_gray(path, img, bits: int = 8) -> None:
    """Write a [0, 1] image as 8- or 16-bit grayscale; format from the suffix."""
    img = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    if bits == 16:
        im = Image.fromarray(np.round(img * 65535.0).astype(np.uint16))
    else:
        im = Image.fromarray(np.round(img * 255.0).astype(np.uint8))
    im.save(path)


def write_mask(path, mask) -> None:
    Image.fromarray(np.asarray(mask, dtype=bool)).convert("1").save(path)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def read_params(path) -> DistortionParams:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read parameters {path}: {exc}") from exc
    try:
        return DistortionParams.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path} is not valid JSON: {exc}") from exc


def write_params(path, params: DistortionParams) -> None:
    atomic_write_text(path, params.to_json())
