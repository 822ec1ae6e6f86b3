import json

import numpy as np
import pytest
from PIL import Image

from plumbline.imageio import (atomic_write_text, read_gray, read_params, write_gray,
                               write_mask, write_params)
from plumbline.model import DistortionParams


def test_8bit_round_trip(tmp_path, rng):
    img = np.round(rng.random((12, 9)) * 255) / 255
    write_gray(tmp_path / "a.png", img)
    back, bits = read_gray(tmp_path / "a.png")
    assert bits == 8 and np.array_equal(back, img)


def test_16bit_round_trip(tmp_path, rng):
    img = np.round(rng.random((12, 9)) * 65535) / 65535
    write_gray(tmp_path / "a.png", img, bits=16)
    back, bits = read_gray(tmp_path / "a.png")
    assert bits == 16 and np.array_equal(back, img)


def test_pgm(tmp_path):
    img = np.linspace(0, 1, 20).reshape(4, 5)
    write_gray(tmp_path / "a.pgm", img)
    back, _ = read_gray(tmp_path / "a.pgm")
    assert np.allclose(back, img, atol=0.5 / 255)


def test_color_uses_luma(tmp_path):
    rgb = np.zeros((2, 2, 3), np.uint8)
    rgb[0, 0] = (255, 0, 0)
    rgb[0, 1] = (0, 255, 0)
    rgb[1, 0] = (0, 0, 255)
    Image.fromarray(rgb).save(tmp_path / "c.png")
    back, _ = read_gray(tmp_path / "c.png")
    assert back[0, 0] == pytest.approx(0.299)
    assert back[0, 1] == pytest.approx(0.587)
    assert back[1, 0] == pytest.approx(0.114)


def test_unreadable(tmp_path):
    (tmp_path / "empty.png").write_bytes(b"")
    with pytest.raises(OSError):
        read_gray(tmp_path / "empty.png")
    with pytest.raises(OSError):
        read_gray(tmp_path / "missing.png")


def test_mask_is_one_bit(tmp_path):
    mask = np.zeros((5, 6), bool)
    mask[1:3, 2:5] = True
    write_mask(tmp_path / "m.png", mask)
    with Image.open(tmp_path / "m.png") as im:
        assert im.mode == "1"
        assert np.array_equal(np.asarray(im), mask)


def test_params_round_trip(tmp_path):
    p = DistortionParams(c=(10.5, 20.25), gamma=-1.5e-6, b=(1e-4, 0, 0, 2e-4, 0, 0))
    write_params(tmp_path / "p.json", p)
    assert read_params(tmp_path / "p.json") == p
    assert set(json.loads((tmp_path / "p.json").read_text())) == {"c", "gamma", "b"}


def test_bad_params(tmp_path):
    (tmp_path / "p.json").write_text("{not json")
    with pytest.raises(ValueError):
        read_params(tmp_path / "p.json")
    with pytest.raises(OSError):
        read_params(tmp_path / "nope.json")


def test_atomic_write_leaves_no_temp(tmp_path):
    atomic_write_text(tmp_path / "x.json", "{}\n")
    assert [p.name for p in tmp_path.iterdir()] == ["x.json"]
