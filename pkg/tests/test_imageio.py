import numpy as np
import pytest
from PIL import Image

from cider import imageio
from cider.errors import FormatError, InputError


@pytest.fixture
def img():
    return np.random.default_rng(0).random((13, 17)).astype(np.float32)


def test_pfm_lossless(tmp_path, img):
    p = tmp_path / "a.pfm"
    imageio.write_image(p, img)
    assert p.read_bytes().startswith(b"PFMg\n13 17\n")
    assert np.array_equal(imageio.read_image(p), img)


def test_pfm_is_little_endian(tmp_path):
    p = tmp_path / "a.pfm"
    imageio.write_pfm(p, np.array([[1.0]]))
    assert p.read_bytes().endswith(b"\x00\x00\x80\x3f")


@pytest.mark.parametrize("bits,step", [(8, 1 / 255), (16, 1 / 65535)])
def test_png_quantization(tmp_path, img, bits, step):
    p = tmp_path / "a.png"
    imageio.write_image(p, img, bits)
    back = imageio.read_image(p)
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= step / 2 + 1e-7


def test_16bit_mode(tmp_path, img):
    p = tmp_path / "a.png"
    imageio.write_image(p, img, 16)
    with Image.open(p) as im:
        assert im.mode.startswith("I")


def test_rgb_round_trip(tmp_path):
    rgb = np.random.default_rng(1).random((3, 6, 5))
    p = tmp_path / "c.png"
    imageio.write_image(p, rgb)
    back = imageio.read_image(p)
    assert back.shape == (3, 6, 5) and np.max(np.abs(back - rgb)) <= 0.5 / 255 + 1e-7


def test_values_are_clamped(tmp_path):
    p = tmp_path / "a.png"
    imageio.write_image(p, np.array([[-0.5, 1.5]]))
    assert np.array_equal(imageio.read_image(p), [[0.0, 1.0]])


@pytest.mark.parametrize("blob", [b"P6\n1 1\n", b"PFMg\n2 2\n" + b"\0" * 12, b"PFMg\nx y\n", b"PFMg\n"])
def test_bad_pfm(tmp_path, blob):
    p = tmp_path / "bad.pfm"
    p.write_bytes(blob)
    with pytest.raises(FormatError):
        imageio.read_image(p)


def test_bad_png_and_missing(tmp_path):
    p = tmp_path / "bad.png"
    p.write_bytes(b"not a png")
    with pytest.raises(FormatError):
        imageio.read_image(p)
    with pytest.raises(InputError):
        imageio.read_image(tmp_path / "missing.png")


def test_non_finite_refused(tmp_path):
    with pytest.raises(InputError):
        imageio.write_image(tmp_path / "a.pfm", np.array([[np.nan]]))
