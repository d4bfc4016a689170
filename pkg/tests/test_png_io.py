"""
Tests for PNG reading and writing
"""

import cv2
import numpy as np
import pytest

from app.core.exceptions import InvalidImage
from app.core.png_io import read_png, write_png


class TestPngRoundTrip:
    def test_sixteen_bit_error_bound(self, tmp_path, make_image):
        """Test that a 16-bit round trip stays within one quantization step"""
        img = make_image(5, 7)
        back = read_png(write_png(tmp_path / "a.png", img))
        assert back.dtype == np.float32
        assert back.shape == (5, 7, 3)
        assert np.max(np.abs(back - img)) <= 1.0 / 65535 + 1e-7

    def test_eight_bit_error_bound(self, tmp_path, make_image):
        """Test that an 8-bit round trip stays within half a quantization step"""
        img = make_image(4, 4)
        back = read_png(write_png(tmp_path / "b.png", img, bit_depth=8))
        assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-6

    def test_channel_order_is_rgb(self, tmp_path):
        """Test that red stays in channel 0 after a round trip"""
        img = np.zeros((2, 2, 3))
        img[..., 0] = 1.0
        back = read_png(write_png(tmp_path / "red.png", img))
        np.testing.assert_allclose(back[..., 0], 1.0)
        np.testing.assert_allclose(back[..., 1:], 0.0)

    def test_out_of_range_is_clamped(self, tmp_path):
        """Test that values outside [0, 1] are clamped on write"""
        img = np.full((2, 2, 3), 1.5)
        img[0, 0] = -0.2
        back = read_png(write_png(tmp_path / "c.png", img))
        assert back.max() == pytest.approx(1.0)
        assert back.min() == pytest.approx(0.0)

    def test_writes_are_byte_identical(self, tmp_path, make_image):
        """Test that writing the same image twice yields the same bytes"""
        img = make_image(6, 6)
        a = write_png(tmp_path / "x.png", img).read_bytes()
        b = write_png(tmp_path / "y.png", img).read_bytes()
        assert a == b


class TestReadPng:
    def test_grayscale_is_expanded(self, tmp_path):
        """Test that a single-channel PNG becomes three equal channels"""
        path = tmp_path / "gray.png"
        cv2.imwrite(str(path), np.full((3, 3), 128, dtype=np.uint8))
        img = read_png(path)
        assert img.shape == (3, 3, 3)
        np.testing.assert_allclose(img, 128 / 255, atol=1e-6)

    def test_undecodable_file(self, tmp_path):
        """Test that a non-image file raises InvalidImage"""
        path = tmp_path / "junk.png"
        path.write_bytes(b"not a png")
        with pytest.raises(InvalidImage):
            read_png(path)

    def test_bad_bit_depth(self, tmp_path, make_image):
        """Test that only 8 and 16 bit output is accepted"""
        with pytest.raises(ValueError):
            write_png(tmp_path / "d.png", make_image(), bit_depth=12)
