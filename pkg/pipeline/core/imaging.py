"""Raster substrate: Netpbm decoding, smoothing, gradients and integral images."""
import math
import re
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import (
    DecodeFailure,
    DimensionOverflow,
    ImageTooSmall,
    RectOutOfBounds,
    TruncatedPayload,
    UnknownMagic,
    UnsupportedMaxval,
)

DEFAULT_MAX_PIXELS = 10**8
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale raster, row-major, shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"GrayImage needs a non-empty 2D array, got shape {data.shape}")
        if data.dtype != np.uint8:
            if np.any(data < 0) or np.any(data > 255):
                raise ValueError("GrayImage intensities must lie in [0, 255]")
            data = data.astype(np.uint8)
        object.__setattr__(self, "data", _frozen(data))

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])


@dataclass(frozen=True, eq=False)
class FloatImage:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"FloatImage needs a 2D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("FloatImage values must be finite")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])


@dataclass(frozen=True, eq=False)
class IntegralImage:
    """(height+1, width+1) table of cumulative sums; row 0 and column 0 are zero."""

    table: np.ndarray

    @property
    def width(self) -> int:
        return int(self.table.shape[1]) - 1

    @property
    def height(self) -> int:
        return int(self.table.shape[0]) - 1


# ---------------------------------------------------------------------------
# Netpbm
# ---------------------------------------------------------------------------

_MAGICS = {b"P2": (1, False), b"P5": (1, True), b"P3": (3, False), b"P6": (3, True)}
_COMMENT = re.compile(rb"#[^\r\n]*")


def _read_header(payload: bytes, count: int) -> Tuple[list, int]:
    """Reads `count` integer header tokens after the magic; returns (tokens, offset)."""
    tokens = []
    pos = 2
    size = len(payload)
    while len(tokens) < count:
        while pos < size and payload[pos:pos + 1].isspace():
            pos += 1
        if pos >= size:
            raise TruncatedPayload("Netpbm header ended early")
        if payload[pos:pos + 1] == b"#":
            while pos < size and payload[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < size and not payload[pos:pos + 1].isspace() and payload[pos:pos + 1] != b"#":
            pos += 1
        token = payload[start:pos]
        if not token.isdigit():
            raise DecodeFailure(f"Netpbm header token {token!r} is not a positive integer")
        tokens.append(int(token))
    return tokens, pos


def decode_netpbm(payload: bytes, max_pixels: int = DEFAULT_MAX_PIXELS) -> GrayImage:
    """Decodes P2/P3/P5/P6 data; color rasters are converted with BT.601 luma."""
    magic = bytes(payload[:2])
    if magic not in _MAGICS:
        raise UnknownMagic(f"Unsupported Netpbm magic {magic!r}")
    channels, binary = _MAGICS[magic]

    (width, height, maxval), pos = _read_header(payload, 3)
    if width < 1 or height < 1:
        raise DecodeFailure(f"Invalid Netpbm dimensions {width}x{height}")
    if width * height > max_pixels:
        raise DimensionOverflow(f"{width}x{height} exceeds the {max_pixels} pixel cap")
    if maxval < 1 or maxval > 255:
        raise UnsupportedMaxval(f"maxval {maxval} is not in [1, 255]")

    expected = width * height * channels
    if binary:
        # exactly one whitespace byte separates header and raster
        start = pos + 1
        raster = payload[start:start + expected]
        if len(raster) < expected:
            raise TruncatedPayload(f"Expected {expected} raster bytes, found {len(raster)}")
        samples = np.frombuffer(bytes(raster), dtype=np.uint8).astype(np.int64)
    else:
        fields = _COMMENT.sub(b" ", bytes(payload[pos:])).split()
        if len(fields) < expected:
            raise TruncatedPayload(f"Expected {expected} ASCII samples, found {len(fields)}")
        try:
            samples = np.array([int(f) for f in fields[:expected]], dtype=np.int64)
        except ValueError as e:
            raise DecodeFailure(f"Non-numeric ASCII sample: {e}") from e

    if np.any(samples > maxval):
        raise DecodeFailure(f"Sample value above maxval {maxval}")

    if channels == 1:
        gray = samples.reshape(height, width)
    else:
        rgb = samples.reshape(height, width, 3).astype(np.float64)
        luma = rgb[..., 0] * LUMA_WEIGHTS[0] + rgb[..., 1] * LUMA_WEIGHTS[1] + rgb[..., 2] * LUMA_WEIGHTS[2]
        # round half up
        gray = np.clip(np.floor(luma + 0.5), 0, 255)
    return GrayImage(gray.astype(np.uint8))


def encode_pgm(img: GrayImage) -> bytes:
    """Binary P5 encoding with maxval 255."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.data.tobytes()


def read_netpbm(path: str, max_pixels: int = DEFAULT_MAX_PIXELS) -> GrayImage:
    with open(path, "rb") as f:
        return decode_netpbm(f.read(), max_pixels=max_pixels)


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------

def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian with radius ceil(3 sigma)."""
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _convolve_axis(data: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(data, pad, mode="edge")
    out = np.zeros_like(data, dtype=np.float64)
    length = data.shape[axis]
    for tap, weight in enumerate(kernel):
        window = padded[tap:tap + length, :] if axis == 0 else padded[:, tap:tap + length]
        out += weight * window
    return out


def separable_filter(data: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return _convolve_axis(_convolve_axis(np.asarray(data, dtype=np.float64), kernel, 1), kernel, 0)


def gaussian_blur(img: Union[GrayImage, FloatImage], sigma: float) -> FloatImage:
    """Separable Gaussian smoothing with edge replication at the frame."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    data = np.asarray(img.data, dtype=np.float64)
    if sigma == 0:
        return FloatImage(data)
    return FloatImage(separable_filter(data, gaussian_kernel(sigma)))


def sobel_gradients(img: FloatImage) -> Tuple[FloatImage, FloatImage]:
    """3x3 Sobel derivatives scaled by 1/8; the one-pixel frame is zero."""
    data = np.asarray(img.data, dtype=np.float64)
    h, w = data.shape
    if h < 3 or w < 3:
        raise ImageTooSmall(f"Sobel needs at least 3x3 pixels, got {w}x{h}")

    gx = np.zeros_like(data)
    gy = np.zeros_like(data)
    right = data[:-2, 2:] + 2.0 * data[1:-1, 2:] + data[2:, 2:]
    left = data[:-2, :-2] + 2.0 * data[1:-1, :-2] + data[2:, :-2]
    below = data[2:, :-2] + 2.0 * data[2:, 1:-1] + data[2:, 2:]
    above = data[:-2, :-2] + 2.0 * data[:-2, 1:-1] + data[:-2, 2:]
    gx[1:-1, 1:-1] = (right - left) / 8.0
    gy[1:-1, 1:-1] = (below - above) / 8.0
    return FloatImage(gx), FloatImage(gy)


# ---------------------------------------------------------------------------
# Integral images
# ---------------------------------------------------------------------------

def integral(img: GrayImage) -> IntegralImage:
    table = np.zeros((img.height + 1, img.width + 1), dtype=np.uint64)
    table[1:, 1:] = np.cumsum(np.cumsum(img.data.astype(np.uint64), axis=0), axis=1)
    return IntegralImage(_frozen(table))


def box_sum(ii: IntegralImage, rect: Tuple[int, int, int, int]) -> int:
    """Sum of intensities inside rect = (x, y, width, height)."""
    x, y, w, h = (int(v) for v in rect)
    if x < 0 or y < 0 or w < 0 or h < 0 or x + w > ii.width or y + h > ii.height:
        raise RectOutOfBounds(f"Rect {rect} outside {ii.width}x{ii.height} image")
    t = ii.table
    # uint64 arithmetic stays exact; reorder so no intermediate goes negative
    return int(t[y + h, x + w] + t[y, x] - t[y, x + w] - t[y + h, x])
