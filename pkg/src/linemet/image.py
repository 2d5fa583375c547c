"""Grayscale image container and binary PGM input and output.

Images are float64 rasters in [0, 1] tagged with a physical pixel size in
nanometers. Files are binary (P5) PGM, 8 or 16 bit, with the pixel size
carried in a header comment of the form ``# pixel_size_nm=<float>``. 16-bit
samples are big-endian, most significant byte first.
"""

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class PgmError(ValueError):
    """Malformed or unsupported PGM content."""


_PIXEL_SIZE_RE = re.compile(rb"#\s*pixel_size_nm=([^\s]+)")


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major grayscale raster with a physical pixel size in nm.

    ``samples`` is always float64 in [0, 1]; ``bit_depth_source`` records the
    quantization of the file the data came from (8 or 16, and 16 for images
    born in memory). The sample array is copied and frozen at construction.
    """

    samples: np.ndarray
    pixel_size: float
    bit_depth_source: int = 16

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ValueError("samples must be a 2-D array")
        height, width = samples.shape
        if height < 8 or width < 8:
            raise ValueError(f"image must be at least 8x8, got {width}x{height}")
        if not (float(self.pixel_size) > 0.0):
            raise ValueError("pixel_size must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if samples.min() < 0.0 or samples.max() > 1.0:
            raise ValueError("samples must lie in [0, 1]")
        if self.bit_depth_source not in (8, 16):
            raise ValueError("bit_depth_source must be 8 or 16")
        samples = samples.copy()
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "pixel_size", float(self.pixel_size))

    @property
    def width(self):
        return self.samples.shape[1]

    @property
    def height(self):
        return self.samples.shape[0]


def _parse_header(data):
    """Return (width, height, maxval, comments, raster_offset) of a P5 file."""
    comments = []
    pos = 0
    n = len(data)

    def next_token():
        nonlocal pos
        while True:
            while pos < n and data[pos:pos + 1].isspace():
                pos += 1
            if pos < n and data[pos] == 0x23:
                end = data.find(b"\n", pos)
                if end < 0:
                    end = n
                comments.append(data[pos:end])
                pos = end
                continue
            break
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmError("truncated PGM header")
        return data[start:pos]

    magic = next_token()
    if magic != b"P5":
        raise PgmError(f"unsupported magic {magic!r}, expected binary PGM (P5)")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise PgmError(f"non-integer header field: {exc}") from None
    if width <= 0 or height <= 0:
        raise PgmError(f"bad raster size {width}x{height}")
    if maxval not in (255, 65535):
        raise PgmError(f"unsupported maxval {maxval}, expected 255 or 65535")
    if pos >= n or not data[pos:pos + 1].isspace():
        raise PgmError("missing whitespace after maxval")
    return width, height, maxval, comments, pos + 1


def load_image(path, pixel_size_nm=None):
    """Read a binary 8 or 16 bit PGM into a GrayImage.

    The physical scale comes from a ``# pixel_size_nm=<v>`` header comment;
    an explicit ``pixel_size_nm`` argument overrides the comment. With
    neither available the file is not interpretable as metrology data and a
    PgmError is raised.
    """
    data = Path(path).read_bytes()
    width, height, maxval, comments, offset = _parse_header(data)
    depth = 8 if maxval == 255 else 16
    count = width * height
    raster = data[offset:offset + count * (depth // 8)]
    if len(raster) < count * (depth // 8):
        raise PgmError("truncated pixel data")
    if depth == 8:
        raw = np.frombuffer(raster, dtype=np.uint8, count=count)
    else:
        raw = np.frombuffer(raster, dtype=">u2", count=count)
    samples = raw.reshape(height, width).astype(np.float64) / maxval

    pixel_size = pixel_size_nm
    if pixel_size is None:
        for comment in comments:
            match = _PIXEL_SIZE_RE.search(comment)
            if match:
                try:
                    pixel_size = float(match.group(1))
                except ValueError:
                    raise PgmError(
                        f"unparseable pixel size comment {comment!r}") from None
                break
    if pixel_size is None:
        raise PgmError(
            f"{path}: no pixel_size_nm header comment and no override given")
    return GrayImage(samples=samples, pixel_size=float(pixel_size),
                     bit_depth_source=depth)


def save_image(image, path, bit_depth=16):
    """Write a GrayImage as binary PGM at the requested bit depth.

    Samples are quantized with round-half-to-even (numpy rint), so 0.5 at
    8 bit stores as 128. A load of the written file reproduces every sample
    within one quantization step of the chosen depth.
    """
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    maxval = (1 << bit_depth) - 1
    levels = np.rint(image.samples * maxval)
    levels = np.clip(levels, 0, maxval)
    header = (
        b"P5\n"
        + f"# pixel_size_nm={image.pixel_size!r}\n".encode("ascii")
        + f"{image.width} {image.height}\n{maxval}\n".encode("ascii")
    )
    if bit_depth == 8:
        payload = levels.astype(np.uint8).tobytes()
    else:
        payload = levels.astype(">u2").tobytes()
    Path(path).write_bytes(header + payload)
