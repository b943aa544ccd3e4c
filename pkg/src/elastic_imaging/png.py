"""Minimal PNG output: grayscale images and line plots."""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

_SIG = b"\x89PNG\r\n\x1a\n"
# line colours for successive series
PALETTE = ((31, 119, 180), (214, 39, 40), (44, 160, 44), (148, 103, 189))


def _chunk(tag: bytes, data: bytes) -> bytes:
    body = tag + data
    return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)


def write_png(path, pixels) -> Path:
    """Write an ``(H, W)`` grayscale or ``(H, W, 3)`` RGB uint8 array."""
    px = np.asarray(pixels)
    if px.dtype != np.uint8:
        raise TypeError("pixels must be uint8")
    if px.ndim == 2:
        color, channels = 0, 1
    elif px.ndim == 3 and px.shape[2] == 3:
        color, channels = 2, 3
    else:
        raise ValueError(f"unsupported pixel array shape {px.shape}")
    h, w = px.shape[:2]
    rows = px.reshape(h, w * channels)
    raw = b"".join(b"\x00" + rows[i].tobytes() for i in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color, 0, 0, 0)
    data = _SIG + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", zlib.compress(raw, 9)) + _chunk(b"IEND", b"")
    path = Path(path)
    path.write_bytes(data)
    return path


def read_png_pixels(path) -> np.ndarray:
    """Decode PNGs written by :func:`write_png` (8-bit, filter type 0 only)."""
    raw = Path(path).read_bytes()
    if raw[:8] != _SIG:
        raise ValueError("not a PNG file")
    pos, idat, header = 8, b"", None
    while pos < len(raw):
        (n,) = struct.unpack(">I", raw[pos:pos + 4])
        tag = raw[pos + 4:pos + 8]
        body = raw[pos + 8:pos + 8 + n]
        if tag == b"IHDR":
            header = struct.unpack(">IIBBBBB", body)
        elif tag == b"IDAT":
            idat += body
        pos += 12 + n
    w, h, _, color, *_ = header
    channels = 3 if color == 2 else 1
    data = np.frombuffer(zlib.decompress(idat), dtype=np.uint8).reshape(h, 1 + w * channels)
    px = data[:, 1:]
    return px.reshape(h, w, 3) if channels == 3 else px.copy()


def to_gray(image, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Scale to 0-255 with row 0 at the top (largest y first)."""
    a = np.asarray(image, dtype=np.float64)
    lo = a.min() if lo is None else lo
    hi = a.max() if hi is None else hi
    s = (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)
    return np.round(np.clip(s, 0, 1) * 255).astype(np.uint8)[::-1]


def save_image(path, image, upscale: int = 2) -> Path:
    g = to_gray(image)
    if upscale > 1:
        g = np.kron(g, np.ones((upscale, upscale), dtype=np.uint8))
    return write_png(path, g)


def _line(canvas, x0, y0, x1, y1, color):
    n = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
    xs = np.round(np.linspace(x0, x1, n)).astype(int)
    ys = np.round(np.linspace(y0, y1, n)).astype(int)
    ok = (xs >= 0) & (xs < canvas.shape[1]) & (ys >= 0) & (ys < canvas.shape[0])
    canvas[ys[ok], xs[ok]] = color


def line_plot(path, x, series, width: int = 480, height: int = 320, margin: int = 24) -> Path:
    """Plot each ``series`` (list of y arrays) against ``x``; each series is scaled to its own range."""
    canvas = np.full((height, width, 3), 255, dtype=np.uint8)
    x = np.asarray(x, dtype=np.float64)
    x0, x1 = x.min(), x.max()
    span_x = x1 - x0 if x1 > x0 else 1.0
    px = margin + (x - x0) / span_x * (width - 2 * margin)
    frame = (0, 0, 0)
    for a, b, c, d in ((margin, margin, width - margin, margin),
                       (margin, height - margin, width - margin, height - margin),
                       (margin, margin, margin, height - margin),
                       (width - margin, margin, width - margin, height - margin)):
        _line(canvas, a, b, c, d, frame)
    for k, y in enumerate(series):
        y = np.asarray(y, dtype=np.float64)
        lo, hi = y.min(), y.max()
        span = hi - lo if hi > lo else 1.0
        py = height - margin - (y - lo) / span * (height - 2 * margin)
        color = PALETTE[k % len(PALETTE)]
        for i in range(len(y) - 1):
            _line(canvas, px[i], py[i], px[i + 1], py[i + 1], color)
        for i in range(len(y)):
            cx, cy = int(round(px[i])), int(round(py[i]))
            canvas[max(cy - 2, 0):cy + 3, max(cx - 2, 0):cx + 3] = color
    return write_png(path, canvas)
