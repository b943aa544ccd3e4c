"""PSNR and global SSIM.

``psnr`` evaluates the printed formula ``20 log10(Ñ M̃ ‖f̂‖∞² / ‖f̂ - f*‖₂)``
as written; ``psnr_conventional`` is the usual ``10 log10(peak² / MSE)``
with ``peak = max(truth)``.  SSIM uses one window covering the whole image.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DimMismatch, IdenticalImages


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"image shapes {a.shape} and {b.shape} differ")
    return a, b


def psnr(reconstructed, truth) -> float:
    f, g = _pair(reconstructed, truth)
    err = float(np.linalg.norm((f - g).ravel()))
    if err == 0:
        raise IdenticalImages("PSNR is undefined for identical images")
    return 20 * math.log10(f.size * float(np.max(np.abs(f))) ** 2 / err)


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr_conventional(reconstructed, truth, peak: float | None = None) -> float:
    f, g = _pair(reconstructed, truth)
    e = mse(f, g)
    if e == 0:
        raise IdenticalImages("PSNR is undefined for identical images")
    peak = float(np.max(g)) if peak is None else peak
    return 10 * math.log10(peak**2 / e)


def ssim(a, b, dynamic_range: float = 1.0) -> float:
    """Single-window SSIM with ``c1 = (0.01ξ)²`` and ``c2 = (0.03ξ)²``."""
    if dynamic_range <= 0:
        raise ValueError("dynamic range must be positive")
    a, b = _pair(a, b)
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    mu_a, mu_b = a.mean(), b.mean()
    da, db = a - mu_a, b - mu_b
    var_a, var_b = np.mean(da * da), np.mean(db * db)
    cov = np.mean(da * db)
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(num / den)


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    psnr_conventional_db: float
    ssim: float
    mse: float
    dims: tuple[int, int]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def append_csv(self, path, label: str = "") -> None:
        path = Path(path)
        new = not path.exists()
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["label", "psnr_db", "psnr_conventional_db", "ssim", "mse"])
            w.writerow([label] + [f"{v:.17g}" for v in
                                  (self.psnr_db, self.psnr_conventional_db, self.ssim, self.mse)])


def report(reconstructed, truth, dynamic_range: float = 1.0) -> MetricReport:
    f, g = _pair(reconstructed, truth)
    return MetricReport(psnr(f, g), psnr_conventional(f, g), ssim(f, g, dynamic_range),
                        mse(f, g), tuple(f.shape))


def normalized_cross_correlation(a, b) -> float:
    a, b = _pair(a, b)
    a = a - a.mean()
    b = b - b.mean()
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(np.sum(a * b) / den) if den > 0 else 0.0


def minmax(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    lo, hi = a.min(), a.max()
    return (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)
