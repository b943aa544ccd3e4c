"""Average pooling, the U-Net frame with skip connection, and its dual frame.

``Φ_avgᵀ`` sums neighbouring pairs with weight ``1/√2`` so that
``Φ_avgᵀ Φ_avg = I``.  The U-Net analysis ``Φᵀ = [I; Φ_avgᵀ]`` keeps a skip
copy next to the pooled branch.  Synthesizing with ``Φ`` itself returns
``x + Φ_avg Φ_avgᵀ x`` (the low-pass part counted twice); the dual frame
``Φ̃ = (ΦΦᵀ)⁻¹Φ = (I - ½Φ_avgΦ_avgᵀ)Φ`` inverts it exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, OddLength

_R2 = np.sqrt(0.5)
KINDS = ("identity", "unet", "dual_frame")


def _check_even(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] % 2:
        raise OddLength(f"pooling needs an even length, got {x.shape[0]}")
    return x


def avg_pool(x) -> np.ndarray:
    """``y_k = (x_{2k} + x_{2k+1}) / √2`` along the first axis."""
    x = _check_even(x)
    return (x[0::2] + x[1::2]) * _R2


def avg_unpool(y) -> np.ndarray:
    """``Φ_avg y``: each coefficient copied to its pair, times ``1/√2``."""
    y = np.asarray(y, dtype=np.float64)
    return np.repeat(y, 2, axis=0) * _R2


def unet_analysis(x):
    """``(skip, pooled) = (x, Φ_avgᵀ x)``."""
    x = _check_even(x)
    return x.copy(), avg_pool(x)


def _check_pair(skip, coeff):
    skip = _check_even(skip)
    coeff = np.asarray(coeff, dtype=np.float64)
    if coeff.shape[0] * 2 != skip.shape[0] or coeff.shape[1:] != skip.shape[1:]:
        raise DimMismatch(f"skip {skip.shape} and pooled {coeff.shape} lengths are inconsistent")
    return skip, coeff


def unet_synthesis(skip, coeff) -> np.ndarray:
    """``Φ [B; C] = B + Φ_avg C`` (violates the frame condition)."""
    skip, coeff = _check_pair(skip, coeff)
    return skip + avg_unpool(coeff)


def pair_mean_projection(x) -> np.ndarray:
    """``Φ_avg Φ_avgᵀ x``: every entry replaced by the mean of its pair."""
    x = _check_even(x)
    return np.repeat((x[0::2] + x[1::2]) / 2, 2, axis=0)


def unet_roundtrip(x) -> np.ndarray:
    """``x + Φ_avg Φ_avgᵀ x``, the U-Net synthesis of the U-Net analysis.

    Same operator as ``unet_synthesis(*unet_analysis(x))`` but without the
    two ``√½`` factors, so a constant signal maps to exactly ``2x``.
    """
    x = _check_even(x)
    return x + pair_mean_projection(x)


def dual_frame_synthesis(skip, coeff) -> np.ndarray:
    """``B - ½ Φ_avg (Φ_avgᵀ B - C)``, the exact left inverse of :func:`unet_analysis`."""
    skip, coeff = _check_pair(skip, coeff)
    return skip - 0.5 * avg_unpool(avg_pool(skip) - coeff)


def multilevel_analysis(x, depth: int) -> list:
    """Recursive analysis on the pooled branch: ``[skip_0, …, skip_{depth-1}, pooled]``."""
    parts = []
    cur = np.asarray(x, dtype=np.float64)
    for _ in range(depth):
        skip, cur = unet_analysis(cur)
        parts.append(skip)
    parts.append(cur)
    return parts


def multilevel_synthesis(parts, dual: bool = True) -> np.ndarray:
    step = dual_frame_synthesis if dual else unet_synthesis
    cur = parts[-1]
    for skip in reversed(parts[:-1]):
        cur = step(skip, cur)
    return cur


@dataclass(frozen=True)
class PoolingFrame:
    """Explicit ``Φ`` (``Q x S``) and ``Φ̃`` for one of the three kinds.

    ``depth`` levels of pooling are applied recursively on the pooled branch.
    """

    kind: str
    q: int
    depth: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.kind != "identity" and self.q % (2**self.depth):
            raise OddLength(f"Q = {self.q} is not divisible by 2^{self.depth}")

    def forward(self, x) -> np.ndarray:
        """``Φᵀ x`` with the skip and pooled branches stacked."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "identity":
            return x.copy()
        return np.concatenate(multilevel_analysis(x, self.depth), axis=0)

    def _split(self, c):
        parts, start, n = [], 0, self.q
        for _ in range(self.depth):
            parts.append(c[start:start + n])
            start += n
            n //= 2
        parts.append(c[start:start + n])
        return parts

    def inverse(self, c) -> np.ndarray:
        """``Φ̃ c``."""
        c = np.asarray(c, dtype=np.float64)
        if c.shape[0] != self.s:
            raise DimMismatch(f"expected {self.s} coefficients, got {c.shape[0]}")
        if self.kind == "identity":
            return c.copy()
        return multilevel_synthesis(self._split(c), dual=self.kind == "dual_frame")

    @property
    def s(self) -> int:
        if self.kind == "identity":
            return self.q
        return sum(self.q >> j for j in range(self.depth)) + (self.q >> self.depth)

    @property
    def phi(self) -> np.ndarray:
        """``Φ`` (``Q x S``), assembled column by column from the analysis map."""
        return self.forward(np.eye(self.q)).T

    @property
    def phi_dual(self) -> np.ndarray:
        return self.inverse(np.eye(self.s))


def frame_defect(frame: PoolingFrame) -> float:
    """``‖Φ̃ Φᵀ - I_Q‖₂`` from the assembled matrices."""
    m = frame.phi_dual @ frame.phi.T - np.eye(frame.q)
    return float(np.linalg.norm(m, 2))
