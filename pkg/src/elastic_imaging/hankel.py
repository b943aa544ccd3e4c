"""Wrap-around Hankel lifting, annihilating filters and numerical rank.

Conventions (used by every module that convolves):

* ``lift(f, p)[q, j] = f[(q + j) mod Q]``.
* ``lift(f, p) @ psi`` is the circular cross-correlation
  ``y[q] = Σ_j f[q + j] psi[j]``, equivalently the circular convolution of
  ``f`` with the flipped filter ``psi'`` followed by a shift of ``p - 1``.
* ``unlift`` averages each wrap-around anti-diagonal: ``unlift(X)[n] =
  (1/p) Σ_j X[(n - j) mod Q, j]``.  It is a left inverse of ``lift`` and
  ``p · unlift`` is the transpose of ``lift``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .errors import BadPencil, DimMismatch, DuplicateFrequency

DEFAULT_RANK_TOL = 1e-8


def _index(q: int, p: int) -> np.ndarray:
    return (np.arange(q)[:, None] + np.arange(p)[None, :]) % q


@dataclass(frozen=True)
class HankelLift:
    source_len: int
    pencil: int
    matrix: np.ndarray


def lift_matrix(f, p: int) -> np.ndarray:
    f = np.asarray(f)
    q = f.shape[-1]
    if not 1 <= p < q:
        raise BadPencil(f"pencil {p} must satisfy 1 <= p < Q = {q}")
    return f[..., _index(q, p)]


def lift(f, p: int) -> HankelLift:
    f = np.asarray(f)
    if f.ndim != 1:
        raise DimMismatch("lift expects a 1D signal")
    return HankelLift(f.size, p, lift_matrix(f, p))


def lift_adjoint(x) -> np.ndarray:
    """Transpose of :func:`lift_matrix`: sum over wrap-around anti-diagonals."""
    x = np.asarray(x)
    q, p = x.shape[-2:]
    out = np.zeros(x.shape[:-2] + (q,), dtype=x.dtype)
    for j in range(p):
        out += np.roll(x[..., :, j], j, axis=-1)
    return out


def unlift(x) -> np.ndarray:
    """Anti-diagonal average; ``unlift(lift(f)) = f``."""
    x = x.matrix if isinstance(x, HankelLift) else np.asarray(x)
    return lift_adjoint(x) / x.shape[-1]


@dataclass(frozen=True)
class BlockHankelLift:
    blocks: tuple

    @property
    def matrix(self) -> np.ndarray:
        return block_diag(*[b.matrix for b in self.blocks])

    @property
    def pencil(self) -> int:
        return sum(b.pencil for b in self.blocks)


def block_lift(components, pencils) -> BlockHankelLift:
    if len(components) != len(pencils):
        raise DimMismatch("one pencil size per component is required")
    return BlockHankelLift(tuple(lift(f, p) for f, p in zip(components, pencils)))


def numerical_rank(h, tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above ``tol · σ_max``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = h.matrix if hasattr(h, "matrix") else np.asarray(h)
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def exponential_sum(frequencies, weights, q: int) -> np.ndarray:
    """``f[k] = Σ_j c_j exp(-i k ω_j)`` for ``k = 0 .. Q-1``."""
    k = np.arange(q)[:, None]
    return np.exp(-1j * k * np.asarray(frequencies, dtype=np.float64)[None, :]) @ np.asarray(weights)


@dataclass(frozen=True)
class AnnihilatingFilter:
    taps: np.ndarray     # length r + 1, taps[0] = 1
    roots: np.ndarray    # exp(-i ω_j)

    @property
    def flipped(self) -> np.ndarray:
        return self.taps[::-1].copy()


def build_annihilator(frequencies, atol: float = 1e-12) -> AnnihilatingFilter:
    """Coefficients of ``∏_j (1 - e^{-iω_j} z^{-1})`` in powers of ``z^{-1}``."""
    w = np.asarray(frequencies, dtype=np.float64).ravel()
    if np.any((w < 0) | (w >= 2 * np.pi)):
        raise ValueError("frequencies must lie in [0, 2π)")
    ws = np.sort(w)
    gaps = np.diff(np.concatenate([ws, ws[:1] + 2 * np.pi])) if ws.size > 1 else np.array([np.inf])
    if np.any(gaps < atol):
        raise DuplicateFrequency("frequencies must be distinct")
    roots = np.exp(-1j * w)
    taps = np.array([1.0 + 0j])
    for u in roots:
        taps = np.convolve(taps, [1.0, -u])
    return AnnihilatingFilter(taps, roots)


def circular_convolve(f, h) -> np.ndarray:
    """``(f ⊛ h)[n] = Σ_k h[k] f[(n - k) mod Q]``."""
    f = np.asarray(f)
    h = np.asarray(h)
    out = np.zeros(f.shape, dtype=np.result_type(f, h))
    for k, hk in enumerate(h):
        out += hk * np.roll(f, k, axis=-1)
    return out


def annihilation_residual(f, h: AnnihilatingFilter, valid_only: bool = False) -> float:
    """``‖f ⊛ h‖_∞`` with circular convolution.

    The circular residual vanishes exactly when every ``ω_j`` lies on the
    DFT grid ``2πm/Q`` (the signal is then truly periodic).  ``valid_only``
    skips the first ``r`` outputs, which mix both ends of the period, and
    matches ``ℍ_{r+1}(f) h' = 0`` on the non-wrapping rows for any ``ω_j``.
    """
    f = np.asarray(f)
    r = h.taps.size - 1
    full = circular_convolve(f, h.taps)
    if valid_only:
        full = full[r:]
    return float(np.max(np.abs(full))) if full.size else 0.0
