"""Periodic FFT Helmholtz decomposition ``w = mean + ∇φ + ∇×ψ`` on the box B.

In 2D the curl of a scalar potential is ``∇×ψ = (-∂_y ψ, ∂_x ψ)``.  Per
Fourier mode ``k`` (with ``k×w = k_x w_y - k_y w_x``)::

    φ̂ = -i k·ŵ / |k|²,    ψ̂ = -i (k×ŵ) / |k|²

The zero mode carries the mean and is reported separately.  On an even grid
the Nyquist wavenumber gets derivative zero (the usual real-signal
convention), so the three Nyquist corner modes have neither gradient nor
curl and are left out of both parts; band-limited fields are reproduced
exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch
from .grid import GridSpec, ScalarField, VectorField2


@dataclass(frozen=True)
class HelmholtzParts:
    grad_phi: VectorField2
    curl_psi: VectorField2
    phi: ScalarField
    psi: ScalarField
    mean: tuple[float, float]


def _check(w: VectorField2, grid: GridSpec | None) -> float:
    if grid is None:
        return 1.0
    if w.shape != grid.shape:
        raise DimMismatch(f"field shape {w.shape} does not match grid {grid.shape}")
    return grid.h_x


def decompose(w: VectorField2, grid: GridSpec | None = None) -> HelmholtzParts:
    """Split ``w`` into an irrotational part ``∇φ`` and a solenoidal part ``∇×ψ``.

    ``grid=None`` treats the array as a unit-spaced periodic grid.
    """
    h = _check(w, grid)
    n_rows, n_cols = w.shape
    arr = w.stack()
    wh = np.fft.fft2(arr, axes=(-2, -1))
    mean = (float(wh[0, 0, 0].real / arr[0].size), float(wh[1, 0, 0].real / arr[0].size))
    KX, KY = _full_wavenumbers_rect(w.shape, h)
    k2 = KX**2 + KY**2
    dead = k2 == 0
    k2[dead] = 1.0
    div = KX * wh[0] + KY * wh[1]
    rot = KX * wh[1] - KY * wh[0]
    # projections onto k and onto k^⊥; zero mode dropped
    gp = np.stack([KX * div, KY * div]) / k2
    cp = np.stack([-KY * rot, KX * rot]) / k2
    phi_h = -1j * div / k2
    psi_h = -1j * rot / k2

    def back(a):
        return np.real(np.fft.ifft2(a, axes=(-2, -1)))

    g = back(gp)
    c = back(cp)
    return HelmholtzParts(
        grad_phi=VectorField2.from_arrays(g[0], g[1]),
        curl_psi=VectorField2.from_arrays(c[0], c[1]),
        phi=ScalarField.from_array(back(phi_h)),
        psi=ScalarField.from_array(back(psi_h)),
        mean=mean,
    )


def weighted_recombine(parts: HelmholtzParts, c_p: float, c_s: float) -> VectorField2:
    """``c_S ∇×ψ + c_P ∇φ``."""
    out = c_s * parts.curl_psi.stack() + c_p * parts.grad_phi.stack()
    return VectorField2.from_arrays(out[0], out[1])


def spectral_gradient(f: ScalarField, h: float = 1.0) -> VectorField2:
    fh = np.fft.fft2(f.data)
    KX, KY = _full_wavenumbers_rect(f.shape, h)
    return VectorField2.from_arrays(np.real(np.fft.ifft2(1j * KX * fh)),
                                    np.real(np.fft.ifft2(1j * KY * fh)))


def spectral_curl(f: ScalarField, h: float = 1.0) -> VectorField2:
    """``(-∂_y f, ∂_x f)``."""
    g = spectral_gradient(f, h).stack()
    return VectorField2.from_arrays(-g[1], g[0])


def spectral_divergence(w: VectorField2, h: float = 1.0) -> ScalarField:
    wh = np.fft.fft2(w.stack(), axes=(-2, -1))
    KX, KY = _full_wavenumbers_rect(w.shape, h)
    return ScalarField.from_array(np.real(np.fft.ifft2(1j * (KX * wh[0] + KY * wh[1]))))


def spectral_rot(w: VectorField2, h: float = 1.0) -> ScalarField:
    """Scalar curl ``∂_x w_y - ∂_y w_x``."""
    wh = np.fft.fft2(w.stack(), axes=(-2, -1))
    KX, KY = _full_wavenumbers_rect(w.shape, h)
    return ScalarField.from_array(np.real(np.fft.ifft2(1j * (KX * wh[1] - KY * wh[0]))))


def _wavenumber_axis(n, h):
    k = 2 * np.pi * np.fft.fftfreq(n, d=h)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return k


def _full_wavenumbers_rect(shape, h):
    return np.meshgrid(_wavenumber_axis(shape[1], h), _wavenumber_axis(shape[0], h), indexing="xy")
