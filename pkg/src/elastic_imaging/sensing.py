"""Dense sensing matrix from Green's kernels, ridge pseudo-inverse, null space.

Row ``i·N·M + n·M + m`` of Λ holds component ``i`` of the displacement at
detector ``m`` and time ``t_n``; column ``j·Q + q`` is the pixel indicator of
crop sample ``z_q`` in component ``j``.  Entries are the midpoint quadrature
``h_x² [∂_t G(y_m - z_q, t_n)]_{ij}`` of a band-limited kernel.

The kernel is radial up to the tensor ``x̂x̂ᵀ``::

    ∂_t G(x, t) = A(|x|, t) I + B(|x|, t) x̂ x̂ᵀ

so ``A`` and ``B`` are tabulated once on a fine radial grid (inverse
Fourier sums over a tapered frequency band) and interpolated with cubic
splines.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.interpolate import CubicSpline

from .errors import (
    BadMagic,
    DimMismatch,
    FactorizationFailure,
    NullSpaceTooSmall,
    SingularPoint,
    TooLarge,
    TruncatedFile,
)
from .forward import DetectorArray, frequency_grid, kupradze_radial, tukey_taper
from .grid import GridSpec
from .hankel import circular_convolve

MAX_ENTRIES = 2**26
CACHE_MAGIC = b"ELS1"


# ---------------------------------------------------------------------------
# kernel tables
# ---------------------------------------------------------------------------

def band_limit(grid: GridSpec) -> float:
    """Highest angular frequency kept: the shear wave at the grid Nyquist wavenumber."""
    return grid.c_s * np.pi / grid.h_x


def kernel_coefficients(r, times, c_p: float, c_s: float, omega_max: float,
                        t_window: float = 64.0, taper_fraction: float = 0.2):
    """``A(r, t)`` and ``B(r, t)`` evaluated directly, each shaped ``(len(times), len(r))``."""
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    omega, d_omega = frequency_grid(omega_max, t_window)
    a_p, b_p, a_s, b_s = kupradze_radial(r[None, :], omega[:, None], c_p, c_s)
    w = (-1j * omega * tukey_taper(omega, omega_max, taper_fraction))[:, None]
    phase = np.exp(-1j * np.outer(np.asarray(times, dtype=np.float64), omega))
    a = (d_omega / np.pi) * np.real(phase @ (w * (a_p + a_s)))
    b = (d_omega / np.pi) * np.real(phase @ (w * (b_p + b_s)))
    return a, b


@dataclass(frozen=True)
class KernelTable:
    r: np.ndarray
    times: np.ndarray
    a: object      # CubicSpline over r, vector valued in time
    b: object

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        if np.any(r < self.r[0]) or np.any(r > self.r[-1]):
            raise ValueError("radius outside the tabulated range")
        return self.a(r), self.b(r)


def kernel_table(grid: GridSpec, times, r_min: float, r_max: float,
                 oversample: int = 8, omega_max: float | None = None) -> KernelTable:
    omega_max = band_limit(grid) if omega_max is None else omega_max
    dr = grid.h_x / oversample
    count = int(np.ceil((r_max - r_min) / dr)) + 4
    r = r_min + dr * (np.arange(count) - 1)
    r[0] = max(r[0], r_min * 0.5)
    a, b = kernel_coefficients(r, times, grid.c_p, grid.c_s, omega_max)
    return KernelTable(r, np.asarray(times), CubicSpline(r, a.T, axis=0), CubicSpline(r, b.T, axis=0))


# ---------------------------------------------------------------------------
# sensing matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensingMatrix:
    entries: np.ndarray
    components: int = 2
    grid: GridSpec | None = None
    detectors: DetectorArray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.float64)
        if e.ndim != 2 or not np.all(np.isfinite(e)):
            raise DimMismatch("sensing matrix must be a finite 2D array")
        if e.shape[1] % self.components:
            raise DimMismatch("column count is not a multiple of the component count")
        if self.detectors is not None:
            rows = self.components * self.detectors.m * self.detectors.n
            if e.shape[0] != rows:
                raise DimMismatch(f"{e.shape[0]} rows, geometry implies {rows}")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @classmethod
    def from_array(cls, entries, components: int = 1) -> "SensingMatrix":
        return cls(np.asarray(entries, dtype=np.float64), components)

    @property
    def shape(self):
        return self.entries.shape

    def apply(self, f) -> np.ndarray:
        return self.entries @ np.asarray(f, dtype=np.float64)

    def apply_adjoint(self, g) -> np.ndarray:
        return self.entries.T @ np.asarray(g, dtype=np.float64)

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2))


def crop_points(grid: GridSpec) -> np.ndarray:
    """Crop sample points ``z_q`` (Q, 2) in row-major, x-fastest order."""
    s = grid.crop_slice()
    x = grid.coords()[s]
    X, Y = np.meshgrid(x, x, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def assemble_sensing(grid: GridSpec, detectors: DetectorArray, table: KernelTable | None = None) -> SensingMatrix:
    """Λ with entries ``h_x² [∂_t G(y_m - z_q, t_n)]_{ij}``."""
    z = crop_points(grid)
    q, m, n = z.shape[0], detectors.m, detectors.n
    if (2 * q) * (2 * m * n) > MAX_ENTRIES:
        raise TooLarge(f"Λ would hold {(2 * q) * (2 * m * n)} entries (limit {MAX_ENTRIES})")
    diff = detectors.positions[:, None, :] - z[None, :, :]          # (M, Q, 2)
    r = np.linalg.norm(diff, axis=-1)
    if r.min() < 1e-9 * grid.h_x:
        raise SingularPoint("a crop sample coincides with a detector")
    if table is None:
        table = kernel_table(grid, detectors.times, r.min(), r.max())
    a, b = table(r)                                                   # (M, Q, N) each
    rhat = diff / r[..., None]
    lam = np.empty((2, n, m, 2, q))
    for i in range(2):
        for j in range(2):
            k = b * (rhat[..., i] * rhat[..., j])[..., None]
            if i == j:
                k = k + a
            lam[i, :, :, j, :] = np.transpose(k, (2, 0, 1))
    entries = grid.h_x**2 * lam.reshape(2 * n * m, 2 * q)
    return SensingMatrix(entries, 2, grid, detectors, {"omega_max": band_limit(grid)})


def vectorize_source(F, grid: GridSpec) -> np.ndarray:
    """``(f_1ᵀ, f_2ᵀ)ᵀ`` over the crop."""
    s = grid.crop_slice()
    arr = F.stack()
    return np.concatenate([arr[0][s, s].ravel(), arr[1][s, s].ravel()])


# ---------------------------------------------------------------------------
# pseudo-inverse and null space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PseudoInverse:
    """``Λ† = Λᵀ (ΛΛᵀ + εI)⁻¹`` via a Cholesky factor."""

    sensing: SensingMatrix
    factor: tuple
    epsilon: float

    def apply(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        return self.sensing.entries.T @ linalg.cho_solve(self.factor, g)

    def matrix(self) -> np.ndarray:
        rows = self.sensing.shape[0]
        return self.sensing.entries.T @ linalg.cho_solve(self.factor, np.eye(rows))


def right_pseudo_inverse(L: SensingMatrix, epsilon: float = 1e-8) -> PseudoInverse:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    gram = L.entries @ L.entries.T + epsilon * np.eye(L.shape[0])
    try:
        factor = linalg.cho_factor(gram, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationFailure(str(exc)) from exc
    return PseudoInverse(L, factor, epsilon)


def null_space_probe(L: SensingMatrix, k: int, rtol: float = 1e-8) -> np.ndarray:
    """``k`` orthonormal vectors (rows) with ``‖Λv‖ <= rtol ‖Λ‖₂``."""
    _, s, vt = np.linalg.svd(L.entries, full_matrices=True)
    rank = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    available = L.shape[1] - rank
    if k > available:
        raise NullSpaceTooSmall(f"asked for {k} null vectors, only {available} exist")
    return vt[vt.shape[0] - k:].copy()


def annihilation_score(filters, null_vectors, components: int = 1) -> float:
    """``max_v ‖v ⊛ Ψ'‖_F / ‖v‖``; each ``v`` is split into ``components`` equal blocks."""
    filters = np.asarray(filters, dtype=np.float64)
    if filters.ndim == 1:
        filters = filters[:, None]
    vs = np.atleast_2d(np.asarray(null_vectors, dtype=np.float64))
    if vs.shape[1] % components:
        raise DimMismatch("null vector length is not a multiple of the component count")
    best = 0.0
    for v in vs:
        nv = np.linalg.norm(v)
        if nv == 0:
            continue
        total = 0.0
        for block in v.reshape(components, -1):
            if filters.shape[0] > block.size:
                raise DimMismatch("filter is longer than the signal")
            for l in range(filters.shape[1]):
                total += np.sum(circular_convolve(block, filters[:, l]) ** 2)
        best = max(best, float(np.sqrt(total) / nv))
    return best


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

def cache_key(grid: GridSpec, detectors: DetectorArray) -> str:
    blob = json.dumps({"grid": grid.to_dict(), "detectors": detectors.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def save_sensing(L: SensingMatrix, path) -> None:
    """``ELS1 | u32 header length | header JSON | float64 LE payload``."""
    header = {"shape": list(L.shape), "components": L.components}
    if L.grid is not None and L.detectors is not None:
        header["key"] = cache_key(L.grid, L.detectors)
        header["grid"] = L.grid.to_dict()
        header["detectors"] = L.detectors.to_dict()
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC + struct.pack("<I", len(hb)) + hb)
        fh.write(np.ascontiguousarray(L.entries, dtype="<f8").tobytes())


def load_sensing(path) -> SensingMatrix:
    raw = Path(path).read_bytes()
    if raw[:4] != CACHE_MAGIC:
        raise BadMagic(f"{path}: not a sensing-matrix cache")
    (hl,) = struct.unpack_from("<I", raw, 4)
    header = json.loads(raw[8:8 + hl])
    rows, cols = header["shape"]
    if len(raw) < 8 + hl + 8 * rows * cols:
        raise TruncatedFile(f"{path}: payload shorter than declared")
    e = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=8 + hl).reshape(rows, cols)
    grid = GridSpec.from_dict(header["grid"]) if "grid" in header else None
    det = DetectorArray.from_dict(header["detectors"]) if "detectors" in header else None
    return SensingMatrix(e.copy(), header["components"], grid, det)


def cached_sensing(grid: GridSpec, detectors: DetectorArray, cache_dir=None) -> SensingMatrix:
    if cache_dir is None:
        return assemble_sensing(grid, detectors)
    path = Path(cache_dir) / f"sensing_{cache_key(grid, detectors)[:16]}.bin"
    if path.exists():
        return load_sensing(path)
    L = assemble_sensing(grid, detectors)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_sensing(L, path)
    return L
