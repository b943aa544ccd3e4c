"""2D Lamé forward solver, detector sampling and the Kupradze Green's matrix.

The elastic step is exact per Fourier mode: every wavevector ``k`` splits into
a pressure part (along ``k``, frequency ``c_P |k|``) and a shear part
(orthogonal to ``k``, frequency ``c_S |k|``), each advanced by its own
``cos``/``sin`` propagator.  Free-space radiation out of B is emulated by
running on a wider periodic box (see :func:`extended_size`) whose outer cells
carry a graded damping layer (quadratic profile), applied in a Strang split
``D(dt/2) E(dt) D(dt/2)``.  The dδ/dt source is the initial value problem
``u(0) = F, v(0) = 0``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .errors import (
    DimMismatch,
    EmptyMeasurements,
    NotDivisor,
    SingularPoint,
    StabilityViolation,
    SupportViolation,
)
from .grid import GridSpec, ScalarField, VectorField2, stability_limit

# damping-layer reflection target used to set the peak absorption
LAYER_REFLECTION = 1e-4


# ---------------------------------------------------------------------------
# spectral machinery
# ---------------------------------------------------------------------------

def _wavenumbers(n: int, h: float):
    """``(kx, ky, mask)`` on the rfft2 layout; ``mask`` drops Nyquist modes."""
    kx = 2 * np.pi * np.fft.rfftfreq(n, d=h)
    ky = 2 * np.pi * np.fft.fftfreq(n, d=h)
    KX, KY = np.meshgrid(kx, ky, indexing="xy")
    mask = np.ones(KX.shape)
    mask[:, -1] = 0.0
    mask[n // 2, :] = 0.0
    return KX, KY, mask


def _rfft(a):
    return np.fft.rfft2(a, axes=(-2, -1))


def _irfft(a, n):
    return np.fft.irfft2(a, s=(n, n), axes=(-2, -1))


def wavenumbers(grid: GridSpec):
    return _wavenumbers(grid.n_x, grid.h_x)


def _lame_apply(u: np.ndarray, n: int, h: float, lam: float, mu: float) -> np.ndarray:
    KX, KY, mask = _wavenumbers(n, h)
    uh = _rfft(u) * mask
    k2 = KX**2 + KY**2
    div = KX * uh[0] + KY * uh[1]
    out0 = -mu * k2 * uh[0] - (lam + mu) * KX * div
    out1 = -mu * k2 * uh[1] - (lam + mu) * KY * div
    return _irfft(np.stack([out0, out1]), n)


def apply_lame_operator(u: VectorField2, grid: GridSpec) -> VectorField2:
    """``mu Δu + (lambda + mu) ∇(∇·u)`` evaluated spectrally on the periodic box."""
    if u.shape != grid.shape:
        raise DimMismatch(f"field shape {u.shape} does not match grid {grid.shape}")
    res = _lame_apply(u.stack(), grid.n_x, grid.h_x, grid.lam, grid.mu)
    return VectorField2.from_arrays(res[0], res[1])


def extended_size(grid: GridSpec) -> int:
    """Node count per side of the computational box that contains B.

    The box is widened until a wave leaving the unit disc cannot re-enter it
    through the periodic wrap before ``t_max``, with the damping layer on
    top; the count is rounded up to a power of two.
    """
    width = 2.0 + grid.c_p * grid.t_max + 2 * grid.pml_width * grid.h_x
    need = max(grid.n_x, int(math.ceil(width / grid.h_x - 1e-9)))
    return 1 << (need - 1).bit_length()


def absorption_profile(n: int, h: float, pml_width: int, c_p: float) -> np.ndarray:
    """Quadratic damping rate rising across the outer ``pml_width`` cells of an ``n``-node box."""
    if pml_width == 0:
        return np.zeros((n, n))
    width = pml_width * h
    sigma_max = 3.0 * c_p * math.log(1.0 / LAYER_REFLECTION) / (2.0 * width)
    x = -n * h / 2 + h * np.arange(n)
    d = np.clip(np.abs(x) - (n * h / 2 - width), 0.0, None) / width
    prof = sigma_max * d**2
    return prof[None, :] + prof[:, None]


class _Propagator:
    """Exact per-mode elastic step of length ``dt`` and its transpose."""

    def __init__(self, grid: GridSpec, n: int, dt: float):
        KX, KY, mask = _wavenumbers(n, grid.h_x)
        k = np.hypot(KX, KY)
        safe = np.where(k > 0, k, 1.0)
        self.nx_hat = np.where(k > 0, KX / safe, 0.0)
        self.ny_hat = np.where(k > 0, KY / safe, 0.0)
        self.coef = {}
        for name, c in (("p", grid.c_p), ("s", grid.c_s)):
            w = c * k
            cos = np.cos(w * dt)
            # sin(w dt)/w -> dt and w sin(w dt) -> 0 as w -> 0
            sinc = dt * np.sinc(w * dt / np.pi)
            wsin = w * np.sin(w * dt)
            self.coef[name] = (cos * mask, sinc * mask, wsin * mask)

    def _split(self, h):
        proj = self.nx_hat * h[0] + self.ny_hat * h[1]
        hp = np.stack([self.nx_hat * proj, self.ny_hat * proj])
        return hp, h - hp

    def step(self, uh, vh, transpose=False):
        up, us = self._split(uh)
        vp, vs = self._split(vh)
        cp, sp, wp = self.coef["p"]
        cs, ss, ws = self.coef["s"]
        if not transpose:
            u_new = cp * up + sp * vp + cs * us + ss * vs
            v_new = -wp * up + cp * vp - ws * us + cs * vs
        else:
            u_new = cp * up - wp * vp + cs * us - ws * vs
            v_new = sp * up + cp * vp + ss * us + cs * vs
        return u_new, v_new


@dataclass
class ElasticState:
    """Displacement and velocity on the computational box at time ``t``."""

    u: np.ndarray          # (2, n, n)
    v: np.ndarray          # (2, n, n)
    t: float
    aux: dict = field(default_factory=dict)


class ElasticSolver:
    """Time stepper for one grid.

    ``absorbing=True`` runs on the extended box with the damping layer (free
    space emulation around B); ``absorbing=False`` runs on B itself with
    plain periodic wrap.
    """

    def __init__(self, grid: GridSpec, absorbing: bool = True):
        if grid.dt > stability_limit(grid.h_x, grid.c_p) * (1 + 1e-12):
            raise StabilityViolation("solver step exceeds the stability bound")
        self.grid = grid
        self.absorbing = absorbing
        self.n = extended_size(grid) if absorbing else grid.n_x
        self.offset = (self.n - grid.n_x) // 2
        self.prop = _Propagator(grid, self.n, grid.dt)
        sigma = (absorption_profile(self.n, grid.h_x, grid.pml_width, grid.c_p)
                 if absorbing else np.zeros((self.n, self.n)))
        self.half_damp = np.exp(-0.5 * sigma * grid.dt)

    def embed(self, a: np.ndarray) -> np.ndarray:
        out = np.zeros(a.shape[:-2] + (self.n, self.n))
        s = slice(self.offset, self.offset + self.grid.n_x)
        out[..., s, s] = a
        return out

    def restrict(self, a: np.ndarray) -> np.ndarray:
        s = slice(self.offset, self.offset + self.grid.n_x)
        return a[..., s, s].copy()

    def coords(self) -> np.ndarray:
        return -self.n * self.grid.h_x / 2 + self.grid.h_x * np.arange(self.n)

    def initial_state(self, F: VectorField2) -> ElasticState:
        u = self.embed(F.stack())
        return ElasticState(u=u, v=np.zeros_like(u), t=0.0, aux={"half_damping": self.half_damp})

    def _advance(self, u, v, transpose=False):
        if self.absorbing:
            u = u * self.half_damp
            v = v * self.half_damp
        uh, vh = self.prop.step(_rfft(u), _rfft(v), transpose=transpose)
        u, v = _irfft(uh, self.n), _irfft(vh, self.n)
        if self.absorbing:
            u = u * self.half_damp
            v = v * self.half_damp
        return u, v

    def advance(self, state: ElasticState, steps: int = 1) -> ElasticState:
        u, v = state.u, state.v
        for _ in range(steps):
            u, v = self._advance(u, v)
        return ElasticState(u=u, v=v, t=state.t + steps * self.grid.dt, aux=state.aux)

    def energy(self, state: ElasticState) -> float:
        """``½‖v‖² + ½<u, -L u>`` with the ``h_x²`` cell measure."""
        h = self.grid.h_x
        lu = _lame_apply(state.u, self.n, h, self.grid.lam, self.grid.mu)
        return 0.5 * h**2 * (np.sum(state.v**2) - np.sum(state.u * lu))

    def stencil(self, points):
        return bilinear_stencil(points, self.n, self.grid.h_x)


# ---------------------------------------------------------------------------
# detectors and measurements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectorArray:
    """Receivers ``positions`` (M, 2) and sample indices ``time_index`` (t_n = n·h_t)."""

    positions: np.ndarray
    time_index: np.ndarray
    h_t: float

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1, 2)
        idx = np.array(self.time_index, dtype=np.int64).ravel()
        if pos.shape[0] == 0 or idx.size == 0:
            raise EmptyMeasurements("need at least one detector and one sample time")
        if np.any(np.diff(idx) <= 0) or idx[0] < 1:
            raise ValueError("sample indices must be strictly increasing and >= 1")
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        if np.min(d) <= 0:
            raise ValueError("detector positions must be distinct")
        pos.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "time_index", idx)

    @property
    def m(self) -> int:
        return self.positions.shape[0]

    @property
    def n(self) -> int:
        return self.time_index.size

    @property
    def times(self) -> np.ndarray:
        return self.time_index * self.h_t

    def check_on_circle(self, grid: GridSpec):
        r = np.linalg.norm(self.positions, axis=1)
        if np.any(np.abs(r - 1.0) > grid.h_x / 2):
            raise ValueError("detectors must lie on the unit circle to within h_x/2")
        if self.time_index[-1] > grid.n_t:
            raise ValueError("sample times exceed t_max")

    def to_dict(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "time_index": self.time_index.tolist(),
            "h_t": self.h_t,
        }

    @classmethod
    def from_dict(cls, d) -> "DetectorArray":
        return cls(np.asarray(d["positions"]), np.asarray(d["time_index"]), float(d["h_t"]))


def circle_detectors(grid: GridSpec, m: int = 64, n: int | None = None,
                     offset: float | None = None) -> DetectorArray:
    """``m`` equally spaced receivers on the unit circle sampling ``n`` equally spaced times.

    The default angular ``offset`` of half a spacing keeps receivers off grid nodes.
    """
    if offset is None:
        offset = math.pi / m
    theta = offset + 2 * math.pi * np.arange(m) / m
    pos = np.column_stack([np.cos(theta), np.sin(theta)])
    n = grid.n_t if n is None else n
    if grid.n_t % n:
        raise NotDivisor(f"{n} sample times do not divide {grid.n_t} steps")
    step = grid.n_t // n
    return DetectorArray(pos, step * np.arange(1, n + 1), grid.h_t)


def bilinear_stencil(points: np.ndarray, n: int, h: float):
    """Flat node indices (P, 4) and weights (P, 4) interpolating at ``points``
    on an ``n``-node periodic box centred at the origin with spacing ``h``."""
    f = (np.asarray(points, dtype=np.float64) + n * h / 2) / h
    i0 = np.floor(f).astype(np.int64)
    w = f - i0
    ix = [i0[:, 0], i0[:, 0] + 1, i0[:, 0], i0[:, 0] + 1]
    iy = [i0[:, 1], i0[:, 1], i0[:, 1] + 1, i0[:, 1] + 1]
    wx, wy = w[:, 0], w[:, 1]
    weights = np.column_stack([(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy])
    idx = np.column_stack([(y % n) * n + (x % n) for x, y in zip(ix, iy)])
    return idx, weights


def _sample(u, idx, weights):
    flat = u.reshape(2, -1)
    return np.einsum("cpk,pk->cp", flat[:, idx], weights)


def _scatter(values, idx, weights, n):
    out = np.zeros((2, n * n))
    for c in range(2):
        np.add.at(out[c], idx.ravel(), (values[c][:, None] * weights).ravel())
    return out.reshape(2, n, n)


@dataclass(frozen=True)
class MeasurementSet:
    """Traces ``[component, time, detector]``; :meth:`vector` uses index ``i·N·M + n·M + m``."""

    detectors: DetectorArray
    traces: np.ndarray

    def __post_init__(self):
        tr = np.array(self.traces, dtype=np.float64)
        shape = (2, self.detectors.n, self.detectors.m)
        if tr.shape != shape:
            raise DimMismatch(f"traces shape {tr.shape} != {shape}")
        if not np.all(np.isfinite(tr)):
            raise ValueError("traces contain non-finite values")
        tr.setflags(write=False)
        object.__setattr__(self, "traces", tr)

    def vector(self) -> np.ndarray:
        return self.traces.reshape(-1).copy()

    @classmethod
    def from_vector(cls, detectors: DetectorArray, vec) -> "MeasurementSet":
        return cls(detectors, np.asarray(vec, dtype=np.float64).reshape(2, detectors.n, detectors.m))

    def scaled(self, a: float) -> "MeasurementSet":
        return MeasurementSet(self.detectors, a * self.traces)

    def write(self, path) -> None:
        """CSV of ``component,time_index,detector_index,value`` plus a JSON geometry sidecar."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component", "time_index", "detector_index", "value"])
            for i in range(2):
                for n in range(self.detectors.n):
                    for m in range(self.detectors.m):
                        w.writerow([i, n, m, f"{self.traces[i, n, m]:.17g}"])
        path.with_suffix(".json").write_text(json.dumps(self.detectors.to_dict(), indent=2))

    @classmethod
    def read(cls, path) -> "MeasurementSet":
        path = Path(path)
        det = DetectorArray.from_dict(json.loads(path.with_suffix(".json").read_text()))
        tr = np.zeros((2, det.n, det.m))
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            header = next(rows)
            if header != ["component", "time_index", "detector_index", "value"]:
                raise ValueError(f"unexpected header {header}")
            for i, n, m, v in rows:
                tr[int(i), int(n), int(m)] = float(v)
        return cls(det, tr)


def check_support(F: VectorField2, grid: GridSpec, radius: float | None = None, rtol=1e-10):
    radius = 1.0 - 2 * grid.h_x if radius is None else radius
    X, Y = grid.mesh()
    outside = np.hypot(X, Y) > radius
    arr = np.abs(F.stack())
    peak = arr.max()
    if peak > 0 and arr[:, outside].max() > rtol * peak:
        raise SupportViolation(f"source is non-zero outside radius {radius:.4f}")


def simulate(F: VectorField2, grid: GridSpec, detectors: DetectorArray,
             absorbing: bool = True) -> MeasurementSet:
    """Record ``u(y_m, t_n)`` for the source ``F(x) dδ₀/dt``."""
    if F.shape != grid.shape:
        raise DimMismatch(f"source shape {F.shape} does not match grid {grid.shape}")
    check_support(F, grid)
    detectors.check_on_circle(grid)
    solver = ElasticSolver(grid, absorbing=absorbing)
    idx, wts = solver.stencil(detectors.positions)
    state = solver.initial_state(F)
    u, v = state.u, state.v
    wanted = {int(n): j for j, n in enumerate(detectors.time_index)}
    traces = np.zeros((2, detectors.n, detectors.m))
    for n in range(1, int(detectors.time_index[-1]) + 1):
        for _ in range(grid.substeps):
            u, v = solver._advance(u, v)
        if n in wanted:
            traces[:, wanted[n], :] = _sample(u, idx, wts)
    return MeasurementSet(detectors, traces)


def adjoint_sweep(m: MeasurementSet, grid: GridSpec, absorbing: bool = True) -> np.ndarray:
    """Exact transpose of the trace map ``F -> simulate(F).traces`` (unweighted).

    One reversed sweep: traces are injected through the transposed sampling
    stencil and carried back with the transposed step, accumulating by
    Horner's rule ``z <- A^T z + inject_n``.
    """
    det = m.detectors
    solver = ElasticSolver(grid, absorbing=absorbing)
    idx, wts = solver.stencil(det.positions)
    n = solver.n
    index_of = {int(k): j for j, k in enumerate(det.time_index)}
    u = np.zeros((2, n, n))
    v = np.zeros((2, n, n))
    for k in range(int(det.time_index[-1]), 0, -1):
        if k in index_of:
            u = u + _scatter(m.traces[:, index_of[k], :], idx, wts, n)
        for _ in range(grid.substeps):
            u, v = solver._advance(u, v, transpose=True)
    return solver.restrict(u)


def subsample(m: MeasurementSet, keep_detectors: int, keep_times: int) -> MeasurementSet:
    """Keep every ``M/keep_detectors``-th receiver and every ``N/keep_times``-th sample."""
    det = m.detectors
    if keep_detectors < 1 or keep_times < 1 or det.m % keep_detectors or det.n % keep_times:
        raise NotDivisor(
            f"keep ({keep_detectors}, {keep_times}) must divide ({det.m}, {det.n})"
        )
    sd = det.m // keep_detectors
    st = det.n // keep_times
    rows = np.arange(st - 1, det.n, st)
    cols = np.arange(0, det.m, sd)
    new_det = DetectorArray(det.positions[cols], det.time_index[rows], det.h_t)
    return MeasurementSet(new_det, m.traces[:, rows][:, :, cols])


# ---------------------------------------------------------------------------
# Kupradze matrix
# ---------------------------------------------------------------------------

def kupradze_radial(r, omega, c_p: float, c_s: float):
    """Coefficients of ``Ĝ^α = a_α I + b_α x̂x̂ᵀ`` for α = P, S.

    Returns ``(a_p, b_p, a_s, b_s)`` broadcast over ``r`` and ``omega``.
    """
    r = np.asarray(r, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    kp = omega / c_p
    ks = omega / c_s
    q = 0.25j
    a_p = q * special.hankel1(1, kp * r) / (omega * c_p * r)
    b_p = -q * special.hankel1(2, kp * r) / c_p**2
    a_s = q * (special.hankel1(0, ks * r) / c_s**2 - special.hankel1(1, ks * r) / (omega * c_s * r))
    b_s = q * special.hankel1(2, ks * r) / c_s**2
    return a_p, b_p, a_s, b_s


@dataclass(frozen=True)
class KupradzeMatrix:
    total: np.ndarray
    pressure: np.ndarray
    shear: np.ndarray
    weighted: np.ndarray   # c_P Ĝ^P + c_S Ĝ^S


def kupradze_green(x, omega: float, grid: GridSpec) -> KupradzeMatrix:
    """Time-harmonic fundamental solution ``Ĝ_ω(x)`` and its P/S split."""
    x = np.asarray(x, dtype=np.float64)
    r = float(np.hypot(x[0], x[1]))
    if r < grid.h_x / 4:
        raise SingularPoint(f"|x| = {r:.3g} is below h_x/4")
    if omega == 0:
        raise SingularPoint("omega must be non-zero")
    sign = 1.0
    if omega < 0:
        omega, sign = -omega, -1.0
    a_p, b_p, a_s, b_s = kupradze_radial(r, omega, grid.c_p, grid.c_s)
    xx = np.outer(x, x) / r**2
    eye = np.eye(2)
    gp = a_p * eye + b_p * xx
    gs = a_s * eye + b_s * xx
    if sign < 0:
        gp, gs = np.conj(gp), np.conj(gs)
    return KupradzeMatrix(gp + gs, gp, gs, grid.c_p * gp + grid.c_s * gs)


def frequency_grid(omega_max: float, t_window: float):
    """Midpoint frequencies on ``(0, omega_max)`` resolving a time period ``t_window``."""
    d_omega = 2 * np.pi / t_window
    count = int(np.ceil(omega_max / d_omega))
    return (np.arange(count) + 0.5) * d_omega, d_omega


def tukey_taper(omega, omega_max: float, fraction: float = 0.2):
    """Flat up to ``(1 - fraction)·omega_max``, cosine roll-off to zero at ``omega_max``."""
    omega = np.abs(np.asarray(omega, dtype=np.float64))
    start = (1 - fraction) * omega_max
    w = np.ones_like(omega)
    roll = (omega > start) & (omega < omega_max)
    w[roll] = 0.5 * (1 + np.cos(np.pi * (omega[roll] - start) / (omega_max - start)))
    w[omega >= omega_max] = 0.0
    return w


def gaussian_bump_spectrum(kappa, amplitude: float, sigma: float):
    """2D Fourier transform of ``A exp(-r²/2σ²)`` at radial wavenumber ``kappa``."""
    return amplitude * 2 * np.pi * sigma**2 * np.exp(-0.5 * (sigma * kappa) ** 2)


def kupradze_bump_trace(y, times, amplitude: float, sigma: float, component: int,
                        c_p: float, c_s: float, omega_max: float,
                        t_window: float = 64.0, taper_fraction: float = 0.2) -> np.ndarray:
    """Displacement ``[∂_t G * F](y, t)`` for ``F = A exp(-|z|²/2σ²) e_component``.

    Uses the addition theorem: convolving a radial source with ``H_n(κ|x|)``
    terms multiplies each α-part by the source spectrum at ``κ_α``.  The
    inverse time transform is a midpoint sum over positive frequencies,
    returning an array of shape ``(2, len(times))``.
    """
    y = np.asarray(y, dtype=np.float64)
    r = float(np.hypot(*y))
    omega, d_omega = frequency_grid(omega_max, t_window)
    a_p, b_p, a_s, b_s = kupradze_radial(r, omega, c_p, c_s)
    fp = gaussian_bump_spectrum(omega / c_p, amplitude, sigma)
    fs = gaussian_bump_spectrum(omega / c_s, amplitude, sigma)
    yhat = y / r
    e = np.zeros(2)
    e[component] = 1.0
    proj = yhat * yhat[component]
    spec = ((a_p * fp + a_s * fs)[:, None] * e[None, :]
            + (b_p * fp + b_s * fs)[:, None] * proj[None, :])
    spec *= (-1j * omega * tukey_taper(omega, omega_max, taper_fraction))[:, None]
    phase = np.exp(-1j * np.outer(np.asarray(times, dtype=np.float64), omega))
    return (d_omega / np.pi) * np.real(phase @ spec).T
