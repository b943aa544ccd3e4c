"""Random-ellipse phantoms, the Shepp-Logan phantom and measurement noise.

Random numbers come from numpy's Philox (a counter-based generator with
64-bit words), so a seed fully determines a phantom on every platform;
test vectors for the stream are frozen in the test suite.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateImage, ZeroSignal
from .forward import MeasurementSet
from .grid import GridSpec, ScalarField, VectorField2, write_field

CENTER_RANGE = 0.375
AXIS_RANGE = 0.525
INTENSITY_RANGE = 10.0
MAX_ELLIPSES = 10
MAX_REDRAWS = 100


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class EllipseSpec:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    angle: float
    intensity: float

    def extent(self) -> float:
        """Upper bound on ``|x|`` over the ellipse."""
        return math.hypot(*self.center) + max(self.semi_axes)

    def mask(self, X, Y) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        dx, dy = X - self.center[0], Y - self.center[1]
        u = c * dx + s * dy
        v = -s * dx + c * dy
        return (u / self.semi_axes[0]) ** 2 + (v / self.semi_axes[1]) ** 2 <= 1.0


@dataclass(frozen=True)
class PhantomImage:
    image: ScalarField
    ellipses: tuple
    seed: int | None = None

    def write(self, stem) -> list[Path]:
        """``stem.efd`` plus ``stem.json`` with the ellipse list."""
        stem = Path(stem)
        fpath = stem.with_name(stem.name + ".efd")
        write_field(self.image, fpath)
        jpath = stem.with_name(stem.name + ".json")
        jpath.write_text(json.dumps({"seed": self.seed, "ellipses": [asdict(e) for e in self.ellipses]},
                                    indent=2))
        return [fpath, jpath]


def rasterize(ellipses, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Signed sum of intensities and the union-of-supports mask."""
    X, Y = grid.mesh()
    img = np.zeros(grid.shape)
    union = np.zeros(grid.shape, dtype=bool)
    for e in ellipses:
        m = e.mask(X, Y)
        img += e.intensity * m
        union |= m
    return img, union


def _draw_ellipse(rng, grid: GridSpec) -> EllipseSpec:
    limit = 1.0 - 4 * grid.h_x
    while True:
        center = tuple(rng.uniform(-CENTER_RANGE, CENTER_RANGE, 2))
        axes = np.abs(rng.uniform(-AXIS_RANGE, AXIS_RANGE, 2))
        angle = rng.uniform(-math.pi, math.pi)
        intensity = rng.uniform(-INTENSITY_RANGE, INTENSITY_RANGE)
        if axes.min() < 2 * grid.h_x:
            continue
        e = EllipseSpec((float(center[0]), float(center[1])), (float(axes[0]), float(axes[1])),
                        float(angle), float(intensity))
        if e.extent() <= limit:
            return e


def normalize_on_support(img: np.ndarray, union: np.ndarray) -> np.ndarray:
    """Min-max normalize the whole image (background included), then zero
    everything outside the ellipses."""
    lo, hi = img.min(), img.max()
    if hi - lo <= 0:
        raise DegenerateImage("image is constant")
    return ((img - lo) / (hi - lo)) * union


def random_phantom(seed: int, grid: GridSpec) -> PhantomImage:
    """1-10 random ellipses with signed overlapping intensities, normalized to ``[0, 1]``.

    A draw is repeated (same stream) when the normalized image does not reach
    1 inside the ellipses, e.g. when every intensity is negative.
    """
    rng = make_rng(seed)
    for _ in range(MAX_REDRAWS):
        count = int(rng.integers(1, MAX_ELLIPSES + 1))
        ellipses = tuple(_draw_ellipse(rng, grid) for _ in range(count))
        img, union = rasterize(ellipses, grid)
        if not union.any() or img.max() == img.min():
            continue
        out = normalize_on_support(img, union)
        if out.max() == 1.0:
            return PhantomImage(ScalarField.from_array(out), ellipses, seed)
    raise DegenerateImage(f"no usable phantom after {MAX_REDRAWS} draws for seed {seed}")


# (x0, y0, a, b, angle in degrees, intensity) of the original Shepp-Logan table
SHEPP_LOGAN = (
    (0.0, 0.0, 0.69, 0.92, 0.0, 2.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.02),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.02),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.01),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.01),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.01),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.01),
    (0.0, -0.605, 0.023, 0.023, 0.0, 0.01),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.01),
)


def shepp_logan(grid: GridSpec, scale: float = 0.9) -> PhantomImage:
    """Ten-ellipse Shepp-Logan phantom scaled by ``scale`` and normalized to ``[0, 1]``."""
    ellipses = tuple(
        EllipseSpec((x0 * scale, y0 * scale), (a * scale, b * scale), math.radians(t), v)
        for x0, y0, a, b, t, v in SHEPP_LOGAN
    )
    if ellipses[0].extent() > 1.0:
        raise ValueError("scale places the phantom outside the unit disc")
    img, union = rasterize(ellipses, grid)
    return PhantomImage(ScalarField.from_array(normalize_on_support(img, union)), ellipses, None)


def phantom_source(first: PhantomImage, second: PhantomImage | None = None) -> VectorField2:
    """Source density with ``first`` in the x-component and ``second`` (or zero) in y."""
    a = first.image.data
    b = np.zeros_like(a) if second is None else second.image.data
    return VectorField2.from_arrays(a, b)


def center_input(values) -> np.ndarray:
    """Subtract the image mean (applied to network inputs only)."""
    v = np.asarray(values, dtype=np.float64)
    return v - v.mean()


def add_noise(m: MeasurementSet, snr_db: float, seed: int) -> MeasurementSet:
    """White Gaussian noise at ``10 log10(P_signal / P_noise) = snr_db``; ``inf`` is a no-op."""
    if math.isinf(snr_db) and snr_db > 0:
        return m
    power = float(np.mean(m.traces**2))
    if power == 0:
        raise ZeroSignal("cannot set an SNR for an all-zero measurement")
    sigma = math.sqrt(power / 10 ** (snr_db / 10))
    noise = make_rng(seed).standard_normal(m.traces.shape) * sigma
    return MeasurementSet(m.detectors, m.traces + noise)


def empirical_snr(clean, noisy) -> float:
    clean = np.asarray(clean)
    return 10 * math.log10(np.mean(clean**2) / np.mean((np.asarray(noisy) - clean) ** 2))
