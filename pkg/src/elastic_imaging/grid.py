"""Grid and field value types, the canonical vectorization, binary field I/O.

Layout convention: a field on an ``n x n`` grid is a 2D array indexed
``[iy, ix]`` (row = y, column = x), so flattening in C order is row-major
with x varying fastest.  Grid node ``j`` sits at ``-beta/2 + j*h_x``.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimMismatch,
    InvalidGrid,
    InvalidLame,
    NonFiniteData,
    StabilityViolation,
    TruncatedFile,
)

MAGIC = b"EFD1"
_HEADER = struct.Struct("<4sII")


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Simulation box ``[-beta/2, beta/2]^2`` with a uniform space/time grid.

    ``substeps`` is the number of solver steps per sample interval ``h_t``;
    the stability bound is enforced on the solver step ``h_t / substeps``.
    """

    beta: float
    n_x: int
    h_x: float
    t_max: float
    n_t: int
    h_t: float
    lam: float
    mu: float
    pml_width: int
    substeps: int = 1

    def __post_init__(self):
        if self.mu <= 0 or self.lam + 2 * self.mu <= 0:
            raise InvalidLame(f"need mu > 0 and lambda + 2 mu > 0, got lambda={self.lam}, mu={self.mu}")
        if self.h_x != self.beta / self.n_x or self.h_t != self.t_max / self.n_t:
            raise InvalidGrid("h_x must equal beta/n_x and h_t must equal t_max/n_t")
        if self.substeps < 1:
            raise InvalidGrid("substeps must be >= 1")
        if self.dt > stability_limit(self.h_x, self.c_p) * (1 + 1e-12):
            raise StabilityViolation(
                f"solver step {self.dt:.6g} exceeds h_x/(c_P sqrt 2) = "
                f"{stability_limit(self.h_x, self.c_p):.6g}"
            )
        if not 0 <= 2 * self.pml_width < self.n_x:
            raise InvalidGrid("pml_width must leave an interior")

    @property
    def c_p(self) -> float:
        return math.sqrt(self.lam + 2 * self.mu)

    @property
    def c_s(self) -> float:
        return math.sqrt(self.mu)

    @property
    def dt(self) -> float:
        """Internal solver step."""
        return self.h_t / self.substeps

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_x)

    def coords(self) -> np.ndarray:
        return -self.beta / 2 + self.h_x * np.arange(self.n_x)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, Y)`` node coordinates, each shaped ``(n_x, n_x)`` as ``[iy, ix]``."""
        x = self.coords()
        return np.meshgrid(x, x, indexing="xy")

    def crop_slice(self) -> slice:
        """Index range of nodes with ``-1 <= x < 1`` (the square around the unit disc)."""
        start = int(round((self.beta / 2 - 1) / self.h_x))
        count = int(round(2 / self.h_x))
        if start < 0 or start + count > self.n_x or abs(count * self.h_x - 2) > 1e-12:
            raise InvalidGrid("grid does not resolve the [-1, 1]^2 crop on whole cells")
        return slice(start, start + count)

    @property
    def crop_shape(self) -> tuple[int, int]:
        s = self.crop_slice()
        n = s.stop - s.start
        return (n, n)

    @property
    def q(self) -> int:
        """Number of crop samples ``Q``."""
        n, m = self.crop_shape
        return n * m

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "n_x": self.n_x,
            "h_x": self.h_x,
            "t_max": self.t_max,
            "n_t": self.n_t,
            "h_t": self.h_t,
            "lambda": self.lam,
            "mu": self.mu,
            "pml_width": self.pml_width,
            "substeps": self.substeps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(
            beta=float(d["beta"]),
            n_x=int(d["n_x"]),
            h_x=float(d["h_x"]),
            t_max=float(d["t_max"]),
            n_t=int(d["n_t"]),
            h_t=float(d["h_t"]),
            lam=float(d["lambda"]),
            mu=float(d["mu"]),
            pml_width=int(d["pml_width"]),
            substeps=int(d.get("substeps", 1)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GridSpec":
        return cls.from_dict(json.loads(text))


def stability_limit(h_x: float, c_p: float) -> float:
    return h_x / (c_p * math.sqrt(2.0))


def make_grid(
    beta: float,
    n_x: int,
    t_max: float,
    n_t: int,
    lam: float,
    mu: float,
    pml_width: int = 16,
    substeps: int | None = None,
) -> GridSpec:
    """Build a validated grid.

    With ``substeps=None`` the smallest number of solver steps per sample
    interval that satisfies the stability bound is chosen.  Passing an
    explicit ``substeps`` that is too small raises ``StabilityViolation``.
    """
    if not (_is_pow2(n_x) and _is_pow2(n_t)):
        raise InvalidGrid("n_x and n_t must be powers of two")
    if mu <= 0 or lam + 2 * mu <= 0:
        raise InvalidLame(f"need mu > 0 and lambda + 2 mu > 0, got lambda={lam}, mu={mu}")
    h_x = beta / n_x
    h_t = t_max / n_t
    if substeps is None:
        limit = stability_limit(h_x, math.sqrt(lam + 2 * mu))
        substeps = max(1, math.ceil(h_t / limit - 1e-12))
    return GridSpec(beta, n_x, h_x, t_max, n_t, h_t, lam, mu, pml_width, substeps)


def paper_grid(pml_width: int = 16) -> GridSpec:
    """The reference configuration: beta=4, 128^2 nodes, t_max=2, 64 samples, c_P=sqrt(3), c_S=1."""
    return make_grid(4.0, 128, 2.0, 64, 1.0, 1.0, pml_width)


@dataclass(frozen=True)
class ScalarField:
    n_rows: int
    n_cols: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True).reshape(self.n_rows, self.n_cols)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteData("field contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr) -> "ScalarField":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise DimMismatch(f"expected a 2D array, got shape {arr.shape}")
        return cls(arr.shape[0], arr.shape[1], arr)

    @classmethod
    def zeros(cls, shape) -> "ScalarField":
        return cls(shape[0], shape[1], np.zeros(shape))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


@dataclass(frozen=True)
class VectorField2:
    comp_x: ScalarField
    comp_y: ScalarField

    def __post_init__(self):
        if self.comp_x.shape != self.comp_y.shape:
            raise DimMismatch("components must share dimensions")

    @classmethod
    def from_arrays(cls, ax, ay) -> "VectorField2":
        return cls(ScalarField.from_array(ax), ScalarField.from_array(ay))

    @classmethod
    def zeros(cls, shape) -> "VectorField2":
        return cls(ScalarField.zeros(shape), ScalarField.zeros(shape))

    @property
    def shape(self) -> tuple[int, int]:
        return self.comp_x.shape

    def stack(self) -> np.ndarray:
        """``(2, n_rows, n_cols)`` copy of both components."""
        return np.stack([self.comp_x.data, self.comp_y.data])

    def component(self, i: int) -> ScalarField:
        return (self.comp_x, self.comp_y)[i]


@dataclass(frozen=True)
class ImageVector:
    """Row-major samples of one field component over the crop."""

    values: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True).ravel()
        if v.size != self.shape[0] * self.shape[1]:
            raise DimMismatch(f"{v.size} values do not fill a {self.shape} crop")
        if not np.all(np.isfinite(v)):
            raise NonFiniteData("image vector contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def _check_field(field: ScalarField, grid: GridSpec | None):
    if grid is not None and field.shape != grid.shape:
        raise DimMismatch(f"field shape {field.shape} does not match grid {grid.shape}")


def field_to_image(field: ScalarField, grid: GridSpec | None = None) -> ImageVector:
    """Crop to the square around the unit disc and flatten row-major.

    ``grid=None`` uses the whole field as the crop.
    """
    _check_field(field, grid)
    if grid is None:
        return ImageVector(field.data.ravel(), field.shape)
    s = grid.crop_slice()
    block = field.data[s, s]
    return ImageVector(block.ravel(), block.shape)


def image_to_field(image: ImageVector, grid: GridSpec | None = None) -> ScalarField:
    """Inverse of :func:`field_to_image`; nodes outside the crop are zero."""
    if grid is None:
        return ScalarField(image.shape[0], image.shape[1], image.values)
    if tuple(image.shape) != grid.crop_shape:
        raise DimMismatch(f"image shape {image.shape} does not match crop {grid.crop_shape}")
    out = np.zeros(grid.shape)
    s = grid.crop_slice()
    out[s, s] = image.values.reshape(image.shape)
    return ScalarField.from_array(out)


def write_field(field: ScalarField, path) -> None:
    payload = np.ascontiguousarray(field.data, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, field.n_rows, field.n_cols))
        fh.write(payload)


def read_field(path) -> ScalarField:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedFile(f"{path}: {len(raw)} bytes is shorter than the header")
    magic, n_rows, n_cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagic(f"{path}: magic {magic!r} != {MAGIC!r}")
    need = _HEADER.size + 8 * n_rows * n_cols
    if len(raw) < need:
        raise TruncatedFile(f"{path}: expected {need} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", count=n_rows * n_cols, offset=_HEADER.size)
    if not np.all(np.isfinite(data)):
        raise NonFiniteData(f"{path}: payload contains non-finite values")
    return ScalarField(n_rows, n_cols, data.astype(np.float64))


def write_vector_field(vf: VectorField2, stem) -> list[Path]:
    """Write ``<stem>_x.efd`` and ``<stem>_y.efd``."""
    stem = Path(stem)
    paths = [stem.with_name(stem.name + "_x.efd"), stem.with_name(stem.name + "_y.efd")]
    write_field(vf.comp_x, paths[0])
    write_field(vf.comp_y, paths[1])
    return paths


def read_vector_field(stem) -> VectorField2:
    stem = Path(stem)
    return VectorField2(
        read_field(stem.with_name(stem.name + "_x.efd")),
        read_field(stem.with_name(stem.name + "_y.efd")),
    )
