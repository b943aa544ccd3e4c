"""Time-reversal imaging: back-propagation of traces and the weighted image.

The family of adjoint problems indexed by the control time τ is collapsed
into one reversed sweep (superposition), so ``back_propagate`` is the
discrete adjoint of :func:`forward.simulate` with respect to the quadrature
inner products

    <d, m>_data  = h_t' (2π/M) Σ d·m        <F, I>_image = h_x² Σ F·I

where ``h_t' = t_max / N`` is the spacing of the recorded samples.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimMismatch, EmptyMeasurements
from .forward import MeasurementSet, adjoint_sweep
from .grid import GridSpec, VectorField2, read_vector_field, write_vector_field
from .helmholtz import decompose, weighted_recombine


def quadrature_weights(m: MeasurementSet, grid: GridSpec) -> tuple[float, float]:
    """``(data weight, image weight)`` of the two inner products above."""
    det = m.detectors
    return grid.t_max / det.n * 2 * math.pi / det.m, grid.h_x**2


def back_propagate(m: MeasurementSet, grid: GridSpec, absorbing: bool = True) -> VectorField2:
    """Discretized ``I_TR``: time-flipped traces re-emitted from the detectors."""
    det = m.detectors
    if det.m == 0 or det.n == 0:
        raise EmptyMeasurements("no traces to back-propagate")
    if abs(det.h_t - grid.h_t) > 1e-12 * grid.h_t or det.time_index[-1] > grid.n_t:
        raise DimMismatch("measurement sampling does not match the grid")
    w_data, w_img = quadrature_weights(m, grid)
    img = adjoint_sweep(m, grid, absorbing=absorbing) * (w_data / w_img)
    return VectorField2.from_arrays(img[0], img[1])


@dataclass(frozen=True)
class TRImage:
    raw: VectorField2
    weighted: VectorField2
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.raw.shape != self.weighted.shape:
            raise DimMismatch("raw and weighted images must share dimensions")

    def write(self, stem) -> list[Path]:
        """``stem_raw_{x,y}.efd``, ``stem_weighted_{x,y}.efd`` and ``stem.json``."""
        stem = Path(stem)
        files = write_vector_field(self.raw, f"{stem}_raw")
        files += write_vector_field(self.weighted, f"{stem}_weighted")
        side = stem.with_name(stem.name + ".json")
        side.write_text(json.dumps(self.meta, indent=2, sort_keys=True))
        return files + [side]

    @classmethod
    def read(cls, stem) -> "TRImage":
        stem = Path(stem)
        meta = json.loads(stem.with_name(stem.name + ".json").read_text())
        return cls(read_vector_field(f"{stem}_raw"), read_vector_field(f"{stem}_weighted"), meta)


def weighted_time_reversal(m: MeasurementSet, grid: GridSpec, absorbing: bool = True) -> TRImage:
    """``I_TR`` and ``I_WTR = c_S ∇×ψ + c_P ∇φ`` of its Helmholtz parts."""
    raw = back_propagate(m, grid, absorbing=absorbing)
    weighted = weighted_recombine(decompose(raw, grid), grid.c_p, grid.c_s)
    meta = {"grid": grid.to_dict(), "detectors": m.detectors.to_dict()}
    return TRImage(raw, weighted, meta)
