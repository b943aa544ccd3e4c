"""End-to-end experiment: phantom → traces → reconstruction → metrics.

A run is fully described by a :class:`PipelineConfig` (JSON-serializable).
Reconstructions are scored on the x-component over the crop: the image is
min-max normalized to ``[0, 1]`` and compared with the phantom.
"""
from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import ElasticImagingError
from .forward import MeasurementSet, circle_detectors, simulate, subsample
from .framelets import FrameletBasis, coefficients, reconstruct, svd_basis
from .grid import GridSpec, VectorField2, make_grid, write_vector_field
from .metrics import MetricReport, minmax, normalized_cross_correlation, report
from .phantoms import PhantomImage, add_noise, phantom_source, random_phantom, shepp_logan
from .png import line_plot, save_image
from .time_reversal import weighted_time_reversal
from .tv import TVParams, tv_denoise_array

METHODS = ("tr", "wtr", "wtr+tv", "wtr+framelet")
PHANTOM_KINDS = ("random", "shepp_logan")
SWEEP_AXES = ("detectors", "times")


class ConfigError(ValueError):
    """Invalid pipeline configuration (reported as a usage error)."""


@dataclass(frozen=True)
class PipelineConfig:
    grid: dict = field(default_factory=lambda: {
        "beta": 4.0, "n_x": 128, "t_max": 2.0, "n_t": 64, "lambda": 1.0, "mu": 1.0, "pml_width": 16})
    detectors: int = 64
    times: int = 64
    keep_detectors: int | None = None
    keep_times: int | None = None
    phantom: str = "random"
    seed: int = 0
    second_component: str = "zero"      # "zero" or "random"
    noise_snr_db: float | None = None
    noise_seed: int = 1
    method: str = "wtr"
    tv_gamma: float = 0.02
    framelet_pencil: int = 8
    framelet_rank: int | None = None
    framelet_basis: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.phantom not in PHANTOM_KINDS:
            raise ConfigError(f"phantom must be one of {PHANTOM_KINDS}, got {self.phantom!r}")
        if self.second_component not in ("zero", "random"):
            raise ConfigError("second_component must be 'zero' or 'random'")

    def make_grid(self) -> GridSpec:
        g = self.grid
        return make_grid(float(g["beta"]), int(g["n_x"]), float(g["t_max"]), int(g["n_t"]),
                         float(g["lambda"]), float(g["mu"]), int(g.get("pml_width", 16)),
                         g.get("substeps"))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def make_phantom(cfg: PipelineConfig, grid: GridSpec) -> PhantomImage:
    if cfg.phantom == "shepp_logan":
        return shepp_logan(grid)
    return random_phantom(cfg.seed, grid)


def reconstruct_image(m: MeasurementSet, grid: GridSpec, cfg: PipelineConfig) -> np.ndarray:
    """Two-component image on the crop according to ``cfg.method``."""
    s = grid.crop_slice()
    tr = weighted_time_reversal(m, grid)
    if cfg.method == "tr":
        return tr.raw.stack()[:, s, s]
    img = tr.weighted.stack()[:, s, s]
    if cfg.method == "wtr":
        return img
    if cfg.method == "wtr+tv":
        params = TVParams(cfg.tv_gamma)
        return np.stack([tv_denoise_array(minmax(c), params) for c in img])
    out = []
    for c in img:
        f = c.ravel()
        if cfg.framelet_basis:
            basis = FrameletBasis.load(cfg.framelet_basis, strict=False)
        else:
            r = cfg.framelet_rank or max(1, cfg.framelet_pencil // 2)
            basis = svd_basis(f, cfg.framelet_pencil, r)
        out.append(reconstruct(coefficients(f, basis), basis).reshape(c.shape))
    return np.stack(out)


def tolerances() -> dict:
    from . import forward, framelets, hankel, learning, sensing
    return {
        "frame_tol": framelets.FRAME_TOL,
        "projection_tol": framelets.PROJECTION_TOL,
        "rank_tol": hankel.DEFAULT_RANK_TOL,
        "layer_reflection": forward.LAYER_REFLECTION,
        "sensing_max_entries": sensing.MAX_ENTRIES,
        "kink_margin": learning.KINK_MARGIN,
        "tv_tol": TVParams().tol,
        "tv_max_iters": TVParams().max_iters,
    }


def write_manifest(out: Path, cfg: PipelineConfig, extra: dict | None = None) -> Path:
    manifest = {
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "versions": {"elastic_imaging": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
        "tolerances": tolerances(),
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def run_pipeline(cfg: PipelineConfig, out=None) -> tuple[MetricReport, dict]:
    """Run one experiment; with ``out`` set, write every artifact there."""
    grid = cfg.make_grid()
    ph = make_phantom(cfg, grid)
    second = random_phantom(cfg.seed + 1, grid) if cfg.second_component == "random" else None
    F = phantom_source(ph, second)
    det = circle_detectors(grid, cfg.detectors, cfg.times)
    m = simulate(F, grid, det)
    m = subsample(m, cfg.keep_detectors or cfg.detectors, cfg.keep_times or cfg.times)
    if cfg.noise_snr_db is not None:
        m = add_noise(m, cfg.noise_snr_db, cfg.noise_seed)
    img = reconstruct_image(m, grid, cfg)
    s = grid.crop_slice()
    truth = ph.image.data[s, s]
    recon = minmax(img[0])
    rep = report(recon, truth)
    extra = {"ncc": normalized_cross_correlation(img[0], truth)}
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        ph.write(out / "phantom")
        m.write(out / "measurements.csv")
        full = np.zeros((2,) + grid.shape)
        full[:, s, s] = img
        write_vector_field(VectorField2.from_arrays(full[0], full[1]), out / "reconstruction")
        (out / "metrics.json").write_text(json.dumps({**asdict(rep), **extra}, indent=2))
        metrics_csv = out / "metrics.csv"
        if metrics_csv.exists():
            metrics_csv.unlink()
        rep.append_csv(metrics_csv, cfg.method)
        save_image(out / "phantom.png", truth)
        save_image(out / "reconstruction.png", recon)
        write_manifest(out, cfg, {"outputs": sorted(p.name for p in out.iterdir())})
    return rep, extra


def _sweep_point(args):
    cfg, out = args
    rep, extra = run_pipeline(cfg, out)
    return rep, extra


def sweep(cfg: PipelineConfig, axis: str, values, out=None, jobs: int = 1) -> list[tuple]:
    """One run per value of ``keep_detectors`` or ``keep_times``; rows ``(value, psnr, psnr_conv, ssim)``."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}")
    values = [int(v) for v in values]
    if not values:
        raise ConfigError("sweep needs at least one value")
    if values != sorted(values):
        raise ConfigError("sweep values must be sorted ascending")
    key = "keep_detectors" if axis == "detectors" else "keep_times"
    out = Path(out) if out is not None else None
    tasks = [(replace(cfg, **{key: v}), (out / f"{axis}_{v}") if out else None) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    rows = [(v, r.psnr_db, r.psnr_conventional_db, r.ssim) for v, (r, _) in zip(values, results)]
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([axis, "psnr_db", "psnr_conventional_db", "ssim"])
            for row in rows:
                w.writerow([row[0]] + [f"{x:.17g}" for x in row[1:]])
        line_plot(out / "sweep.png", values, [[r[1] for r in rows], [r[3] for r in rows]])
        write_manifest(out, cfg, {"sweep": {"axis": axis, "values": values}})
    return rows


def safe_error(exc: Exception) -> dict:
    code = exc.code if isinstance(exc, ElasticImagingError) else type(exc).__name__
    return {"error": code, "message": str(exc)}
