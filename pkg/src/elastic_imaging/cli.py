"""Command-line interface: ``elastic-imaging <subcommand> ...``.

Usage errors exit with status 2; errors raised by the library exit with
status 1 and print a JSON object ``{"error": ..., "message": ...}`` to
stderr (also written to ``<out>/error.json`` when ``--out`` is given).
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import ElasticImagingError
from .forward import MeasurementSet, circle_detectors, simulate
from .framelets import coefficients, reconstruct, svd_basis
from .grid import ScalarField, read_field, write_field
from .learning import contaminated_task, normalized_encoder, svd_init, train
from .metrics import report
from .phantoms import add_noise, phantom_source, random_phantom, shepp_logan
from .pipeline import METHODS, SWEEP_AXES, ConfigError, PipelineConfig, run_pipeline, safe_error, sweep
from .pooling import PoolingFrame, frame_defect
from .sensing import annihilation_score
from .tv import TVParams, tv_denoise


def _load_config(args) -> PipelineConfig:
    data = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text())
    cfg = PipelineConfig.from_dict(data)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "method", None):
        cfg = replace(cfg, method=args.method)
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_phantom(args):
    cfg = _load_config(args)
    grid = cfg.make_grid()
    kind = args.kind or cfg.phantom
    ph = shepp_logan(grid) if kind == "shepp_logan" else random_phantom(cfg.seed, grid)
    files = ph.write(_out(args) / "phantom")
    _emit({"files": [str(f) for f in files], "ellipses": len(ph.ellipses)})


def cmd_simulate(args):
    cfg = _load_config(args)
    grid = cfg.make_grid()
    ph = shepp_logan(grid) if cfg.phantom == "shepp_logan" else random_phantom(cfg.seed, grid)
    second = random_phantom(cfg.seed + 1, grid) if cfg.second_component == "random" else None
    m = simulate(phantom_source(ph, second), grid, circle_detectors(grid, cfg.detectors, cfg.times))
    if cfg.noise_snr_db is not None:
        m = add_noise(m, cfg.noise_snr_db, cfg.noise_seed)
    out = _out(args)
    ph.write(out / "phantom")
    m.write(out / "measurements.csv")
    (out / "grid.json").write_text(grid.to_json())
    _emit({"measurements": str(out / "measurements.csv"), "shape": list(m.traces.shape)})


def cmd_timereverse(args):
    from .time_reversal import weighted_time_reversal

    cfg = _load_config(args)
    grid = cfg.make_grid()
    m = MeasurementSet.read(args.measurements)
    img = weighted_time_reversal(m, grid)
    files = img.write(_out(args) / "tr")
    _emit({"files": [str(f) for f in files]})


def cmd_denoise_tv(args):
    img = read_field(args.input)
    out = tv_denoise(img, TVParams(args.gamma, args.max_iters, args.tol))
    path = _out(args) / "denoised.efd"
    write_field(out, path)
    _emit({"output": str(path)})


def cmd_framelet(args):
    f = read_field(args.input).data
    signal = f.ravel()
    basis = svd_basis(signal, args.p, args.r)
    rec = reconstruct(coefficients(signal, basis), basis)
    out = _out(args)
    write_field(ScalarField.from_array(rec.reshape(f.shape)), out / "framelet.efd")
    basis_path = out / "basis.json"
    basis.save(basis_path)
    err = float(np.linalg.norm(rec - signal) / max(np.linalg.norm(signal), 1e-300))
    _emit({"relative_change": err, "rank_budget": basis.rank_budget, "basis": str(basis_path)})


def cmd_frames_check(args):
    kind = {"unet": "unet", "dual": "dual_frame", "identity": "identity"}[args.kind]
    d = frame_defect(PoolingFrame(kind, args.q))
    print(f"{d:.17g}")


def cmd_learn(args):
    task = contaminated_task(q=args.q, seed=args.seed)
    basis = train(task.pairs, args.p, task.rank, relu=args.relu, steps=args.steps, lr=args.lr, seed=args.seed)
    v0, _ = svd_init(task.pairs, args.p, task.rank)
    files = basis.save(_out(args) / "learned") if args.out else []
    _emit({
        "initial_loss": basis.trace[0],
        "final_loss": basis.trace[-1],
        "annihilation_initial": annihilation_score(normalized_encoder(v0), task.null_vectors),
        "annihilation_final": annihilation_score(normalized_encoder(basis.psi), task.null_vectors),
        "files": [str(f) for f in files],
    })


def cmd_pipeline(args):
    cfg = _load_config(args)
    rep, extra = run_pipeline(cfg, args.out)
    _emit({"psnr_db": rep.psnr_db, "psnr_conventional_db": rep.psnr_conventional_db,
           "ssim": rep.ssim, **extra})


def cmd_sweep(args):
    cfg = _load_config(args)
    values = [int(v) for v in args.values.split(",") if v.strip()] if args.values else []
    rows = sweep(cfg, args.axis, values, args.out, args.jobs)
    _emit({"rows": [list(r) for r in rows]})


def cmd_metrics(args):
    rep = report(read_field(args.recon).data, read_field(args.truth).data, args.dynamic_range)
    if args.csv:
        rep.append_csv(args.csv, args.label)
    print(rep.to_json())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastic-imaging", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="pipeline config JSON")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("phantom", help="generate a phantom")
    common(sp)
    sp.add_argument("--kind", choices=["random", "shepp_logan"])
    sp.set_defaults(func=cmd_phantom)

    sp = sub.add_parser("simulate", help="phantom source -> detector traces")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("timereverse", help="traces -> I_TR and I_WTR")
    common(sp)
    sp.add_argument("--measurements", required=True)
    sp.set_defaults(func=cmd_timereverse)

    sp = sub.add_parser("denoise-tv", help="TV-FISTA denoising of a field file")
    common(sp)
    sp.add_argument("--input", required=True)
    sp.add_argument("--gamma", type=float, default=0.02)
    sp.add_argument("--max-iters", type=int, default=500)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.set_defaults(func=cmd_denoise_tv)

    sp = sub.add_parser("framelet", help="low-rank Hankel framelet projection of a field file")
    common(sp)
    sp.add_argument("--input", required=True)
    sp.add_argument("--p", type=int, default=8)
    sp.add_argument("--r", type=int, default=4)
    sp.set_defaults(func=cmd_framelet)

    sp = sub.add_parser("frames", help="frame diagnostics")
    fsub = sp.add_subparsers(dest="frames_command", required=True)
    fc = fsub.add_parser("check", help="print ‖Φ̃Φᵀ - I‖₂")
    fc.add_argument("--kind", choices=["unet", "dual", "identity"], required=True)
    fc.add_argument("--q", type=int, required=True)
    fc.set_defaults(func=cmd_frames_check)

    sp = sub.add_parser("learn", help="train a single-layer basis on the contaminated synthetic task")
    common(sp, out_required=False)
    sp.add_argument("--q", type=int, default=32)
    sp.add_argument("--p", type=int, default=8)
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--lr", type=float, default=1e-2)
    sp.add_argument("--relu", action="store_true")
    sp.set_defaults(func=cmd_learn, seed=0)

    sp = sub.add_parser("pipeline", help="end-to-end run")
    common(sp)
    sp.add_argument("--method", choices=METHODS)
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("sweep", help="pipeline runs over detector or time subsampling")
    common(sp)
    sp.add_argument("--axis", choices=SWEEP_AXES, required=True)
    sp.add_argument("--values", required=True, help="comma-separated ascending values")
    sp.add_argument("--method", choices=METHODS)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("metrics", help="PSNR/SSIM of two field files")
    sp.add_argument("--recon", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--dynamic-range", type=float, default=1.0)
    sp.add_argument("--csv")
    sp.add_argument("--label", default="")
    sp.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (ElasticImagingError, ValueError, OSError) as exc:
        err = safe_error(exc)
        print(json.dumps(err), file=sys.stderr)
        out = getattr(args, "out", None)
        if out:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(json.dumps(err, indent=2))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
