"""Acceptance suite: one test per criterion, each with its runtime budget.

Every test records a PASS/FAIL line that is printed in the terminal summary.
"""
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy import optimize

from conftest import ACCEPTANCE
from elastic_imaging import forward as fw
from elastic_imaging.framelets import (
    coefficients, coefficients_unlifted, reconstruct, reconstruct_unlifted, svd_basis,
)
from elastic_imaging.grid import VectorField2, make_grid
from elastic_imaging.hankel import (
    annihilation_residual, build_annihilator, exponential_sum, lift_matrix, numerical_rank,
)
from elastic_imaging.learning import (
    contaminated_task, finite_difference_check, normalized_encoder, svd_init, train, LearnedBasis,
)
from elastic_imaging.metrics import normalized_cross_correlation, psnr, psnr_conventional, ssim
from elastic_imaging.pipeline import PipelineConfig, run_pipeline, sweep
from elastic_imaging.pooling import (
    PoolingFrame, dual_frame_synthesis, frame_defect, unet_analysis, unet_roundtrip,
)
from elastic_imaging.sensing import (
    assemble_sensing, null_space_probe, right_pseudo_inverse, vectorize_source, annihilation_score,
)
from elastic_imaging.time_reversal import weighted_time_reversal
from elastic_imaging.tv import TVParams, objective, tv_denoise_array


@contextmanager
def criterion(name, budget):
    """Collect named checks; fail the test if any check or the time budget fails."""
    checks = []
    start = time.perf_counter()
    try:
        yield checks
    except Exception as exc:
        checks.append((f"raised {type(exc).__name__}: {exc}", False))
        raise
    finally:
        elapsed = time.perf_counter() - start
        checks.append((f"runtime {elapsed:.1f}s < {budget}s", elapsed < budget))
        failed = [c for c, ok in checks if not ok]
        detail = "; ".join(c for c, _ in checks)
        ACCEPTANCE.append((name, not failed, detail))
        print(f"{'PASS' if not failed else 'FAIL'} criterion {name}: {detail}")
    assert not failed, f"criterion {name} failed: {failed}"


def real_rank_r_signal(rng, q, r):
    """Real signal whose DFT has exactly ``r`` non-zero bins (Hankel rank ``r``)."""
    self_conj = [0, q // 2]
    n_self = 1 if r % 2 else int(rng.choice([0, 2]))
    n_pairs = (r - n_self) // 2
    spec = np.zeros(q, dtype=complex)
    for k in rng.choice(self_conj, n_self, replace=False):
        spec[k] = rng.uniform(0.5, 2.0) * rng.choice([-1, 1])
    for k in rng.choice(np.arange(1, q // 2), n_pairs, replace=False):
        c = rng.uniform(0.5, 2.0) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        spec[k] = c
        spec[q - k] = np.conj(c)
    return np.fft.ifft(spec).real * q


def test_criterion_01_frame_check_cli():
    with criterion("1 frames check", 1.0) as checks:
        for q in (4, 8, 16, 64, 256):
            d_dual = frame_defect(PoolingFrame("dual_frame", q))
            d_unet = frame_defect(PoolingFrame("unet", q))
            checks.append((f"Q={q} dual {d_dual:.1e}", d_dual <= 1e-12))
            checks.append((f"Q={q} unet {d_unet:.12f}", abs(d_unet - 1.0) <= 1e-10))
    out = subprocess.run([sys.executable, "-m", "elastic_imaging", "frames", "check", "--kind", "dual",
                          "--q", "16"], capture_output=True, text=True, check=True)
    assert float(out.stdout) <= 1e-12


def test_criterion_02_pooling_identities():
    rng = np.random.default_rng(2)
    with criterion("2 pooling identities", 1.0) as checks:
        worst = 0.0
        for _ in range(1000):
            x = rng.standard_normal(64)
            worst = max(worst, np.max(np.abs(dual_frame_synthesis(*unet_analysis(x)) - x)))
        checks.append((f"dual∘analysis max {worst:.1e}", worst <= 1e-12))
        exact = all(np.array_equal(unet_roundtrip(np.full(32, c)), 2 * np.full(32, c))
                    for c in rng.standard_normal(200) * 10.0 ** rng.integers(-6, 6, 200))
        checks.append(("unet synthesis of constants is exactly 2x", exact))


def test_criterion_03_framelet_round_trip():
    rng = np.random.default_rng(3)
    q, p = 64, 8
    with criterion("3 framelet round trip", 10.0) as checks:
        rt = lu = 0.0
        for r in range(1, 6):
            for _ in range(100 // 5):
                f = real_rank_r_signal(rng, q, r)
                assert numerical_rank(lift_matrix(f, p)) == r
                basis = svd_basis(f, p, r)
                c = coefficients(f, basis)
                rec = reconstruct(c, basis)
                rt = max(rt, np.linalg.norm(rec - f) / np.linalg.norm(f))
                cu = coefficients_unlifted(f, basis)
                lu = max(lu, np.max(np.abs(cu.values - c.values)),
                         np.max(np.abs(reconstruct_unlifted(c, basis) - rec)))
        checks.append((f"round trip {rt:.1e}", rt <= 1e-9))
        checks.append((f"lifted vs unlifted {lu:.1e}", lu <= 1e-12))


def test_criterion_04_fri_rank():
    rng = np.random.default_rng(4)
    q, p = 32, 8
    grid_freqs = 2 * np.pi * np.arange(q) / q
    with criterion("4 FRI rank", 5.0) as checks:
        failures = 0
        worst = 0.0
        for r in range(1, 6):
            for _ in range(100):
                w = rng.choice(grid_freqs, r, replace=False)
                c = rng.uniform(0.5, 2.0, r) * np.exp(1j * rng.uniform(0, 2 * np.pi, r))
                f = exponential_sum(w, c, q)
                failures += numerical_rank(lift_matrix(f, p), 1e-8) != r
                res = annihilation_residual(f, build_annihilator(w))
                worst = max(worst, res / np.linalg.norm(f))
        checks.append((f"{failures} rank failures", failures == 0))
        checks.append((f"annihilation residual {worst:.1e}·‖f‖", worst <= 1e-10))


def test_criterion_05_forward_oracle_and_adjoint(ref_grid):
    g = ref_grid
    X, Y = g.mesh()
    det = fw.circle_detectors(g, 64, 64)
    rng = np.random.default_rng(5)
    with criterion("5 forward vs Kupradze, adjoint", 60.0) as checks:
        sigma = 3 * g.h_x
        b = np.exp(-(X**2 + Y**2) / (2 * sigma**2))
        m = fw.simulate(VectorField2.from_arrays(b, 0 * b), g, det)
        for j in (0, 5, 16, 40):
            ref = fw.kupradze_bump_trace(det.positions[j], det.times, 1.0, sigma, 0,
                                         g.c_p, g.c_s, omega_max=150)
            err = np.linalg.norm(m.traces[:, :, j] - ref) / np.linalg.norm(ref)
            checks.append((f"detector {j} rel err {err:.3f}", err <= 0.05))
        inside = np.hypot(X, Y) < 0.9
        worst = 0.0
        for _ in range(10):
            F = VectorField2.from_arrays(rng.standard_normal(X.shape) * inside,
                                         rng.standard_normal(X.shape) * inside)
            d = rng.standard_normal((2, det.n, det.m))
            lhs = np.sum(fw.simulate(F, g, det).traces * d)
            rhs = np.sum(fw.adjoint_sweep(fw.MeasurementSet(det, d), g) * F.stack())
            worst = max(worst, abs(lhs - rhs) / abs(lhs))
        checks.append((f"adjoint mismatch {worst:.1e}", worst <= 0.01))


def test_criterion_06_time_reversal(ref_grid):
    g = ref_grid
    X, Y = g.mesh()
    s = g.crop_slice()
    det = fw.circle_detectors(g, 64, 64)
    with criterion("6 weighted time reversal", 120.0) as checks:
        b = np.exp(-(X**2 + Y**2) / (2 * 0.1**2))
        F = VectorField2.from_arrays(b, 0.5 * b)
        img = weighted_time_reversal(fw.simulate(F, g, det), g).weighted.stack()
        for i in range(2):
            ncc = normalized_cross_correlation(img[i][s, s], F.stack()[i][s, s])
            checks.append((f"NCC component {i} {ncc:.3f}", ncc >= 0.7))
        sigma = 2 * g.h_x
        pt = np.exp(-((X - 0.3) ** 2 + (Y - 0.2) ** 2) / (2 * sigma**2))
        pt[np.hypot(X, Y) > 0.9] = 0.0
        P = VectorField2.from_arrays(pt, 0 * pt)
        tr = weighted_time_reversal(fw.simulate(P, g, det), g)
        truth = pt[s, s]
        p_wtr = psnr_conventional(tr.weighted.comp_x.data[s, s], truth)
        p_tr = psnr_conventional(tr.raw.comp_x.data[s, s], truth)
        checks.append((f"point source PSNR WTR {p_wtr:.2f} dB vs TR {p_tr:.2f} dB", p_wtr >= p_tr))


def test_criterion_07_detector_sweep():
    with criterion("7 detector sweep", 600.0) as checks:
        rows = sweep(PipelineConfig(seed=0), "detectors", [8, 16, 32, 64])
        values = [r[1] for r in rows]
        ok = all(b >= a - 0.5 for a, b in zip(values, values[1:]))
        checks.append(("PSNR " + " ≤ ".join(f"{v:.2f}" for v in values), ok))


def test_criterion_08_sensing(small_grid):
    g = small_grid
    det = fw.circle_detectors(g, 16, 16)
    X, Y = g.mesh()
    rng = np.random.default_rng(8)
    with criterion("8 sensing matrix", 120.0) as checks:
        L = assemble_sensing(g, det)
        b = np.exp(-(X**2 + Y**2) / (2 * 0.12**2))
        F = VectorField2.from_arrays(b, 0.5 * b)
        m = fw.simulate(F, g, det).vector()
        err = np.linalg.norm(L.apply(vectorize_source(F, g)) - m) / np.linalg.norm(m)
        checks.append((f"Λf vs simulate {err:.3f}", err <= 0.05))
        P = right_pseudo_inverse(L, 1e-8)
        worst = 0.0
        for _ in range(5):
            y = L.apply(rng.standard_normal(L.shape[1]))
            worst = max(worst, np.linalg.norm(L.apply(P.apply(y)) - y) / np.linalg.norm(y))
        checks.append((f"ΛΛ†g rel err {worst:.1e}", worst <= 1e-4))
        v = null_space_probe(L, 5)
        ratio = np.max(np.linalg.norm(L.entries @ v.T, axis=0)) / L.norm()
        checks.append((f"null probe ‖Λv‖/‖Λ‖ {ratio:.1e}", ratio <= 1e-8))


def test_criterion_09_learning():
    with criterion("9 basis learning", 120.0) as checks:
        task = contaminated_task(q=32, seed=0)
        p, r = 8, task.rank
        basis = train(task.pairs, p, r, steps=500, lr=1e-2, seed=0)
        again = train(task.pairs, p, r, steps=500, lr=1e-2, seed=0)
        checks.append(("deterministic", np.array_equal(basis.psi, again.psi)
                       and basis.trace == again.trace))
        fd = finite_difference_check(basis, task.pairs[0])
        checks.append((f"linear gradient check {fd:.1e}", fd <= 1e-6))
        rb = LearnedBasis(basis.psi, basis.psi_dual, basis.pooling)
        fd_relu = finite_difference_check(rb, task.pairs[1], relu=True)
        checks.append((f"ReLU gradient check {fd_relu:.1e}", fd_relu <= 1e-5))
        drop = 1 - basis.trace[-1] / basis.trace[0]
        checks.append((f"loss reduction {100 * drop:.1f}%", drop >= 0.9))
        v0, _ = svd_init(task.pairs, p, r)
        s0 = annihilation_score(normalized_encoder(v0), task.null_vectors)
        s1 = annihilation_score(normalized_encoder(basis.psi), task.null_vectors)
        checks.append((f"annihilation score {s0:.3f} -> {s1:.3f}", s1 <= 0.5 * s0))


def test_criterion_10_tv():
    rng = np.random.default_rng(10)
    with criterion("10 TV baseline", 10.0) as checks:
        b = rng.random((32, 32))
        same = np.array_equal(tv_denoise_array(b, TVParams(gamma=0.0)), b)
        checks.append(("γ=0 identity", same))
        values = [objective(tv_denoise_array(b, TVParams(0.1, k, 0.0)), b, 0.1) for k in range(1, 60)]
        mono = all(y <= x + 1e-12 for x, y in zip(values, values[1:]))
        checks.append(("objective non-increasing", mono))
        small = rng.random((2, 4))
        gamma = 0.15
        x = tv_denoise_array(small, TVParams(gamma, 5000, 1e-12))
        best = min((optimize.minimize(lambda v: objective(v.reshape(2, 4), small, gamma), x0,
                                      method="Powell", options={"xtol": 1e-10, "ftol": 1e-14,
                                                                "maxiter": 20000})
                    for x0 in (small.ravel(), np.full(8, small.mean()), x.ravel())),
                   key=lambda res: res.fun)
        gap = objective(x, small, gamma) - best.fun
        checks.append((f"8-pixel objective gap {gap:.1e}", gap <= 1e-3))


def test_criterion_11_metrics():
    rng = np.random.default_rng(11)
    with criterion("11 metrics", 30.0) as checks:
        a = rng.random((32, 32))
        checks.append(("ssim(a, a) == 1", ssim(a, a) == 1.0))
        f = rng.random((16, 16))
        t = rng.random((16, 16))
        hand = 20 * np.log10(256 * np.max(np.abs(f)) ** 2 / np.sqrt(np.sum((f - t) ** 2)))
        rel = abs(psnr(f, t) - hand) / abs(hand)
        checks.append((f"psnr vs hand {rel:.1e}", rel <= 1e-12))
        grid = {"beta": 4.0, "n_x": 64, "t_max": 2.0, "n_t": 32, "lambda": 1.0, "mu": 1.0}
        clean, _ = run_pipeline(PipelineConfig(grid=grid, detectors=32, times=32, seed=3))
        noisy, _ = run_pipeline(PipelineConfig(grid=grid, detectors=32, times=32, seed=3,
                                               noise_snr_db=5.0))
        checks.append((f"PSNR noisy {noisy.psnr_db:.2f} ≤ clean {clean.psnr_db:.2f}",
                       noisy.psnr_db <= clean.psnr_db))
