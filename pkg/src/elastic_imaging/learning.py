"""Single-layer local-basis learning with closed-form gradients.

The model is the single-layer encoder-decoder with a fixed pooling pair
``(Φ, Φ̃)``::

    Z = Φᵀ ℍ_p(f) Ψ,   C = ϱ(Z) (or Z),   K(f) = unlift(Φ̃ C Ψ̃ᵀ)

and the loss is ``Σ_ℓ Σ_n w_n (K(f_ℓ) - f*_ℓ)_n²``.  Back-propagation
through the un-lifting uses that ``ℍ_p / p`` is its transpose, giving::

    G  = ℍ_p(2 w ⊙ e) / p
    ∂Ψ̃ = Gᵀ Φ̃ C
    ∂C = Φ̃ᵀ G Ψ̃,   ∂Z = ∂C ⊙ 1[Z > 0] (ReLU) or ∂C
    ∂Ψ = ℍ_p(f)ᵀ Φ ∂Z
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadShape, DimMismatch, Diverged, NearKink
from .framelets import FrameletBasis
from .hankel import lift_adjoint, lift_matrix
from .pooling import PoolingFrame
from .sensing import SensingMatrix, null_space_probe

KINK_MARGIN = 1e-4


@dataclass(frozen=True)
class TrainingPair:
    input: np.ndarray
    target: np.ndarray
    check_range: bool = True

    def __post_init__(self):
        a = np.array(self.input, dtype=np.float64).ravel()
        b = np.array(self.target, dtype=np.float64).ravel()
        if a.shape != b.shape:
            raise DimMismatch("input and target lengths differ")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("training pair contains non-finite values")
        if self.check_range and (b.min() < -1e-12 or b.max() > 1 + 1e-12):
            raise ValueError("target intensities must lie in [0, 1]")
        object.__setattr__(self, "input", a)
        object.__setattr__(self, "target", b)


@dataclass
class LearnedBasis:
    psi: np.ndarray
    psi_dual: np.ndarray
    pooling: PoolingFrame
    trace: list = field(default_factory=list)

    @property
    def pencil(self) -> int:
        return self.psi.shape[0]

    def framelet_basis(self) -> FrameletBasis:
        return FrameletBasis(self.pooling.phi, self.pooling.phi_dual, self.psi, self.psi_dual, strict=False)

    def save(self, stem) -> list[Path]:
        """``stem.json`` in the framelet basis format and ``stem_loss.csv``."""
        stem = Path(stem)
        bpath = stem.with_name(stem.name + ".json")
        self.framelet_basis().save(bpath)
        tpath = stem.with_name(stem.name + "_loss.csv")
        with open(tpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "loss"])
            for i, v in enumerate(self.trace):
                w.writerow([i, f"{v:.17g}"])
        return [bpath, tpath]


def _pool_mats(pooling: PoolingFrame):
    return pooling.phi, pooling.phi_dual


def _forward(f, psi, psi_dual, phi, phi_dual, relu):
    h = lift_matrix(f, psi.shape[0])
    z = phi.T @ (h @ psi)
    c = np.maximum(z, 0.0) if relu else z
    out = lift_adjoint(phi_dual @ c @ psi_dual.T) / psi.shape[0]
    return out, h, z, c


def apply_K(f, basis: LearnedBasis, relu: bool = False) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64).ravel()
    if f.size != basis.pooling.q:
        raise DimMismatch(f"signal length {f.size} does not match Q = {basis.pooling.q}")
    phi, phi_dual = _pool_mats(basis.pooling)
    return _forward(f, basis.psi, basis.psi_dual, phi, phi_dual, relu)[0]


def loss_and_grad(pairs, psi, psi_dual, pooling: PoolingFrame, relu: bool,
                  weights=None, need_grad: bool = True):
    """Total loss and its gradients with respect to ``(Ψ, Ψ̃)``."""
    phi, phi_dual = _pool_mats(pooling)
    p = psi.shape[0]
    loss = 0.0
    g_psi = np.zeros_like(psi)
    g_dual = np.zeros_like(psi_dual)
    for pair in pairs:
        out, h, z, c = _forward(pair.input, psi, psi_dual, phi, phi_dual, relu)
        e = out - pair.target
        w = 1.0 if weights is None else weights
        loss += float(np.sum(w * e * e))
        if not need_grad:
            continue
        g = lift_matrix(2.0 * w * e, p) / p
        g_dual += g.T @ (phi_dual @ c)
        dz = phi_dual.T @ g @ psi_dual
        if relu:
            dz = dz * (z > 0)
        g_psi += h.T @ (phi @ dz)
    return loss, g_psi, g_dual


def svd_init(pairs, p: int, r: int):
    """Leading ``r`` right singular vectors of the stacked lifted targets."""
    stacked = np.vstack([lift_matrix(pair.target, p) for pair in pairs])
    _, _, vt = np.linalg.svd(stacked, full_matrices=False)
    v = vt[:r].T.copy()
    return v, v.copy()


def train(pairs, p: int, r: int, relu: bool = False, steps: int = 500, lr: float = 1e-2,
          seed: int = 0, init: str = "svd", weights=None, pooling: PoolingFrame | None = None,
          max_halvings: int = 40) -> LearnedBasis:
    """Gradient descent on ``(Ψ, Ψ̃)`` with backtracking from ``lr`` at every step.

    A step is accepted only if it lowers the loss; otherwise the step size is
    halved (up to ``max_halvings`` times, after which training stops).  The
    trace records the loss after every step, so it is non-increasing.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise BadShape("training needs at least two pairs")
    q = pairs[0].input.size
    if any(pair.input.size != q for pair in pairs):
        raise BadShape("all training signals must share one length")
    if not 1 <= p < q or not 1 <= r <= p:
        raise BadShape(f"need 1 <= r <= p < Q, got p={p}, r={r}, Q={q}")
    if lr < 0:
        raise ValueError("lr must be non-negative")
    pooling = PoolingFrame("identity", q) if pooling is None else pooling
    if init == "svd":
        psi, psi_dual = svd_init(pairs, p, r)
    elif init == "random":
        rng = np.random.default_rng(seed)
        psi = rng.standard_normal((p, r)) / np.sqrt(p)
        psi_dual = rng.standard_normal((p, r)) / np.sqrt(p)
    else:
        raise ValueError(f"unknown init {init!r}")
    loss, g_psi, g_dual = loss_and_grad(pairs, psi, psi_dual, pooling, relu, weights)
    initial = loss
    trace = [loss]
    for _ in range(steps):
        if lr == 0 or not np.isfinite(loss):
            trace.append(loss)
            continue
        step = lr
        accepted = False
        for _ in range(max_halvings):
            cand_psi = psi - step * g_psi
            cand_dual = psi_dual - step * g_dual
            cand, _, _ = loss_and_grad(pairs, cand_psi, cand_dual, pooling, relu, weights, need_grad=False)
            if np.isfinite(cand) and cand < loss:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            trace.append(loss)
            continue
        psi, psi_dual = cand_psi, cand_dual
        loss, g_psi, g_dual = loss_and_grad(pairs, psi, psi_dual, pooling, relu, weights)
        if not np.isfinite(loss) or loss > 1e6 * max(initial, 1e-300):
            raise Diverged(f"loss {loss:.3g} exceeds 1e6 times the initial {initial:.3g}")
        trace.append(loss)
    return LearnedBasis(psi, psi_dual, pooling, trace)


def finite_difference_check(basis: LearnedBasis, pair: TrainingPair, relu: bool = False,
                            step: float = 1e-6, weights=None) -> float:
    """Max deviation between analytic and central-difference gradients,
    relative to the largest analytic gradient entry."""
    psi = np.array(basis.psi, dtype=np.float64)
    psi_dual = np.array(basis.psi_dual, dtype=np.float64)
    phi, phi_dual = _pool_mats(basis.pooling)
    if relu:
        _, _, z, _ = _forward(pair.input, psi, psi_dual, phi, phi_dual, True)
        if np.min(np.abs(z)) < KINK_MARGIN:
            raise NearKink("a coefficient sits within the kink margin of zero")
    _, g_psi, g_dual = loss_and_grad([pair], psi, psi_dual, basis.pooling, relu, weights)
    worst = 0.0
    scale = max(np.abs(g_psi).max(), np.abs(g_dual).max(), 1e-300)
    for which, grad in ((0, g_psi), (1, g_dual)):
        for idx in np.ndindex(grad.shape):
            params = [psi.copy(), psi_dual.copy()]
            params[which][idx] += step
            up = loss_and_grad([pair], *params, basis.pooling, relu, weights, need_grad=False)[0]
            params[which][idx] -= 2 * step
            dn = loss_and_grad([pair], *params, basis.pooling, relu, weights, need_grad=False)[0]
            fd = (up - dn) / (2 * step)
            worst = max(worst, abs(fd - grad[idx]) / scale)
    return worst


# ---------------------------------------------------------------------------
# synthetic contaminated task
# ---------------------------------------------------------------------------

def real_fourier_basis(q: int) -> tuple[np.ndarray, list]:
    """Orthonormal real DFT basis (rows) and the frequency bin of each row."""
    n = np.arange(q)
    rows, bins = [np.ones(q) / np.sqrt(q)], [0]
    for k in range(1, q // 2 + 1):
        c = np.cos(2 * np.pi * k * n / q)
        rows.append(c / np.linalg.norm(c))
        bins.append(k)
        if 2 * k != q:
            s = np.sin(2 * np.pi * k * n / q)
            rows.append(s / np.linalg.norm(s))
            bins.append(k)
    return np.array(rows), bins


@dataclass(frozen=True)
class SyntheticTask:
    pairs: list
    sensing: SensingMatrix
    null_vectors: np.ndarray
    rank: int


def contaminated_task(q: int = 32, n_pairs: int = 8, signal_bins=(1, 3), blind_bins=(5, 7),
                      contamination: float = 0.2, seed: int = 0) -> SyntheticTask:
    """Targets ``0.5 + Σ a cos + b sin`` on ``signal_bins`` (Hankel rank
    ``1 + 2·len(signal_bins)``) in ``[0, 1]``; inputs add a random mix of the
    null space of a sensing matrix that measures every DFT bin except
    ``blind_bins``."""
    rng = np.random.default_rng(seed)
    basis, bins = real_fourier_basis(q)
    blind = [i for i, b in enumerate(bins) if b in blind_bins]
    seen = [i for i, b in enumerate(bins) if b not in blind_bins]
    sensing = SensingMatrix.from_array(basis[seen])
    null = null_space_probe(sensing, len(blind))
    n = np.arange(q)
    amp = 0.45 / (2 * len(signal_bins))
    pairs = []
    for _ in range(n_pairs):
        t = np.full(q, 0.5)
        for k in signal_bins:
            a, b = rng.uniform(-1, 1, 2) * amp
            t += a * np.cos(2 * np.pi * k * n / q) + b * np.sin(2 * np.pi * k * n / q)
        noise = rng.standard_normal(null.shape[0]) @ null
        noise *= contamination * np.sqrt(q) / max(np.linalg.norm(noise), 1e-300)
        pairs.append(TrainingPair(t + noise, t))
    return SyntheticTask(pairs, sensing, null, 1 + 2 * len(signal_bins))


def normalized_encoder(psi) -> np.ndarray:
    """``Ψ'`` (flipped columns) scaled to unit spectral norm, for annihilation scores."""
    psi = np.asarray(psi, dtype=np.float64)
    n = np.linalg.norm(psi, 2)
    return psi[::-1] / n if n > 0 else psi[::-1].copy()
