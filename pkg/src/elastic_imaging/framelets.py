"""Convolutional framelets: coefficients, reconstruction, ReLU, multi-layer stacks.

A basis holds the non-local pair ``(Φ, Φ̃)`` (``Q x S`` each, frame condition
``Φ̃ Φᵀ = I_Q``) and the local pair ``(Ψ, Ψ̃)`` (``p x r`` each, ``Ψ Ψ̃ᵀ`` a
projection).  With the lifting convention of :mod:`hankel`::

    C = Φᵀ ℍ_p(g) Ψ                  (encoder)
    f = unlift(Φ̃ C Ψ̃ᵀ)               (decoder)

The un-lifted forms use explicit circular convolutions: each encoder column
is ``g ⊛ ψ'`` (flipped filter, shifted by ``p - 1``), each decoder channel
is ``(Φ̃C)[:, l] ⊛ ψ̃_l / p``, i.e. the decoder filter ``ζ(Ψ̃) = Ψ̃ / p``
carries the ``1/p`` factor.

Multi-channel layers lift every input channel and concatenate
(channel-major), so a layer's encoder filter has shape
``(p, in_channels, out_channels)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChannelMismatch, DimMismatch, FrameConditionViolation, IndexOutOfRange
from .hankel import circular_convolve, lift_adjoint, lift_matrix

FRAME_TOL = 1e-12
PROJECTION_TOL = 1e-10


@dataclass(frozen=True)
class FrameletBasis:
    phi: np.ndarray
    phi_dual: np.ndarray
    psi: np.ndarray
    psi_dual: np.ndarray
    strict: bool = True

    def __post_init__(self):
        arrs = [np.array(a, dtype=np.float64) for a in (self.phi, self.phi_dual, self.psi, self.psi_dual)]
        phi, phi_dual, psi, psi_dual = arrs
        if phi.shape != phi_dual.shape or psi.shape != psi_dual.shape:
            raise DimMismatch("Φ/Φ̃ and Ψ/Ψ̃ must have matching shapes")
        if phi.ndim != 2 or psi.ndim != 2 or phi.shape[0] > phi.shape[1]:
            raise DimMismatch("Φ must be Q x S with S >= Q, Ψ must be p x r")
        if self.strict:
            q = phi.shape[0]
            if np.max(np.abs(phi_dual @ phi.T - np.eye(q))) > FRAME_TOL * max(1.0, q):
                raise FrameConditionViolation("Φ̃ Φᵀ differs from the identity")
            proj = psi @ psi_dual.T
            if np.max(np.abs(proj @ proj - proj)) > PROJECTION_TOL * max(1.0, np.abs(proj).max()):
                raise FrameConditionViolation("Ψ Ψ̃ᵀ is not idempotent")
        for name, a in zip(("phi", "phi_dual", "psi", "psi_dual"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def q(self) -> int:
        return self.phi.shape[0]

    @property
    def s(self) -> int:
        return self.phi.shape[1]

    @property
    def pencil(self) -> int:
        return self.psi.shape[0]

    @property
    def rank_budget(self) -> int:
        return self.psi.shape[1]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("phi", "phi_dual", "psi", "psi_dual")}

    @classmethod
    def from_dict(cls, d, strict: bool = True) -> "FrameletBasis":
        return cls(*(np.asarray(d[k], dtype=np.float64) for k in ("phi", "phi_dual", "psi", "psi_dual")),
                   strict=strict)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path, strict: bool = True) -> "FrameletBasis":
        return cls.from_dict(json.loads(Path(path).read_text()), strict=strict)


def svd_basis(f, p: int, r: int | None = None, tol: float = 1e-8) -> FrameletBasis:
    """``Φ = Φ̃ = I`` and ``Ψ = Ψ̃ =`` leading right singular vectors of ``ℍ_p(f)``.

    ``r=None`` keeps every singular value above ``tol · σ_max``.
    """
    f = np.asarray(f, dtype=np.float64)
    _, s, vt = np.linalg.svd(lift_matrix(f, p), full_matrices=False)
    if r is None:
        r = max(1, int(np.sum(s > tol * s[0]))) if s[0] > 0 else 1
    v = vt[:r].T
    eye = np.eye(f.size)
    return FrameletBasis(eye, eye, v, v)


def _check_signal(g, basis: FrameletBasis) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 1 or g.size != basis.q:
        raise DimMismatch(f"signal length {g.shape} does not match Q = {basis.q}")
    return g


@dataclass(frozen=True)
class FrameletCoefficients:
    values: np.ndarray
    relu: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("coefficients contain non-finite values")
        object.__setattr__(self, "values", v)


def coefficients(g, basis: FrameletBasis) -> FrameletCoefficients:
    """``C = Φᵀ ℍ_p(g) Ψ``."""
    g = _check_signal(g, basis)
    return FrameletCoefficients(basis.phi.T @ (lift_matrix(g, basis.pencil) @ basis.psi))


def encoder_filters(psi) -> np.ndarray:
    """``Ψ'``: each column of ``Ψ`` flipped."""
    return np.asarray(psi)[::-1].copy()


def correlate_columns(g, psi) -> np.ndarray:
    """``g ⊛ Ψ'`` per column, shifted by ``p - 1`` so row ``q`` starts at ``g[q]``."""
    g = np.asarray(g)
    psi = np.asarray(psi)
    p = psi.shape[0]
    flipped = encoder_filters(psi)
    cols = [np.roll(circular_convolve(g, flipped[:, l]), -(p - 1)) for l in range(psi.shape[1])]
    return np.stack(cols, axis=-1)


def coefficients_unlifted(g, basis: FrameletBasis) -> FrameletCoefficients:
    """``C = Φᵀ (g ⊛ Ψ')`` without forming the Hankel matrix."""
    g = _check_signal(g, basis)
    return FrameletCoefficients(basis.phi.T @ correlate_columns(g, basis.psi))


def _coeff_values(c) -> np.ndarray:
    return c.values if isinstance(c, FrameletCoefficients) else np.asarray(c, dtype=np.float64)


def reconstruct(c, basis: FrameletBasis) -> np.ndarray:
    """``unlift(Φ̃ C Ψ̃ᵀ)``."""
    c = _coeff_values(c)
    if c.shape != (basis.s, basis.rank_budget):
        raise DimMismatch(f"coefficients {c.shape} do not match ({basis.s}, {basis.rank_budget})")
    return lift_adjoint(basis.phi_dual @ c @ basis.psi_dual.T) / basis.pencil


def decoder_filters(psi_dual) -> np.ndarray:
    """``ζ(Ψ̃) = Ψ̃ / p``."""
    psi_dual = np.asarray(psi_dual)
    return psi_dual / psi_dual.shape[0]


def reconstruct_unlifted(c, basis: FrameletBasis) -> np.ndarray:
    """``Σ_l (Φ̃ C)[:, l] ⊛ ζ(Ψ̃)[:, l]``."""
    c = _coeff_values(c)
    x = basis.phi_dual @ c
    zeta = decoder_filters(basis.psi_dual)
    return sum(circular_convolve(x[:, l], zeta[:, l]) for l in range(zeta.shape[1]))


def low_rank_projection(f, basis: FrameletBasis) -> np.ndarray:
    """``unlift(ℍ_p(f) Ψ Ψ̃ᵀ)``: what a round trip returns for out-of-budget ``f``."""
    f = _check_signal(f, basis)
    return lift_adjoint(lift_matrix(f, basis.pencil) @ basis.psi @ basis.psi_dual.T) / basis.pencil


def basis_matrices(basis: FrameletBasis, k: int, l: int) -> np.ndarray:
    """Rank-one ``B̃^{kl} = φ̃_k ψ̃_lᵀ`` (zero-based ``k < S``, ``l < r``)."""
    if not (0 <= k < basis.s and 0 <= l < basis.rank_budget):
        raise IndexOutOfRange(f"(k, l) = ({k}, {l}) outside ({basis.s}, {basis.rank_budget})")
    return np.outer(basis.phi_dual[:, k], basis.psi_dual[:, l])


def relu_coefficients(g, basis: FrameletBasis) -> FrameletCoefficients:
    """``ϱ(Φᵀ (g ⊛ Ψ'))``, entries in the conic space (all ``>= 0``)."""
    return FrameletCoefficients(np.maximum(coefficients(g, basis).values, 0.0), relu=True)


# ---------------------------------------------------------------------------
# multi-layer stacks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerSpec:
    """One encoder/decoder stage; filters are ``(filter_len, in_channels, out_channels)``."""

    encoder_filters: np.ndarray
    decoder_filters: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        enc = np.array(self.encoder_filters, dtype=np.float64)
        dec = np.array(self.decoder_filters, dtype=np.float64)
        if enc.ndim == 2:
            enc = enc[:, None, :]
        if dec.ndim == 2:
            dec = dec[:, None, :]
        if enc.ndim != 3 or enc.shape != dec.shape:
            raise ChannelMismatch(f"encoder {enc.shape} and decoder {dec.shape} filters must agree")
        object.__setattr__(self, "encoder_filters", enc)
        object.__setattr__(self, "decoder_filters", dec)

    @property
    def filter_len(self) -> int:
        return self.encoder_filters.shape[0]

    @property
    def in_channels(self) -> int:
        return self.encoder_filters.shape[1]

    @property
    def out_channels(self) -> int:
        return self.encoder_filters.shape[2]


def multichannel_lift(x, p: int) -> np.ndarray:
    """``[ℍ_p(x_1) … ℍ_p(x_C)]`` for ``x`` of shape ``(Q, C)``; shape ``(Q, C·p)``."""
    x = np.asarray(x)
    blocks = [lift_matrix(x[:, c], p) for c in range(x.shape[1])]
    return np.concatenate(blocks, axis=1)


def _flat(filters) -> np.ndarray:
    # (p, C_in, C_out) -> (C_in·p, C_out), channel-major rows
    p, cin, cout = filters.shape
    return np.transpose(filters, (1, 0, 2)).reshape(cin * p, cout)


def layer_encode(x, layer: LayerSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != layer.in_channels:
        raise ChannelMismatch(f"{x.shape[1]} channels given, layer expects {layer.in_channels}")
    return multichannel_lift(x, layer.filter_len) @ _flat(layer.encoder_filters)


def layer_decode(z, layer: LayerSpec) -> np.ndarray:
    """Multi-channel un-lifting: channel ``c`` is ``unlift(Z Ψ̃_cᵀ)``."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[1] != layer.out_channels:
        raise ChannelMismatch(f"{z.shape[1]} channels given, layer produces {layer.out_channels}")
    p = layer.filter_len
    out = [lift_adjoint(z @ layer.decoder_filters[:, c, :].T) / p for c in range(layer.in_channels)]
    return np.stack(out, axis=1)


def _pool_pair(pool, q: int):
    if pool is None:
        return None, None
    phi = np.asarray(getattr(pool, "phi", pool[0] if isinstance(pool, tuple) else None))
    phi_dual = np.asarray(getattr(pool, "phi_dual", pool[1] if isinstance(pool, tuple) else None))
    if phi.shape[0] != q:
        raise DimMismatch(f"pooling built for Q = {phi.shape[0]}, signal has {q}")
    return phi, phi_dual


def multilayer_forward(g, layers, poolings=None, relu: bool = True) -> np.ndarray:
    """Encoder (conv, pooling ``Φᵀ``, ReLU) through all layers, then the mirrored decoder.

    ``poolings`` holds one entry per layer: ``None`` (identity), a
    ``(Φ, Φ̃)`` tuple or any object with ``phi``/``phi_dual`` attributes.
    """
    layers = list(layers)
    poolings = [None] * len(layers) if poolings is None else list(poolings)
    if len(poolings) != len(layers):
        raise ChannelMismatch("one pooling entry per layer is required")
    x = np.asarray(g, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    for a, b in zip(layers, layers[1:]):
        if a.out_channels != b.in_channels:
            raise ChannelMismatch(f"layer emits {a.out_channels} channels, next expects {b.in_channels}")
    pools = []
    for layer, pool in zip(layers, poolings):
        z = layer_encode(x, layer)
        phi, phi_dual = _pool_pair(pool, z.shape[0])
        pools.append(phi_dual)
        if phi is not None:
            z = phi.T @ z
        x = np.maximum(z, 0.0) if relu else z
    for layer, phi_dual in zip(reversed(layers), reversed(pools)):
        if phi_dual is not None:
            x = phi_dual @ x
        x = layer_decode(x, layer)
    return x[:, 0] if squeeze else x


@dataclass(frozen=True)
class CascadedFilters:
    encoder: np.ndarray          # (p_eff, C_in, C_out)
    decoder: np.ndarray          # (p_eff, C_in, C_out)
    decoder_scale: float         # product of 1/p over the layers


def _chain(a, b) -> np.ndarray:
    # eff[m, i, k] = Σ_c Σ_{j + l = m} a[j, i, c] b[l, c, k]
    pa, pb = a.shape[0], b.shape[0]
    out = np.zeros((pa + pb - 1, a.shape[1], b.shape[2]))
    for j in range(pa):
        for l in range(pb):
            out[j + l] += a[j] @ b[l]
    return out


def cascade_filters(layers) -> CascadedFilters:
    """Collapse a linear stack (identity poolings, no ReLU) into one layer.

    Encoder taps compose by polynomial multiplication summed over the
    intermediate channels; the decoder composes the same way and the
    per-layer ``1/p`` factors multiply into ``decoder_scale``.
    """
    layers = list(layers)
    if not layers:
        raise ChannelMismatch("empty layer list")
    enc = layers[0].encoder_filters
    dec = layers[0].decoder_filters
    scale = 1.0 / layers[0].filter_len
    for prev, layer in zip(layers, layers[1:]):
        if prev.out_channels != layer.in_channels:
            raise ChannelMismatch(f"layer emits {prev.out_channels} channels, next expects {layer.in_channels}")
        enc = _chain(enc, layer.encoder_filters)
        dec = _chain(dec, layer.decoder_filters)
        scale /= layer.filter_len
    return CascadedFilters(enc, dec, scale)


def apply_cascade(g, cascade: CascadedFilters) -> np.ndarray:
    """Single-layer encode/decode with cascaded filters."""
    x = np.asarray(g, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    p = cascade.encoder.shape[0]
    if p >= x.shape[0]:
        raise DimMismatch(f"cascaded filter length {p} must be shorter than the signal")
    z = multichannel_lift(x, p) @ _flat(cascade.encoder)
    out = [lift_adjoint(z @ cascade.decoder[:, c, :].T) * cascade.decoder_scale
           for c in range(cascade.decoder.shape[1])]
    y = np.stack(out, axis=1)
    return y[:, 0] if squeeze else y
