"""Fourier decomposition of behavior sequences with learnable mixing gates.

Sequences are split along the length axis into low- and high-frequency
components via a dense unitary DFT. The "c lowest" frequencies are taken
over the conjugate-symmetric half-spectrum (bin k is kept iff k < c or
L - k < c), so the kept set is closed under mirroring and both components
of a real signal stay exactly real. The resulting band-pass is a real
symmetric projection matrix applied per embedding column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .numerics import Tensor


@dataclass(frozen=True)
class DftBasis:
    """Unitary DFT matrix as a real/imaginary pair; immutable and shareable."""

    n: int
    real_part: np.ndarray
    imag_part: np.ndarray

    @property
    def complex_matrix(self):
        return self.real_part + 1j * self.imag_part


@dataclass(frozen=True)
class CutoffConfig:
    """Number of low-frequency bins kept by the low-pass filter."""

    c: int

    def __post_init__(self):
        if self.c < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.c}")


@dataclass
class FrequencyGates:
    """Sigmoid mixing weights, one scalar per batch row (shape [B, 1, 1]).

    alpha/beta weight the video domain's low/high components, gamma/delta
    the live domain's.
    """

    alpha: Tensor
    beta: Tensor
    gamma: Tensor
    delta: Tensor

    def means(self):
        return {
            "alpha": float(self.alpha.data.mean()),
            "beta": float(self.beta.data.mean()),
            "gamma": float(self.gamma.data.mean()),
            "delta": float(self.delta.data.mean()),
        }


def build_dft_basis(n):
    """Unitary n x n DFT matrix, entry (j, k) = exp(2*pi*i*j*k/n)/sqrt(n)."""
    if n < 1:
        raise ValueError(f"basis size must be >= 1, got {n}")
    j = np.arange(n)
    phase = 2.0 * np.pi * np.outer(j, j) / n
    scale = 1.0 / np.sqrt(n)
    return DftBasis(n=n, real_part=np.cos(phase) * scale, imag_part=np.sin(phase) * scale)


def kept_bins(n, c):
    """Frequency bins retained by the low-pass: mirror-closed lowest c."""
    k = np.arange(n)
    return (k < c) | ((n - k) < c)


_PROJ_CACHE = {}


def low_pass_matrix(n, c):
    """Real symmetric projection onto the c lowest (mirror-completed) bins."""
    key = (n, c)
    cached = _PROJ_CACHE.get(key)
    if cached is not None:
        return cached
    basis = build_dft_basis(n)
    f = basis.complex_matrix
    d = kept_bins(n, c).astype(np.float64)
    proj = f.conj().T @ (d[:, None] * f)
    residue = np.abs(proj.imag).max()
    if residue > 1e-10:
        raise AssertionError(f"projection has imaginary residue {residue:.2e}")
    proj = np.ascontiguousarray(proj.real)
    _PROJ_CACHE[key] = proj
    return proj


def _cutoff(c):
    return c.c if isinstance(c, CutoffConfig) else int(c)


def low_pass(x, c):
    """Low-frequency component along the length axis of [..., L, D]."""
    cc = _cutoff(c)
    length = x.shape[-2]
    if cc > length:
        raise ValueError(f"cutoff {cc} exceeds sequence length {length}")
    return nm.matmul(Tensor(low_pass_matrix(length, cc)), x)


def high_pass(x, c):
    """Complement of low_pass; exactly x - low_pass(x, c)."""
    return nm.add(x, nm.mul(low_pass(x, c), -1.0))


def frequency_mix(x, low_gate, high_gate, c):
    """low_gate * Low[x] + high_gate * High[x] with gradients to all three."""
    return nm.add(
        nm.mul(low_pass(x, c), low_gate),
        nm.mul(high_pass(x, c), high_gate),
    )


GATE_NAMES = ("alpha", "beta", "gamma", "delta")


def add_gate_params(params, d_video, d_live, rng, hidden=(32, 16)):
    """Register the four independent per-gate MLPs (scalar outputs)."""
    dims_by_gate = {
        "alpha": (d_video,) + tuple(hidden) + (1,),
        "beta": (d_video,) + tuple(hidden) + (1,),
        "gamma": (d_live,) + tuple(hidden) + (1,),
        "delta": (d_live,) + tuple(hidden) + (1,),
    }
    for name in GATE_NAMES:
        nm.add_mlp(params, f"gate.{name}", dims_by_gate[name], rng)


def compute_gates(params, v_video, v_live, video_mask=None, live_mask=None):
    """Four sigmoid gates from the mean-pooled sequence of each domain.

    alpha/beta come from the video sequence, gamma/delta from the live
    sequence. Accepts [L, D] or [B, L, D]; gates broadcast as [B, 1, 1].
    """
    batched = len(v_video.shape) == 3
    if not batched:
        v_video = nm.reshape(v_video, (1,) + tuple(v_video.shape))
        v_live = nm.reshape(v_live, (1,) + tuple(v_live.shape))

    def pooled(seq, mask):
        if mask is None:
            return nm.mean_pool(seq)
        return nm.masked_mean_rows(seq, mask)

    pool_video = pooled(v_video, video_mask)
    pool_live = pooled(v_live, live_mask)
    gates = {}
    for name, pool in zip(GATE_NAMES, (pool_video, pool_video, pool_live, pool_live)):
        g = nm.sigmoid(nm.mlp_forward(params, f"gate.{name}", pool))  # [B, 1]
        gates[name] = nm.reshape(g, (g.shape[0], 1, 1))
    return FrequencyGates(**gates)
