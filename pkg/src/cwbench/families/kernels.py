"""Harmonic kernels, spectral subbundles and Gauss–Manin connections.

Frames are stored embedded in the full truncated space: an array of shape
``(nbase, N, h)`` whose columns are orthonormal vertical forms of one parity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..connections import Connection
from ..errors import DimensionJump, NoSpectralGap
from ..forms import Form
from ..frames import polar_unitary, smooth_frames
from .vertical import FiberSpace, TorusFibration, VerticalComplex, build_vertical_complex

KERNEL_TOL = 1e-8


def _dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


@dataclass(frozen=True, eq=False)
class FramePair:
    """Orthonormal frames of a graded finite-rank subbundle (even part, odd part)."""

    plus: np.ndarray
    minus: np.ndarray

    @property
    def dims(self) -> Tuple[int, int]:
        return self.plus.shape[-1], self.minus.shape[-1]

    def part(self, sign: str) -> np.ndarray:
        return self.plus if sign == "+" else self.minus

    def orthonormality_residual(self) -> float:
        out = 0.0
        for W in (self.plus, self.minus):
            if W.shape[-1]:
                G = _dagger(W) @ W
                out = max(out, float(np.max(np.abs(G - np.eye(W.shape[-1])))))
        return out


def _embed(space: FiberSpace, rows: np.ndarray, sub: np.ndarray) -> np.ndarray:
    nb, _, h = sub.shape
    out = np.zeros((nb, space.dim, h), dtype=complex)
    out[:, rows, :] = sub
    return out


def _constant_count(counts: np.ndarray, what: str) -> int:
    if counts.min() != counts.max():
        raise DimensionJump(f"{what} dimension varies over the base ({counts.min()}..{counts.max()})")
    return int(counts.flat[0])


def kernel_bases(dirac_plus: np.ndarray, space: FiberSpace, tol: float = KERNEL_TOL) -> FramePair:
    """Pointwise (gauge-arbitrary) orthonormal bases of ``Ker D⁺`` and ``Ker D⁻``."""
    u, s, vh = np.linalg.svd(dirac_plus)
    scale = 1.0 + s[:, :1]
    small = s < tol * scale
    h = _constant_count(small.sum(axis=1), "kernel")
    # D⁺ is square here, so Ker D⁻ = Ker (D⁺)† has the same dimension
    ker_plus = _dagger(vh)[:, :, s.shape[1] - h :] if h else np.zeros(vh.shape[:2] + (0,), dtype=complex)
    ker_minus = u[:, :, s.shape[1] - h :] if h else np.zeros(u.shape[:2] + (0,), dtype=complex)
    return FramePair(_embed(space, space.even, ker_plus), _embed(space, space.odd, ker_minus))


def smooth_pair(base, pair: FramePair) -> FramePair:
    """Gauge-fix pointwise bases into smooth frames over the base chart."""
    out = []
    for W in (pair.plus, pair.minus):
        if W.shape[-1] == 0:
            out.append(W)
            continue
        Ws = smooth_frames(base, W.reshape(base.shape + W.shape[1:]))
        out.append(Ws.reshape(W.shape))
    return FramePair(*out)


def harmonic_kernels(vc: VerticalComplex, tol: float = KERNEL_TOL) -> FramePair:
    """Smooth orthonormal frames of the fibral harmonic forms ``H⁺`` and ``H⁻``."""
    return smooth_pair(vc.fib.base, kernel_bases(vc.dirac_plus, vc.space, tol))


def spectral_bases(dirac: np.ndarray, space: FiberSpace, cutoff: float, margin: float = 1e-3) -> FramePair:
    """Pointwise bases of the span of eigenvectors with ``|λ| < cutoff``, split by parity."""
    out = []
    for rows in (space.even, space.odd):
        Dp = dirac[:, :, rows]
        sq = _dagger(Dp) @ Dp  # D² restricted to this parity
        w, V = np.linalg.eigh(sq)
        lam = np.sqrt(np.maximum(w, 0.0))
        if np.min(np.abs(lam - cutoff)) < margin:
            raise NoSpectralGap(f"an eigenvalue lies within {margin:g} of the cutoff {cutoff:g}")
        h = _constant_count((lam < cutoff).sum(axis=1), "spectral subspace")
        out.append(_embed(space, rows, V[:, :, :h]))
    return FramePair(*out)


def mf_subbundle(vc: VerticalComplex, cutoff: float, margin: float = 1e-3) -> FramePair:
    """Smooth frames of the finite-rank ``D``-invariant subbundle ``{|λ| < cutoff}``."""
    return smooth_pair(vc.fib.base, spectral_bases(vc.dirac, vc.space, cutoff, margin))


def dirac_abs_spectrum(dirac: np.ndarray) -> np.ndarray:
    return np.abs(np.linalg.eigvalsh(dirac))


def choose_cutoff(spectra: Sequence[np.ndarray], min_gap: float = 0.05, upper: Optional[float] = None) -> float:
    """Midpoint of the lowest gap of width ``min_gap`` in the union of ``|λ|`` samples.

    The union is taken over every sampled base point and path parameter, so no
    sampled eigenvalue branch crosses the returned cutoff.
    """
    vals = np.sort(np.concatenate([np.ravel(s) for s in spectra]))
    if upper is not None:
        vals = vals[vals <= upper]
    gaps = np.diff(vals)
    idx = np.flatnonzero(gaps >= min_gap)
    if idx.size == 0:
        raise NoSpectralGap("no spectral gap of the requested width")
    i = idx[0]
    return float(0.5 * (vals[i] + vals[i + 1]))


# ---------------------------------------------------------------------------
# Gauss–Manin connections
# ---------------------------------------------------------------------------


def compressed_connection(vc: VerticalComplex, W: np.ndarray, adjoint: bool = False) -> Connection:
    """``W†∇̄W`` (or ``W†∇̄^S W``) read as a connection on the base in the frame ``W``."""
    base = vc.fib.base
    h = W.shape[-1]
    comps = {}
    for i in range(base.dim):
        dW = vc.lie_derivative_adjoint(W, i) if adjoint else vc.lie_derivative(W, i)
        comps[(i,)] = (_dagger(W) @ dW).reshape(base.shape + (h, h))
    return Connection(base, h, Form(base, h, comps))


def gauss_manin(vc: VerticalComplex, frames: FramePair) -> Tuple[Connection, Connection]:
    """Gauss–Manin connections on ``H⁺`` and ``H⁻`` in the given frames."""
    return compressed_connection(vc, frames.plus), compressed_connection(vc, frames.minus)


def gauss_manin_adjoint(vc: VerticalComplex, frames: FramePair) -> Tuple[Connection, Connection]:
    """Compressions ``P∇̄^S P`` on ``H⁺`` and ``H⁻``."""
    return compressed_connection(vc, frames.plus, True), compressed_connection(vc, frames.minus, True)


@dataclass(frozen=True, eq=False)
class FlatDirectImage:
    """Fibral cohomology bundles with their Gauss–Manin connections."""

    vc: VerticalComplex
    frames: FramePair
    plus: Optional[Connection]
    minus: Optional[Connection]

    @property
    def dims(self) -> Tuple[int, int]:
        return self.frames.dims

    def as_list(self) -> List[Tuple[Connection, int]]:
        out = []
        if self.plus is not None:
            out.append((self.plus, +1))
        if self.minus is not None:
            out.append((self.minus, -1))
        return out


def direct_image_flat(fib: TorusFibration, conn: Connection, K: int = 8, frames: FramePair | None = None) -> FlatDirectImage:
    """``π_!(E, ∇)``: harmonic frames and Gauss–Manin connections of both parities."""
    vc = build_vertical_complex(fib, conn, K)
    fr = frames if frames is not None else harmonic_kernels(vc)
    hp, hm = fr.dims
    plus = compressed_connection(vc, fr.plus) if hp else None
    minus = compressed_connection(vc, fr.minus) if hm else None
    return FlatDirectImage(vc, fr, plus, minus)


# ---------------------------------------------------------------------------
# Transport of subspaces along a parameter
# ---------------------------------------------------------------------------


def transport(frame: np.ndarray, bases: Sequence[np.ndarray]) -> np.ndarray:
    """Discrete parallel transport of ``frame`` through the subspaces spanned by ``bases``."""
    W = frame
    for B in bases:
        W = B @ polar_unitary(_dagger(B) @ W)
    return W
