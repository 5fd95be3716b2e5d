"""Smooth global frames of a subbundle given pointwise (gauge-arbitrary) bases.

Pointwise eigen/SVD solvers return bases of a subspace ``V(x) ⊂ C^N`` with
an arbitrary unitary ambiguity per grid point.  Differentiating such bases
is meaningless, so we build a frame that is smooth over the torus:

1. discrete parallel transport along each coordinate line (polar projection
   of the previous frame onto the new subspace), sweeping axis by axis;
2. dividing out the holonomy of each closed line with ``expm(−(j/n) log U)``
   so the frame closes up periodically;
3. a Fourier low-pass of the transported frame followed by projection and
   polar re-orthonormalization inside the subspace.

The subbundle must be trivial along the swept loops (true for every example
used here: line bundles and bundles over tori with trivial determinant
winding behave well as long as the holonomy logarithm is continuous).
"""

from __future__ import annotations

import numpy as np
from .forms import TorusChart


def _dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


def polar_unitary(m: np.ndarray) -> np.ndarray:
    """Unitary factor of the polar decomposition, batched over leading axes."""
    u, _, vh = np.linalg.svd(m, full_matrices=False)
    return u @ vh


def _transport_step(basis_next: np.ndarray, frame_prev: np.ndarray) -> np.ndarray:
    """Closest frame in span(basis_next) to ``frame_prev``."""
    return basis_next @ polar_unitary(_dagger(basis_next) @ frame_prev)


def _sweep(basis: np.ndarray, start: np.ndarray, axis: int) -> np.ndarray:
    """Transport ``start`` (frames on the slice index 0 of ``axis``) along ``axis``.

    ``basis`` and the result have the axis of interest moved to position 0.
    """
    n = basis.shape[0]
    out = np.empty_like(basis)
    out[0] = start
    for j in range(1, n):
        out[j] = _transport_step(basis[j], out[j - 1])
    # holonomy of each closed line: frame after a full turn vs the start
    back = _transport_step(basis[0], out[n - 1])
    hol = _dagger(start) @ back  # start·hol = returned frame
    # fractional powers U^{-j/n} through the (batched) eigen-decomposition
    lam, V = np.linalg.eig(hol)
    theta = np.angle(lam)
    Vinv = np.linalg.inv(V)
    for j in range(1, n):
        phase = np.exp(-1j * theta * (j / n))
        out[j] = out[j] @ ((V * phase[..., None, :]) @ Vinv)
    return out


def _lowpass(field: np.ndarray, grid_axes: int, keep_fraction: float) -> np.ndarray:
    axes = tuple(range(grid_axes))
    spec = np.fft.fftn(field, axes=axes)
    for ax in axes:
        n = field.shape[ax]
        k = np.fft.fftfreq(n, 1.0 / n)
        mask = np.abs(k) <= keep_fraction * n
        shape = [1] * field.ndim
        shape[ax] = n
        spec = spec * mask.reshape(shape)
    return np.fft.ifftn(spec, axes=axes)


def smooth_frames(chart: TorusChart, basis: np.ndarray, keep_fraction: float = 0.25) -> np.ndarray:
    """Smooth orthonormal frame field spanning the same subspaces as ``basis``.

    ``basis`` has shape ``chart.shape + (N, h)`` with orthonormal columns.
    """
    basis = np.asarray(basis, dtype=complex)
    d = chart.dim
    h = basis.shape[-1]
    if h == 0:
        return basis.copy()
    frames = np.empty_like(basis)
    # start point
    origin = (0,) * d
    current = basis[origin]  # (N, h)
    # sweep axes in order; after axis a, frames are known on {x_{a+1..} = 0}
    known = current[None]  # stacked over the already processed axes
    for a in range(d):
        # sub-basis on the slab: axes 0..a free, axes > a fixed at 0
        idx = tuple(slice(None) if i <= a else 0 for i in range(d))
        sub = basis[idx]  # shape (n0, ..., na, N, h)
        moved = np.moveaxis(sub, a, 0)  # axis a first, then axes 0..a-1
        start = known.reshape(moved.shape[1:])
        known = _sweep(moved, start, 0)
        known = np.moveaxis(known, 0, a)
    frames = known.reshape(basis.shape)
    # spectral clean-up: low-pass, project back, re-orthonormalize
    R = _lowpass(frames, d, keep_fraction)
    W = basis @ polar_unitary(_dagger(basis) @ R)
    return W


def frame_connection(chart: TorusChart, W: np.ndarray, A=None) -> dict:
    """Induced (compressed) connection coefficients ``ω_i = W†(∂_i W + A_i W)``.

    ``A`` is an optional ``{axis: matrix field}`` for the ambient connection.
    """
    from .forms import spectral_derivative

    out = {}
    for i in range(chart.dim):
        dW = spectral_derivative(W, chart, i)
        if A is not None and i in A:
            dW = dW + A[i] @ W
        out[i] = _dagger(W) @ dW
    return out
