"""Truncated fibral de Rham complexes of product torus fibrations.

The total space is ``T^{m+n} = B × Z`` with base coordinates first and fiber
coordinates last; the horizontal distribution is spanned by the base
coordinate fields.  At every base grid point the fiber space of
``ξ``-valued vertical forms is truncated to the Fourier modes ``|k_i| ≤ K``
and each vertical form is a vector indexed by

    ((subset index · n_modes) + mode index) · r + bundle index

where the subsets of fiber coordinates are ordered by degree.  The basis
``dy_S e^{i k·y} e_a`` is orthonormal for the L² product with the
normalized fiber volume ``dy / (2π)^n`` and the identity bundle metric.

Multiplication by a coefficient function is the Galerkin convolution of its
Fourier coefficients restricted to the truncation box.  When the vertical
connection coefficients do not depend on the fiber coordinates the operator
is block-diagonal in the modes and the truncation is exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Tuple

import numpy as np

from ..connections import Connection, adjoint_connection
from ..errors import BandLimitExceeded, ChartMismatch
from ..forms import TorusChart

BAND_TOL = 1e-12


def _dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


@dataclass(frozen=True)
class TorusFibration:
    """Coordinate projection ``T^{m+n} → T^m`` (base first, fiber last)."""

    base: TorusChart
    fiber_dim: int
    fiber_grid: int = 16

    def __post_init__(self):
        if self.base.dim not in (1, 2):
            raise ValueError("base dimension must be 1 or 2")
        if self.fiber_dim not in (1, 2):
            raise ValueError("fiber dimension must be 1 or 2")

    @property
    def m(self) -> int:
        return self.base.dim

    @property
    def n(self) -> int:
        return self.fiber_dim

    @property
    def total(self) -> TorusChart:
        return TorusChart(self.base.grid + (self.fiber_grid,) * self.fiber_dim)

    @property
    def nbase(self) -> int:
        return self.base.npoints


@dataclass(frozen=True)
class FiberSpace:
    """Index bookkeeping for truncated ξ-valued vertical forms on ``T^n``."""

    n: int
    K: int
    r: int

    @cached_property
    def subsets(self) -> List[Tuple[int, ...]]:
        return [S for k in range(self.n + 1) for S in itertools.combinations(range(self.n), k)]

    @cached_property
    def modes(self) -> np.ndarray:
        rng = range(-self.K, self.K + 1)
        return np.array(list(itertools.product(rng, repeat=self.n)), dtype=int)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def block(self) -> int:
        """Size of one form-degree block (modes × bundle)."""
        return self.n_modes * self.r

    @property
    def dim(self) -> int:
        return len(self.subsets) * self.block

    def index(self, S_idx: int, mode: int, a: int) -> int:
        return (S_idx * self.n_modes + mode) * self.r + a

    @cached_property
    def degree_of(self) -> np.ndarray:
        """Form degree of every basis vector."""
        deg = np.array([len(S) for S in self.subsets])
        return np.repeat(deg, self.block)

    @cached_property
    def even(self) -> np.ndarray:
        return np.flatnonzero(self.degree_of % 2 == 0)

    @cached_property
    def odd(self) -> np.ndarray:
        return np.flatnonzero(self.degree_of % 2 == 1)

    @cached_property
    def ext_small(self) -> np.ndarray:
        """``dy_j ∧`` on the exterior algebra, shape ``(n, 2^n, 2^n)``."""
        subs = self.subsets
        pos = {S: i for i, S in enumerate(subs)}
        out = np.zeros((self.n, len(subs), len(subs)))
        for j in range(self.n):
            for i, S in enumerate(subs):
                if j in S:
                    continue
                T = tuple(sorted(S + (j,)))
                sign = (-1) ** sum(1 for s in S if s < j)
                out[j, pos[T], i] = sign
        return out

    @cached_property
    def clifford_small(self) -> np.ndarray:
        """``c(e_j) = dy_j∧ − ι_j`` on the exterior algebra."""
        e = self.ext_small
        return e - np.swapaxes(e, -1, -2)

    @cached_property
    def star_small(self) -> np.ndarray:
        """``*_Z = c(e_1) c(e_2) ⋯ c(e_n)`` on the exterior algebra."""
        out = np.eye(len(self.subsets))
        for j in range(self.n):
            out = out @ self.clifford_small[j]
        return out

    def lift_exterior(self, m: np.ndarray) -> np.ndarray:
        """Exterior-algebra operator tensored with the identity on modes × bundle."""
        return np.kron(m, np.eye(self.block))

    @cached_property
    def star(self) -> np.ndarray:
        return self.lift_exterior(self.star_small)

    @cached_property
    def wavenumber_diag(self) -> np.ndarray:
        """``i k_j`` on modes × bundle, shape ``(n, block)``."""
        return np.stack([np.repeat(1j * self.modes[:, j].astype(float), self.r) for j in range(self.n)])

    # -- grids ---------------------------------------------------------------
    def to_fiber_grid(self, vec: np.ndarray, ngrid: int) -> Dict[Tuple[int, ...], np.ndarray]:
        """Sample a truncated vertical form on the fiber grid: subset -> array (grid^n, r)."""
        ys = 2 * np.pi * np.arange(ngrid) / ngrid
        Y = np.meshgrid(*([ys] * self.n), indexing="ij")
        phases = np.stack([np.exp(1j * sum(k[i] * Y[i] for i in range(self.n))) for k in self.modes])
        out = {}
        v = np.asarray(vec).reshape(len(self.subsets), self.n_modes, self.r)
        for si, S in enumerate(self.subsets):
            out[S] = np.tensordot(phases, v[si], axes=(0, 0))
        return out


def _fiber_coefficients(values: np.ndarray, fib: TorusFibration) -> np.ndarray:
    """Fourier coefficients over the fiber axes: (nbase, fgrid^n, r, r) → normalized fft."""
    axes = tuple(range(1, 1 + fib.n))
    return np.fft.fftn(values, axes=axes) / (fib.fiber_grid ** fib.n)


def _check_band(coef: np.ndarray, fib: TorusFibration, K: int, name: str):
    ng = fib.fiber_grid
    k = np.fft.fftfreq(ng, 1.0 / ng)
    allowed = np.abs(k) <= K / 2
    mask = np.ones(coef.shape[1 : 1 + fib.n], dtype=bool)
    for ax in range(fib.n):
        shape = [1] * fib.n
        shape[ax] = ng
        mask &= allowed.reshape(shape)
    outside = np.abs(coef) * (~mask)[None, ..., None, None]
    scale = max(1.0, float(np.max(np.abs(coef))))
    if np.max(outside) > BAND_TOL * scale:
        raise BandLimitExceeded(f"{name} has fiber Fourier content beyond |k| = {K / 2:g}")


def convolution_matrices(values: np.ndarray, fib: TorusFibration, space: FiberSpace, check: str | None = None) -> np.ndarray:
    """Galerkin multiplication operators ``(nbase, block, block)`` for a field on the total grid.

    ``values`` has shape ``total.shape + (r, r)``.
    """
    nb, ng, n, r = fib.nbase, fib.fiber_grid, fib.n, space.r
    vals = np.asarray(values, dtype=complex).reshape((nb,) + (ng,) * n + (r, r))
    coef = _fiber_coefficients(vals, fib)
    if check is not None:
        _check_band(coef, fib, space.K, check)
    modes = space.modes
    diff = modes[:, None, :] - modes[None, :, :]  # (M, M, n)
    valid = np.all(np.abs(diff) <= (ng - 1) // 2, axis=-1)
    idx = tuple(np.mod(diff[..., i], ng) for i in range(n))
    blocks = coef[(slice(None),) + idx]  # (nb, M, M, r, r)
    blocks = blocks * valid[None, :, :, None, None]
    M = space.n_modes
    return blocks.transpose(0, 1, 3, 2, 4).reshape(nb, M * r, M * r)


@dataclass(frozen=True, eq=False)
class VerticalComplex:
    """Per-base-point truncated operators of a bundle with connection over a fibration."""

    fib: TorusFibration
    conn: Connection
    space: FiberSpace
    d: np.ndarray  # (nbase, N, N)
    horizontal: Tuple[np.ndarray, ...]  # per base axis: (nbase, N, N) multiplication by A_{x_i}

    @property
    def N(self) -> int:
        return self.space.dim

    @property
    def rank(self) -> int:
        return self.space.r

    @cached_property
    def d_adjoint(self) -> np.ndarray:
        return _dagger(self.d)

    @cached_property
    def dirac(self) -> np.ndarray:
        """``D = d + d*`` at every base point (Hermitian, odd)."""
        return self.d + self.d_adjoint

    @property
    def dirac_plus(self) -> np.ndarray:
        """``D⁺ : E⁺ → E⁻`` block."""
        sp = self.space
        return self.dirac[:, sp.odd[:, None], sp.even[None, :]]

    @property
    def star(self) -> np.ndarray:
        return self.space.star

    def base_derivative(self, sections: np.ndarray, axis: int) -> np.ndarray:
        """``∂/∂x_axis`` of a field of truncated vectors or frames over the base grid."""
        from ..forms import spectral_derivative

        vals = sections.reshape(self.fib.base.shape + sections.shape[1:])
        out = spectral_derivative(vals, self.fib.base, axis)
        return out.reshape(sections.shape)

    def lie_derivative(self, sections: np.ndarray, axis: int) -> np.ndarray:
        """``∇̄_{∂x_axis} σ = ∂σ + A_{x_axis} σ`` (coordinate horizontal lift)."""
        return self.base_derivative(sections, axis) + self.horizontal[axis] @ sections

    def lie_derivative_adjoint(self, sections: np.ndarray, axis: int) -> np.ndarray:
        """L²-adjoint connection ``∇̄^S_{∂x} σ = ∂σ − (A_{x})^† σ`` (matrix adjoint)."""
        return self.base_derivative(sections, axis) - _dagger(self.horizontal[axis]) @ sections


def build_vertical_complex(fib: TorusFibration, conn: Connection, K: int = 8, check_band: bool = True) -> VerticalComplex:
    """Assemble ``d^{∇}`` along the fibers and the horizontal multiplication operators."""
    if conn.chart != fib.total:
        raise ChartMismatch(f"connection chart {conn.chart.grid} is not the total space {fib.total.grid}")
    space = FiberSpace(fib.n, K, conn.rank)
    nb, N = fib.nbase, space.dim
    d = np.zeros((nb, N, N), dtype=complex)
    for j in range(fib.n):
        C = convolution_matrices(conn.A(fib.m + j), fib, space, check=f"vertical coefficient {j}" if check_band else None)
        Mj = C + np.diag(space.wavenumber_diag[j])[None]
        d += np.einsum("pq,bij->bpiqj", space.ext_small[j], Mj).reshape(nb, N, N)
    nsub = len(space.subsets)
    horiz = []
    for i in range(fib.m):
        H = convolution_matrices(conn.A(i), fib, space, check=f"horizontal coefficient {i}" if check_band else None)
        horiz.append(np.einsum("pq,bij->bpiqj", np.eye(nsub), H).reshape(nb, N, N))
    return VerticalComplex(fib, conn, space, d, tuple(horiz))


def fiber_hodge_star(vc: VerticalComplex) -> np.ndarray:
    """``*_Z`` on the truncated space (identical at every base point)."""
    return vc.space.star


def star_inverse_sign(n: int) -> int:
    """``*_Z^{-1} = ε *_Z`` with ``ε = (−1)^{n(n+1)/2}``."""
    return (-1) ** (n * (n + 1) // 2)


def l2_pairing(space: FiberSpace, alpha: np.ndarray, beta: np.ndarray, ngrid: int = 32) -> complex:
    """``⟨α, β⟩`` computed by quadrature on the fiber grid (normalized volume)."""
    ga = space.to_fiber_grid(alpha, ngrid)
    gb = space.to_fiber_grid(beta, ngrid)
    total = 0.0 + 0.0j
    for S in space.subsets:
        total += np.mean(np.sum(ga[S] * np.conj(gb[S]), axis=-1))
    return complex(total)


def adjoint_vertical_complex(vc: VerticalComplex) -> VerticalComplex:
    """Vertical complex of the adjoint connection ``∇*`` (same metric)."""
    c = vc.conn
    star = adjoint_connection(c if c.metric is not None else c.with_metric(c.metric_or_identity()))
    return build_vertical_complex(vc.fib, Connection(star.chart, star.rank, star.coeff), vc.space.K)


def interpolate_complex(vc0: VerticalComplex, vc1: VerticalComplex, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """Dirac operator and ``d`` of the straight path ``(1−t)∇₀ + t∇₁`` (affine in t)."""
    d = (1 - t) * vc0.d + t * vc1.d
    return d + _dagger(d), d


def star_intertwining_residual(vc: VerticalComplex) -> float:
    """``‖D − (−(−1)^n *_Z⁻¹ D* *_Z)‖∞`` with ``D*`` the Dirac operator of ``∇*``."""
    n = vc.fib.n
    st = vc.space.star
    st_inv = star_inverse_sign(n) * st
    other = adjoint_vertical_complex(vc)
    rhs = -((-1) ** n) * (st_inv[None] @ other.dirac @ st[None])
    return float(np.max(np.abs(vc.dirac - rhs)))


def star_lift_residual(vc: VerticalComplex, sections: np.ndarray) -> float:
    """``‖∇̄*_u σ − *_Z⁻¹ ∇̄^S_u (*_Z σ)‖∞`` over the base directions ``u``.

    ``sections`` is a field of truncated vectors or frames of shape ``(nbase, N, ...)``.
    """
    st = vc.space.star
    st_inv = star_inverse_sign(vc.fib.n) * st
    other = adjoint_vertical_complex(vc)
    out = 0.0
    for i in range(vc.fib.m):
        lhs = other.lie_derivative(sections, i)
        rhs = st_inv[None] @ vc.lie_derivative_adjoint(st[None] @ sections, i)
        out = max(out, float(np.max(np.abs(lhs - rhs))))
    return out
