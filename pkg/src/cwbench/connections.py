"""Connections on trivialized bundles over tori.

A connection is ``∇ = d + A`` with ``A`` an End-valued 1-form; an optional
Hermitian metric field ``h`` (grid+(r,r)) is carried along for adjoints.
Holonomy convention: parallel transport solves ``σ' = -A σ``, so the
holonomy around a coordinate loop is the path-ordered exponential of ``-A``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import (
    ChartMismatch,
    MissingMetric,
    NotAntisymmetric,
    RankMismatch,
)
from .forms import (
    Form,
    TorusChart,
    direct_sum as form_direct_sum,
    exterior_derivative,
    form_parity,
    merge_sign,
    phi_normalize,
    special_adjoint,
    spectral_derivative,
    split_parity,
    super_wedge,
    supertrace,
    trace,
    wedge,
)

FLAT_TOL = 1e-8


def _dagger(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


@dataclass(frozen=True, eq=False)
class Connection:
    """``∇ = d + A`` on the trivial rank-``rank`` bundle, metric ``h`` optional."""

    chart: TorusChart
    rank: int
    coeff: Form
    metric: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.coeff.chart != self.chart:
            raise ChartMismatch("coefficient lives on another chart")
        if self.coeff.rank != self.rank:
            if self.coeff.rank == 1 and not self.coeff.components:
                object.__setattr__(self, "coeff", Form.zero(self.chart, self.rank))
            else:
                raise RankMismatch(f"coefficient rank {self.coeff.rank} != {self.rank}")
        if any(len(S) != 1 for S in self.coeff.components):
            raise ValueError("connection coefficient must be a pure 1-form")
        if self.metric is not None:
            h = np.asarray(self.metric, dtype=complex)
            h = np.broadcast_to(h, self.chart.shape + (self.rank, self.rank)).copy()
            if np.max(np.abs(h - _dagger(h))) > 1e-10 * (1 + np.max(np.abs(h))):
                raise ValueError("metric is not Hermitian")
            ev = np.linalg.eigvalsh(h)
            if np.min(ev) <= 1e-12 * max(1.0, float(np.max(ev))):
                raise ValueError("metric is not positive definite")
            object.__setattr__(self, "metric", h)

    # -- constructors -----------------------------------------------------
    @classmethod
    def trivial(cls, chart: TorusChart, rank: int = 1, metric=None) -> "Connection":
        return cls(chart, rank, Form.zero(chart, rank), metric)

    @classmethod
    def from_arrays(cls, chart: TorusChart, coeffs: Mapping[int, np.ndarray], rank: int | None = None, metric=None):
        """Build from ``{axis: A_axis}`` with arrays of shape grid+(r,r), grid, or (r,r)."""
        comps = {}
        for i, a in coeffs.items():
            a = np.asarray(a, dtype=complex)
            if a.ndim == chart.dim and a.shape == chart.shape:
                a = a[..., None, None]
            elif a.ndim == 2:
                a = np.broadcast_to(a, chart.shape + a.shape)
            comps[(int(i),)] = a
        if rank is None:
            rank = next(iter(comps.values())).shape[-1] if comps else 1
        return cls(chart, rank, Form(chart, rank, comps), metric)

    # -- helpers ------------------------------------------------------------
    def A(self, axis: int) -> np.ndarray:
        return self.coeff.component((axis,))

    def metric_or_identity(self) -> np.ndarray:
        if self.metric is None:
            return np.broadcast_to(np.eye(self.rank, dtype=complex), self.chart.shape + (self.rank, self.rank))
        return self.metric

    def with_metric(self, metric) -> "Connection":
        return Connection(self.chart, self.rank, self.coeff, metric)

    def __add__(self, omega: Form) -> "Connection":
        """``∇ + ω`` for an End-valued 1-form ``ω``."""
        return Connection(self.chart, self.rank, self.coeff + omega, self.metric)

    def __sub__(self, other: "Connection") -> Form:
        """Difference of two connections: an End-valued 1-form."""
        return self.coeff - other.coeff


def curvature(c: Connection) -> Form:
    """``F = dA + A∧A``."""
    return exterior_derivative(c.coeff) + wedge(c.coeff, c.coeff)


def is_flat(c: Connection, tol: float = FLAT_TOL) -> bool:
    return flatness_residual(c) <= tol * (1.0 + c.coeff.max_abs() ** 2)


def flatness_residual(c: Connection) -> float:
    return curvature(c).max_abs()


def exp_series(F: Form, sign: float = -1.0) -> Form:
    """``Σ_j (sign·F)^j / j!`` truncated by nilpotency of even forms."""
    chart = F.chart
    term = Form.identity(chart, F.rank)
    total = term
    G = F * sign
    for j in range(1, chart.dim // 2 + 1):
        term = wedge(term, G) / j
        total = total + term
    return total


def chern_character(c: Connection) -> Form:
    """``φ Tr exp(-∇²)`` as a scalar even form."""
    return phi_normalize(trace(exp_series(curvature(c))))


def adjoint_connection(c: Connection) -> Connection:
    """Adjoint transpose ``∇*`` with ``h(∇*σ, θ) = d h(σ, θ) − h(σ, ∇θ)``.

    For ``∇ = d + A`` this is ``A* = h⁻¹ dh − h⁻¹ A† h``.
    """
    if c.metric is None:
        raise MissingMetric("adjoint connection needs a metric")
    h = c.metric
    hinv = np.linalg.inv(h)
    h_form = Form(c.chart, c.rank, {(): h})
    dh = exterior_derivative(h_form)
    comps = {}
    for i in range(c.chart.dim):
        Ai = c.A(i)
        term = hinv @ dh.component((i,)) - hinv @ _dagger(Ai) @ h
        if np.any(term):
            comps[(i,)] = term
    return Connection(c.chart, c.rank, Form(c.chart, c.rank, comps), h)


def unitary_part(c: Connection) -> Connection:
    """``∇ᵘ = (∇ + ∇*)/2``, compatible with the metric."""
    star = adjoint_connection(c)
    return Connection(c.chart, c.rank, (c.coeff + star.coeff) * 0.5, c.metric)


def metric_compatibility_residual(c: Connection) -> float:
    """``max |dh − A†h − hA|``: zero iff ``∇`` preserves ``h``."""
    h = c.metric_or_identity()
    dh = exterior_derivative(Form(c.chart, c.rank, {(): np.array(h)}))
    res = 0.0
    for i in range(c.chart.dim):
        Ai = c.A(i)
        r = dh.component((i,)) - _dagger(Ai) @ h - h @ Ai
        res = max(res, float(np.max(np.abs(r))))
    return res


def pair_metric(h: np.ndarray, sigma: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Pointwise ``h(σ, θ) = σ† h θ`` for grid+(r,) sections."""
    return np.einsum("...i,...ij,...j->...", np.conj(sigma), h, theta)


def covariant_derivative(c: Connection, sigma: np.ndarray, axis: int) -> np.ndarray:
    """``(∇_{∂_axis} σ)`` for a grid+(r,) section."""
    ds = spectral_derivative(np.asarray(sigma, dtype=complex), c.chart, axis)
    return ds + np.einsum("...ij,...j->...i", c.A(axis), sigma)


def direct_sum(*cs: Connection) -> Connection:
    chart = cs[0].chart
    rank = sum(c.rank for c in cs)
    coeff = form_direct_sum(*[c.coeff for c in cs])
    if all(c.metric is None for c in cs):
        metric = None
    else:
        metric = np.zeros(chart.shape + (rank, rank), dtype=complex)
        o = 0
        for c in cs:
            metric[..., o : o + c.rank, o : o + c.rank] = c.metric_or_identity()
            o += c.rank
    return Connection(chart, rank, coeff, metric)


def gauge_transform(c: Connection, g: np.ndarray) -> Connection:
    """Pull-back ``g*∇ = g⁻¹ ∘ ∇ ∘ g``: coefficient ``g⁻¹ A g + g⁻¹ dg``.

    For a bundle map ``g: E -> F`` and ``c`` a connection on ``F``, this is the
    connection on ``E`` making ``g`` parallel.  The metric is pulled back too.
    """
    g = np.asarray(g, dtype=complex)
    rank_E = g.shape[-1]
    if g.shape[-2] != c.rank or g.shape[:-2] != c.chart.shape:
        raise RankMismatch(f"gauge field of shape {g.shape} does not fit rank {c.rank}")
    if rank_E != c.rank:
        raise RankMismatch("gauge field must be square")
    ginv = np.linalg.inv(g)
    dg = exterior_derivative(Form(c.chart, rank_E, {(): g}))
    comps = {}
    for i in range(c.chart.dim):
        term = ginv @ c.A(i) @ g + ginv @ dg.component((i,))
        comps[(i,)] = term
    metric = None
    if c.metric is not None:
        metric = _dagger(g) @ c.metric @ g
    return Connection(c.chart, rank_E, Form(c.chart, rank_E, comps), metric)


pullback = gauge_transform


def _half_shift(values: np.ndarray, chart: TorusChart, axis: int) -> np.ndarray:
    """Band-limited interpolation to the midpoints ``x_j + h/2`` along ``axis``."""
    n = chart.grid[axis]
    k = chart.wavenumbers(axis)
    h = 2 * np.pi / n
    shape = [1] * values.ndim
    shape[axis] = n
    vhat = np.fft.fft(values, axis=axis)
    return np.fft.ifft(vhat * np.exp(1j * k * h / 2).reshape(shape), axis=axis)


def holonomy(c: Connection, axis: int, start: Sequence[int] | None = None) -> np.ndarray:
    """Holonomy around the ``axis`` loop starting at grid index ``start``.

    Returns ``P exp(-∮ A)`` by a midpoint product: exact for constant A and
    second order in general (use fine grids for quantitative checks).
    """
    start = tuple(start) if start is not None else (0,) * c.chart.dim
    A = _half_shift(c.A(axis), c.chart, axis)
    n = c.chart.grid[axis]
    h = 2 * np.pi / n
    U = np.eye(c.rank, dtype=complex)
    for j in range(n):
        idx = list(start)
        idx[axis] = (start[axis] + j) % n
        U = scipy.linalg.expm(-A[tuple(idx)] * h) @ U
    return U


# ---------------------------------------------------------------------------
# Real bundles and Euler forms
# ---------------------------------------------------------------------------


class RealBundleConnection(Connection):
    """Connection whose coefficient and metric are real at every grid point."""

    def __post_init__(self):
        super().__post_init__()
        if any(np.max(np.abs(a.imag)) > 1e-12 for a in self.coeff.components.values()):
            raise ValueError("real bundle connection has complex coefficient")
        if self.metric is not None and np.max(np.abs(self.metric.imag)) > 1e-12:
            raise ValueError("real bundle metric has complex entries")

    @classmethod
    def from_connection(cls, c: Connection) -> "RealBundleConnection":
        return cls(c.chart, c.rank, c.coeff, c.metric)


def _entry(F: Form, i: int, j: int) -> Form:
    return Form(F.chart, 1, {S: x[..., i : i + 1, j : j + 1] for S, x in F.components.items()})


def pfaffian_form(F: Form) -> Form:
    """Pfaffian of an antisymmetric matrix of commuting (even) scalar forms."""
    r = F.rank
    if r % 2 == 1:
        return Form.zero(F.chart, 1)
    if r == 2:
        return _entry(F, 0, 1)
    if r == 4:
        e = lambda i, j: _entry(F, i, j)  # noqa: E731
        return wedge(e(0, 1), e(2, 3)) - wedge(e(0, 2), e(1, 3)) + wedge(e(0, 3), e(1, 2))
    raise ValueError(f"Pfaffian implemented for rank <= 4, got {r}")


def orthonormal_curvature(c: Connection, F: Form | None = None) -> Form:
    """Curvature expressed in a metric-orthonormal (Cholesky) frame."""
    F = curvature(c) if F is None else F
    if c.metric is None:
        return F
    L = np.linalg.cholesky(c.metric)  # h = L L^†
    Linv = np.linalg.inv(L)
    return F.map(lambda x: _dagger(L) @ x @ _dagger(Linv))


def euler_form(c: Connection, tol: float = 1e-8) -> Form:
    """Pfaffian of ``F/2π`` for a metric-compatible real connection (rank <= 4)."""
    if c.rank % 2 == 1:
        return Form.zero(c.chart, 1)
    if c.rank > 4:
        raise ValueError(f"Euler form implemented for rank <= 4, got {c.rank}")
    F = orthonormal_curvature(c)
    asym = F.map(lambda x: x + np.swapaxes(x, -1, -2)).max_abs()
    if asym > tol * (1.0 + F.max_abs()):
        raise NotAntisymmetric(f"curvature antisymmetry residual {asym:.3e}")
    return pfaffian_form(F / (2 * np.pi))


# ---------------------------------------------------------------------------
# Superconnections
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Superconnection:
    """``𝔸 = ∇ + ω`` on ``E⁺ ⊕ E⁻`` with ``ω`` globally odd."""

    split: Tuple[int, int]
    even_part: Connection
    odd_form: Form

    def __post_init__(self):
        rp, rm = self.split
        if rp + rm != self.even_part.rank:
            raise RankMismatch("split does not match even part rank")
        _, off = split_parity(self.even_part.coeff, rp)
        if off.max_abs() > 1e-12:
            raise ValueError("even part must be block diagonal")
        ev, od = split_parity(self.odd_form, rp)
        bad = max(ev.even_part().max_abs(), od.odd_part().max_abs())
        if bad > 1e-12:
            raise ValueError("odd_form is not globally odd")

    @property
    def chart(self):
        return self.even_part.chart

    @property
    def rank(self):
        return self.even_part.rank

    def total(self) -> Form:
        return self.even_part.coeff + self.odd_form

    def scaled(self, t: float) -> "Superconnection":
        return Superconnection(self.split, self.even_part, self.odd_form * t)


def super_curvature(A: Superconnection) -> Form:
    """``𝔸² = d𝔸 + 𝔸·𝔸`` in the graded tensor product."""
    X = A.total()
    return exterior_derivative(X) + super_wedge(X, X, A.split[0])


def _exterior_basis(dim: int):
    subsets = [S for k in range(dim + 1) for S in itertools.combinations(range(dim), k)]
    index = {S: i for i, S in enumerate(subsets)}
    return subsets, index


def _left_mult_matrices(dim: int):
    subsets, index = _exterior_basis(dim)
    n = len(subsets)
    ext = {}
    for S in subsets:
        M = np.zeros((n, n))
        for T in subsets:
            s = merge_sign(S, T)
            if s:
                M[index[tuple(sorted(S + T))], index[T]] = s
        ext[S] = M
    parity = np.diag([(-1.0) ** len(T) for T in subsets])
    return subsets, index, ext, parity


def graded_exponential(X: Form, split: int, sign: float = -1.0) -> Form:
    """``exp(sign·X)`` in ``Ω ⊗̂ End(E)`` via the faithful rep on ``Λ ⊗ E``.

    Exact even when ``X`` has a non-nilpotent degree-0 part.
    """
    chart, r = X.chart, X.rank
    subsets, index, ext, P = _left_mult_matrices(chart.dim)
    n = len(subsets)
    even, odd = split_parity(X, split)
    L = np.zeros(chart.shape + (n * r, n * r), dtype=complex)
    for S in X.components:
        xe = even.component(S)
        xo = odd.component(S)
        L += np.einsum("ab,...ij->...aibj", ext[S], xe).reshape(chart.shape + (n * r, n * r))
        L += np.einsum("ab,...ij->...aibj", ext[S] @ P, xo).reshape(chart.shape + (n * r, n * r))
    flat = L.reshape(-1, n * r, n * r) * sign
    E = scipy.linalg.expm(flat).reshape(chart.shape + (n, r, n, r))
    comps = {}
    for S in subsets:
        block = E[..., index[S], :, 0, :]
        if np.any(np.abs(block) > 0):
            comps[S] = block
    return Form(chart, r, comps)


def chern_character_super(A: Superconnection) -> Form:
    """``φ Tr_s exp(-𝔸²)``."""
    rp = A.split[0]
    E = graded_exponential(super_curvature(A), rp)
    return phi_normalize(supertrace(E, rp))


def adjoint_superconnection(A: Superconnection) -> Superconnection:
    """``𝔸^S = ∇* + ω^S`` (identity metric on E when none is given)."""
    even = A.even_part
    if even.metric is None:
        even = even.with_metric(np.eye(even.rank))
    if np.max(np.abs(even.metric - np.eye(even.rank))) > 1e-14:
        raise ValueError("superconnection adjoint implemented for the identity metric")
    star = adjoint_connection(even)
    return Superconnection(A.split, star, special_adjoint(A.odd_form, A.split[0]))


def superconnection_from_connections(cp: Connection, cm: Connection, odd: Form | None = None) -> Superconnection:
    even = direct_sum(cp, cm)
    odd = Form.zero(cp.chart, even.rank) if odd is None else odd
    return Superconnection((cp.rank, cm.rank), even, odd)

