"""Chern-Simons and Euler transgressions along paths of connections.

Fiber integration over ``[0,1]`` uses the convention ``∫_{[0,1]} dt∧β = ∫ β dt``.
With it, a path ``∇_t = d + A_t`` has total curvature ``F_t + dt∧A'_t`` on
``M×[0,1]`` and

    ch̃(∇₀, ∇₁) = -∫₀¹ φ Tr(A'_t ∧ exp(-F_t)) dt,    d ch̃ = ch(∇₁) - ch(∇₀).

Time integrals use Gauss-Legendre quadrature.  For linear paths the
integrand is a polynomial in ``t`` of degree < 2·dim, so the default order 8
is exact up to rounding on tori of dimension <= 4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .connections import (
    Connection,
    adjoint_connection,
    curvature,
    exp_series,
    flatness_residual,
    FLAT_TOL,
    gauge_transform,
    orthonormal_curvature,
    pfaffian_form,
)
from .errors import NotAntisymmetric, NotFlat, NotInvertible, RankMismatch, WrongDegree
from .forms import (
    Form,
    FormClass,
    cohomology_class,
    periods,
    phi_normalize,
    trace,
    wedge,
    wedge_power,
)

FD_STEP = 1e-3


def gauss_legendre_unit(order: int):
    """Nodes and weights of Gauss-Legendre quadrature on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True, eq=False)
class ConnectionPath:
    """Path ``t ↦ ∇_t`` on ``[0,1]``.

    ``func`` returns the connection at ``t``; ``derivative`` (optional) returns
    ``∂A_t/∂t`` as a Form.  Without it a 4th-order finite difference is used
    (central in the interior, one-sided within ``2h`` of the ends).
    """

    start: Connection
    end: Connection
    func: Optional[Callable[[float], Connection]] = None
    derivative: Optional[Callable[[float], Form]] = None
    order: int = 8
    step: float = FD_STEP

    def __post_init__(self):
        if self.start.chart != self.end.chart or self.start.rank != self.end.rank:
            raise RankMismatch("path endpoints live on different bundles")
        if self.order < 4:
            raise ValueError("quadrature order must be >= 4")

    @classmethod
    def linear(cls, c0: Connection, c1: Connection, order: int = 8) -> "ConnectionPath":
        return cls(c0, c1, None, None, order)

    @classmethod
    def curve(cls, func, derivative=None, order: int = 8) -> "ConnectionPath":
        return cls(func(0.0), func(1.0), func, derivative, order)

    @property
    def chart(self):
        return self.start.chart

    @property
    def rank(self):
        return self.start.rank

    @property
    def is_linear(self) -> bool:
        return self.func is None

    def at(self, t: float) -> Connection:
        if self.func is None:
            coeff = self.start.coeff * (1.0 - t) + self.end.coeff * t
            return Connection(self.chart, self.rank, coeff, self.start.metric)
        return self.func(t)

    def velocity(self, t: float) -> Form:
        if self.func is None:
            return self.end.coeff - self.start.coeff
        if self.derivative is not None:
            return self.derivative(t)
        h = self.step
        A = lambda s: self.func(s).coeff  # noqa: E731
        if t < 2 * h:
            # forward, 4th order
            return (A(t) * (-25.0) + A(t + h) * 48.0 - A(t + 2 * h) * 36.0 + A(t + 3 * h) * 16.0 - A(t + 4 * h) * 3.0) / (12 * h)
        if t > 1 - 2 * h:
            return (A(t) * 25.0 - A(t - h) * 48.0 + A(t - 2 * h) * 36.0 - A(t - 3 * h) * 16.0 + A(t - 4 * h) * 3.0) / (12 * h)
        return (A(t - 2 * h) - A(t - h) * 8.0 + A(t + h) * 8.0 - A(t + 2 * h)) / (12 * h)

    def reversed(self) -> "ConnectionPath":
        if self.func is None:
            return ConnectionPath.linear(self.end, self.start, self.order)
        f, dv = self.func, self.derivative
        return ConnectionPath(
            self.end,
            self.start,
            lambda t: f(1.0 - t),
            None if dv is None else (lambda t: dv(1.0 - t) * (-1.0)),
            self.order,
            self.step,
        )


def cs_integrand(path: ConnectionPath, t: float, ordering: str = "left") -> Form:
    """``-φ Tr(A'_t ∧ exp(-F_t))`` (``ordering='right'`` uses ``exp(-F_t) ∧ A'_t``)."""
    c = path.at(t)
    X = exp_series(curvature(c))
    V = path.velocity(t)
    prod = wedge(V, X) if ordering == "left" else wedge(X, V)
    return -phi_normalize(trace(prod))


def cs_transgression(path: ConnectionPath, ordering: str = "left") -> Form:
    """Chern-Simons transgression form ``ch̃(∇₀, ∇₁)`` (odd-degree scalar form)."""
    nodes, weights = gauss_legendre_unit(path.order)
    total = Form.zero(path.chart, 1)
    for t, w in zip(nodes, weights):
        total = total + cs_integrand(path, float(t), ordering) * w
    return total


def chern_simons(c0: Connection, c1: Connection, order: int = 8) -> Form:
    """Shorthand for the transgression along the straight path."""
    return cs_transgression(ConnectionPath.linear(c0, c1, order))


def transgression_residual(path: ConnectionPath) -> float:
    """``‖d ch̃ − ch(∇₁) + ch(∇₀)‖∞``."""
    from .connections import chern_character
    from .forms import exterior_derivative

    lhs = exterior_derivative(cs_transgression(path))
    rhs = chern_character(path.end) - chern_character(path.start)
    return (lhs - rhs).max_abs()


# ---------------------------------------------------------------------------
# Euler transgression
# ---------------------------------------------------------------------------


def _pfaffian_derivative(F: Form, X: Form) -> Form:
    """Directional derivative ``D Pf(F)[X]`` for antisymmetric ``F`` (even) and ``X`` (odd)."""
    r = F.rank

    def e(M, i, j):
        return Form(M.chart, 1, {S: x[..., i : i + 1, j : j + 1] for S, x in M.components.items()})

    if r % 2 == 1:
        return Form.zero(F.chart, 1)
    if r == 2:
        return e(X, 0, 1)
    if r == 4:
        out = Form.zero(F.chart, 1)
        for (a, b, c, dd), s in (((0, 1, 2, 3), 1), ((0, 2, 1, 3), -1), ((0, 3, 1, 2), 1)):
            out = out + (wedge(e(X, a, b), e(F, c, dd)) + wedge(e(X, c, dd), e(F, a, b))) * s
        return out
    raise ValueError(f"Euler transgression implemented for rank <= 4, got {r}")


def euler_transgression(path: ConnectionPath, tol: float = 1e-8) -> Form:
    """``ẽ(∇₀, ∇₁) = ∫_{[0,1]} e(∇̃)`` for a path of metric-compatible real connections."""
    r = path.rank
    if r % 2 == 1:
        return Form.zero(path.chart, 1)
    if r > 4:
        raise ValueError(f"Euler transgression implemented for rank <= 4, got {r}")
    nodes, weights = gauss_legendre_unit(path.order)
    total = Form.zero(path.chart, 1)
    for t, w in zip(nodes, weights):
        total = total + _euler_integrand(path, float(t), tol) * w
    return total


def wedge_identity_sides(path_real: ConnectionPath, path_complex: ConnectionPath):
    """Both sides of the product transgression identity.

    Returns ``(lhs, rhs0, rhs1)`` with ``lhs = ∫ e(∇̃_F)∧ch(∇̃_E)``,
    ``rhs0 = ẽ∧ch(∇_{E,0}) + e(∇_{F,1})∧ch̃`` and
    ``rhs1 = e(∇_{F,0})∧ch̃ + ẽ∧ch(∇_{E,1})``; all three agree modulo exact forms.
    """
    from .connections import chern_character, euler_form

    nodes, weights = gauss_legendre_unit(max(path_real.order, path_complex.order))
    lhs = Form.zero(path_real.chart, 1)
    for t, w in zip(nodes, weights):
        t = float(t)
        cF = path_real.at(t)
        cE = path_complex.at(t)
        beta_e = _euler_integrand(path_real, t)
        beta_c = cs_integrand(path_complex, t)
        lhs = lhs + (wedge(beta_e, chern_character(cE)) + wedge(euler_form(cF), beta_c)) * w
    et = euler_transgression(path_real)
    cht = cs_transgression(path_complex)
    rhs0 = wedge(et, chern_character(path_complex.start)) + wedge(euler_form(path_real.end), cht)
    rhs1 = wedge(euler_form(path_real.start), cht) + wedge(et, chern_character(path_complex.end))
    return lhs, rhs0, rhs1


def _euler_integrand(path: ConnectionPath, t: float, tol: float = 1e-8) -> Form:
    """``D Pf(F_t/2π)[A'_t/2π]`` in a metric-orthonormal frame."""
    c = path.at(t)
    F = orthonormal_curvature(c)
    V = path.velocity(t)
    if c.metric is not None:
        L = np.linalg.cholesky(c.metric)
        Linv = np.linalg.inv(L)
        V = V.map(lambda x: np.conj(np.swapaxes(L, -1, -2)) @ x @ np.conj(np.swapaxes(Linv, -1, -2)))
    asym = max(
        F.map(lambda x: x + np.swapaxes(x, -1, -2)).max_abs(),
        V.map(lambda x: x + np.swapaxes(x, -1, -2)).max_abs(),
    )
    if asym > tol * (1.0 + F.max_abs() + V.max_abs()):
        raise NotAntisymmetric(f"path leaves the orthogonal connections (residual {asym:.3e})")
    return _pfaffian_derivative(F / (2 * np.pi), V / (2 * np.pi))


# ---------------------------------------------------------------------------
# Nadel classes
# ---------------------------------------------------------------------------


def check_invertible(f: np.ndarray, max_cond: float = 1e12) -> None:
    s = np.linalg.svd(f, compute_uv=False)
    smin = float(np.min(s[..., -1]))
    cond = float(np.max(s[..., 0] / np.maximum(s[..., -1], 1e-300)))
    if smin <= 0 or cond > max_cond:
        raise NotInvertible(f"bundle map not invertible (min sv {smin:.3e}, cond {cond:.3e})")


def nadel_transgression(g, order: int = 8) -> Form:
    """Representative ``sign · ch̃(∇_E, f*∇_F)`` of the Nadel class of a generator.

    ``g`` needs attributes ``E``, ``F`` (flat Connections), ``f`` (grid+(r,r)
    isomorphism field) and ``sign``.
    """
    E, F, f = g.E, g.F, np.asarray(g.f, dtype=complex)
    if E.rank != F.rank:
        raise RankMismatch("E and F must have equal ranks")
    for name, c in (("E", E), ("F", F)):
        res = flatness_residual(c)
        if res > FLAT_TOL * (1.0 + c.coeff.max_abs() ** 2):
            raise NotFlat(f"connection on {name} has curvature {res:.3e}")
    check_invertible(f)
    pulled = gauge_transform(Connection(F.chart, F.rank, F.coeff), f)
    form = cs_transgression(ConnectionPath.linear(Connection(E.chart, E.rank, E.coeff), pulled, order))
    return form * getattr(g, "sign", 1)


def nadel_class(g, order: int = 8) -> FormClass:
    """Cohomology class of :func:`nadel_transgression` (closed for flat data)."""
    return cohomology_class(nadel_transgression(g, order))


def nadel_flat_closed_form(omega: Form) -> Form:
    """``-Σ_{r=1}^{⌈d/2⌉} (2πi)^{-r} (r-1)!/(2r-1)! Tr ω^{2r-1}`` for a 1-form ``ω``.

    ``ω = f*∇_F − ∇_E`` between flat connections; the sum runs to ``⌈d/2⌉``
    so that the top odd degree on odd-dimensional tori is included.
    """
    if any(len(S) != 1 for S in omega.components):
        raise WrongDegree("closed form needs an End-valued 1-form")
    total = Form.zero(omega.chart, 1)
    for r in range(1, (omega.chart.dim + 1) // 2 + 1):
        coef = (2j * np.pi) ** (-r) * math.factorial(r - 1) / math.factorial(2 * r - 1)
        total = total - trace(wedge_power(omega, 2 * r - 1)) * coef
    return total


def conjugation_transgression(c: Connection, order: int = 8) -> Form:
    """``ch̃(∇*, ∇)`` along the straight path (needs a metric)."""
    star = adjoint_connection(c)
    return cs_transgression(ConnectionPath.linear(star, Connection(c.chart, c.rank, c.coeff, c.metric), order))


def conjugation_class(c: Connection, order: int = 8) -> FormClass:
    """Constant-mode class of ``ch̃(∇*, ∇)`` (the form need not be closed)."""
    return periods(conjugation_transgression(c, order))
