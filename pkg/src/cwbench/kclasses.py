"""Generators of relative and free multiplicative K-theory and their class maps.

Formal sums are plain lists of generators carrying ``sign = ±1``; every class
map extends linearly over such lists.  No quotient structure is built:
classes are compared through their numerical invariants.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np

from .connections import (
    FLAT_TOL,
    Connection,
    adjoint_connection,
    chern_character,
    flatness_residual,
)
from .errors import MissingMetric, NotFlat, RankMismatch, WrongDegree
from .forms import Form, FormClass, exterior_derivative, periods, phicap_factor
from .transgression import check_invertible, chern_simons, nadel_class, nadel_transgression


def _dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


@dataclass(frozen=True, eq=False)
class RelKGenerator:
    """Quintuple ``(E, ∇_E, F, ∇_F, f)``: flat bundles and an isomorphism ``f : E → F``."""

    E: Connection
    F: Connection
    f: np.ndarray
    sign: int = 1

    def __post_init__(self):
        if self.E.rank != self.F.rank:
            raise RankMismatch("E and F must have equal ranks")
        if self.E.chart != self.F.chart:
            raise RankMismatch("E and F live on different charts")
        for name, c in (("E", self.E), ("F", self.F)):
            res = flatness_residual(c)
            if res > FLAT_TOL * (1.0 + c.coeff.max_abs() ** 2):
                raise NotFlat(f"connection on {name} has curvature {res:.3e}")
        f = np.asarray(self.f, dtype=complex)
        if f.shape != self.E.chart.shape + (self.E.rank, self.E.rank):
            raise RankMismatch(f"isomorphism field has shape {f.shape}")
        check_invertible(f)
        object.__setattr__(self, "f", f)
        if self.sign not in (1, -1):
            raise ValueError("sign must be ±1")

    def negated(self) -> "RelKGenerator":
        return replace(self, sign=-self.sign)


@dataclass(frozen=True, eq=False)
class FreeMultGenerator:
    """Triple ``(E, ∇_E, α)`` with ``α`` an odd-degree form (class-level semantics)."""

    E: Connection
    alpha: Form
    sign: int = 1

    def __post_init__(self):
        if self.alpha.rank != 1:
            raise RankMismatch("alpha must be scalar-valued")
        if any(len(S) % 2 == 0 for S in self.alpha.components):
            raise WrongDegree("alpha must have only odd-degree components")
        if self.alpha.chart != self.E.chart:
            raise RankMismatch("alpha and the connection live on different charts")
        if self.sign not in (1, -1):
            raise ValueError("sign must be ±1")

    @classmethod
    def from_connection(cls, c: Connection, alpha: Form | None = None, sign: int = 1) -> "FreeMultGenerator":
        return cls(c, Form.zero(c.chart, 1) if alpha is None else alpha, sign)

    def negated(self) -> "FreeMultGenerator":
        return replace(self, sign=-self.sign)


Generators = Union[RelKGenerator, FreeMultGenerator, Sequence]


def _linear(fn):
    """Extend a per-generator map linearly over lists of generators."""

    def wrapper(g, *args, **kwargs):
        if isinstance(g, (list, tuple)):
            if not g:
                raise ValueError("empty formal sum")
            parts = [wrapper(x, *args, **kwargs) for x in g]
            total = parts[0]
            for p in parts[1:]:
                total = total + p
            return total
        return fn(g, *args, **kwargs)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# Free multiplicative K-theory
# ---------------------------------------------------------------------------


@_linear
def chern_hat(g: FreeMultGenerator) -> Form:
    """``sign · (ch(∇_E) − dα)``, a closed form."""
    return (chern_character(g.E) - exterior_derivative(g.alpha)) * g.sign


def normalize_change_connection(g: FreeMultGenerator, new: Connection, order: int = 8) -> FreeMultGenerator:
    """Equivalent generator ``(E, ∇_new, α + ch̃(∇_old, ∇_new))``; ``chern_hat`` is unchanged."""
    if new.rank != g.E.rank or new.chart != g.E.chart:
        raise RankMismatch("new connection must live on the same bundle")
    cs = chern_simons(Connection(g.E.chart, g.E.rank, g.E.coeff), Connection(new.chart, new.rank, new.coeff), order)
    return FreeMultGenerator(new, g.alpha + cs.odd_part(), g.sign)


def _with_metric(c: Connection) -> Connection:
    return c if c.metric is not None else c.with_metric(c.metric_or_identity())


@_linear
def borel_class(g: FreeMultGenerator, order: int = 8) -> FormClass:
    """Class of ``ch̃(∇*, ∇) − α + ᾱ`` (identity metric unless ∇ carries one)."""
    return periods(borel_form(g, order))


def borel_form(g: FreeMultGenerator, order: int = 8) -> Form:
    """Representative form of the Borel class (for differential identities)."""
    c = _with_metric(g.E)
    cs = chern_simons(adjoint_connection(c), Connection(c.chart, c.rank, c.coeff), order)
    return (cs - g.alpha + g.alpha.conj()) * g.sign


def conjugate_freemult(g: FreeMultGenerator) -> FreeMultGenerator:
    """Involution ``(E, ∇, α) ↦ (E, ∇*, ᾱ)``."""
    return FreeMultGenerator(adjoint_connection(_with_metric(g.E)), g.alpha.conj(), g.sign)


def mk0_residual(g: FreeMultGenerator) -> float:
    """``‖ch(∇) − dα − rank‖∞``: zero exactly on the multiplicative subgroup."""
    return float((chern_hat(g) * g.sign - Form.constant(g.E.chart, [[g.E.rank]])).max_abs())


def is_mk0(g: FreeMultGenerator, tol: float = 1e-8) -> bool:
    return mk0_residual(g) < tol


def from_flat(c: Connection) -> FreeMultGenerator:
    """Flat bundle ``(E, ∇) ↦ (E, ∇, 0)``; lands in the multiplicative subgroup."""
    res = flatness_residual(c)
    if res > FLAT_TOL * (1.0 + c.coeff.max_abs() ** 2):
        raise NotFlat(f"connection has curvature {res:.3e}")
    return FreeMultGenerator.from_connection(c)


# ---------------------------------------------------------------------------
# Relative K-theory
# ---------------------------------------------------------------------------


@_linear
def relk_nadel_class(g: RelKGenerator, order: int = 8) -> FormClass:
    """Nadel class ``sign · [ch̃(∇_E, f*∇_F)]``."""
    return nadel_class(g, order)


def conjugate_relk(g: RelKGenerator) -> RelKGenerator:
    """Replace both flat connections by their adjoints; ``f`` is kept."""
    if g.E.metric is None or g.F.metric is None:
        raise MissingMetric("conjugation of a relative generator needs metrics on E and F")
    return RelKGenerator(adjoint_connection(g.E), adjoint_connection(g.F), g.f, g.sign)


def relk_from_automorphism(g: np.ndarray, chart, sign: int = 1) -> RelKGenerator:
    """Generator ``(C^r, d, C^r, d, g)`` attached to a map into GL_r."""
    g = np.asarray(g, dtype=complex)
    r = g.shape[-1]
    triv = Connection.trivial(chart, r)
    return RelKGenerator(triv, triv, g, sign)


# ---------------------------------------------------------------------------
# Integrality inspection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntegralityEntry:
    label: str
    degree: int
    value: complex
    nearest: int
    distance: float


def phi_integrality_report(c: FormClass) -> List[IntegralityEntry]:
    """Φ-scaled periods of a scalar class with their distance to the nearest integer.

    The distance is measured on the complex value (an imaginary part counts as
    non-integral).  Purely informational.
    """
    from .forms import subset_label

    out = []
    for S in c.keys():
        k = len(S)
        if k == 0:
            continue
        v = complex(np.asarray(c.periods[S]).reshape(-1)[0]) * phicap_factor(k)
        n = int(np.rint(v.real))
        out.append(IntegralityEntry(subset_label(S), k, v, n, float(abs(v - n))))
    return out
