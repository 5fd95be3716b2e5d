"""Matrix-valued differential forms on flat periodic tori.

A form on the torus ``T^d = (R / 2πZ)^d`` is stored densely: one complex array
of shape ``grid + (rank, rank)`` per sorted coordinate subset ``S``.  The
subset ``(0, 2)`` stands for ``dx1 ^ dx3``.  Scalar forms have rank 1 and are
still stored with trailing ``(1, 1)`` axes so that every product is a plain
batched matrix product.

The exterior derivative is spectral: coordinate derivatives are Fourier
multipliers ``i k`` (Nyquist mode dropped), exact for band-limited samples.
Cohomology classes on a flat torus are represented by constant Fourier modes,
i.e. by the grid mean of each component.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Tuple

import numpy as np

from .errors import ChartMismatch, NotClosed, RankMismatch

Subset = Tuple[int, ...]

TWO_PI = 2.0 * np.pi
CLOSED_TOL = 1e-8


# ---------------------------------------------------------------------------
# Chart
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusChart:
    """Single periodic chart of ``T^d`` with ``grid[i]`` samples along ``x_i``."""

    grid: Tuple[int, ...]

    def __post_init__(self):
        grid = tuple(int(n) for n in self.grid)
        object.__setattr__(self, "grid", grid)
        if not 1 <= len(grid) <= 4:
            raise ValueError(f"torus dimension must be 1..4, got {len(grid)}")
        if any(n < 4 for n in grid):
            raise ValueError(f"every grid size must be >= 4, got {grid}")

    @classmethod
    def uniform(cls, dim: int, n: int) -> "TorusChart":
        return cls((n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.grid)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.grid

    @property
    def npoints(self) -> int:
        return int(np.prod(self.grid))

    @property
    def period(self) -> float:
        return TWO_PI

    def axis(self, i: int) -> np.ndarray:
        """1-D sample coordinates ``2π j / n_i`` along axis ``i``."""
        return TWO_PI * np.arange(self.grid[i]) / self.grid[i]

    def mesh(self) -> Tuple[np.ndarray, ...]:
        """Coordinate arrays of full grid shape (``indexing='ij'``)."""
        return tuple(np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij"))

    def wavenumbers(self, i: int) -> np.ndarray:
        """Integer wavenumbers along axis ``i`` with the Nyquist mode zeroed."""
        n = self.grid[i]
        k = np.fft.fftfreq(n, d=1.0 / n)
        if n % 2 == 0:
            k[n // 2] = 0.0
        return k

    def subsets(self, degree: int | None = None) -> Iterable[Subset]:
        degrees = range(self.dim + 1) if degree is None else [degree]
        for k in degrees:
            yield from itertools.combinations(range(self.dim), k)

    def scaled(self, factor: int) -> "TorusChart":
        return TorusChart(tuple(int(n * factor) for n in self.grid))


def subset_label(S: Subset) -> str:
    """Human label: ``()`` -> ``1``, ``(0, 1)`` -> ``dx1^dx2``."""
    if not S:
        return "1"
    return "^".join(f"dx{i + 1}" for i in S)


def merge_sign(S: Subset, T: Subset) -> int:
    """Sign of ``dx_S ^ dx_T`` relative to ``dx_{sorted(S+T)}`` (0 if they overlap)."""
    if set(S) & set(T):
        return 0
    inversions = sum(1 for s in S for t in T if s > t)
    return -1 if inversions % 2 else 1


def spectral_derivative(values: np.ndarray, chart: TorusChart, axis: int) -> np.ndarray:
    """Spectral ``∂/∂x_axis`` of samples whose leading axes are the grid."""
    k = chart.wavenumbers(axis)
    shape = [1] * values.ndim
    shape[axis] = k.size
    vhat = np.fft.fft(values, axis=axis)
    return np.fft.ifft(1j * k.reshape(shape) * vhat, axis=axis)


# ---------------------------------------------------------------------------
# Forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Form:
    """Complex ``rank x rank`` matrix-valued multi-degree form."""

    chart: TorusChart
    rank: int
    components: Mapping[Subset, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        comps: Dict[Subset, np.ndarray] = {}
        target = self.chart.shape + (self.rank, self.rank)
        for S, arr in self.components.items():
            S = tuple(S)
            if list(S) != sorted(set(S)) or any(not 0 <= i < self.chart.dim for i in S):
                raise ValueError(f"component key {S} is not a sorted subset of axes")
            arr = np.asarray(arr, dtype=complex)
            if arr.shape != target:
                arr = np.broadcast_to(arr, target).copy()
            comps[S] = arr
        object.__setattr__(self, "components", comps)

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls, chart: TorusChart, rank: int = 1) -> "Form":
        return cls(chart, rank, {})

    @classmethod
    def scalar(cls, chart: TorusChart, comps: Mapping[Subset, np.ndarray | complex]) -> "Form":
        """Scalar form from grid-shaped arrays (or constants)."""
        out = {}
        for S, v in comps.items():
            v = np.broadcast_to(np.asarray(v, dtype=complex), chart.shape)
            out[tuple(S)] = v[..., None, None]
        return cls(chart, 1, out)

    @classmethod
    def constant(cls, chart: TorusChart, matrix, subset: Subset = ()) -> "Form":
        m = np.atleast_2d(np.asarray(matrix, dtype=complex))
        return cls(chart, m.shape[0], {tuple(subset): np.broadcast_to(m, chart.shape + m.shape)})

    @classmethod
    def identity(cls, chart: TorusChart, rank: int) -> "Form":
        return cls.constant(chart, np.eye(rank))

    # -- access -----------------------------------------------------------
    def component(self, S: Subset) -> np.ndarray:
        S = tuple(S)
        if S in self.components:
            return self.components[S]
        return np.zeros(self.chart.shape + (self.rank, self.rank), dtype=complex)

    def scalar_component(self, S: Subset) -> np.ndarray:
        """Grid array of a scalar form's component (rank must be 1)."""
        if self.rank != 1:
            raise RankMismatch("scalar_component needs a rank-1 form")
        return self.component(S)[..., 0, 0]

    def degrees(self) -> set:
        return {len(S) for S, a in self.components.items() if np.any(a)}

    def degree_part(self, k: int) -> "Form":
        return Form(self.chart, self.rank, {S: a for S, a in self.components.items() if len(S) == k})

    def even_part(self) -> "Form":
        return Form(self.chart, self.rank, {S: a for S, a in self.components.items() if len(S) % 2 == 0})

    def odd_part(self) -> "Form":
        return Form(self.chart, self.rank, {S: a for S, a in self.components.items() if len(S) % 2 == 1})

    def max_abs(self) -> float:
        if not self.components:
            return 0.0
        return float(max(np.max(np.abs(a)) for a in self.components.values()))

    def map(self, fn) -> "Form":
        """Apply ``fn`` to every component array."""
        return Form(self.chart, self.rank, {S: fn(a) for S, a in self.components.items()})

    def map_degree(self, fn) -> "Form":
        """Apply ``fn(degree, array)`` to every component."""
        return Form(self.chart, self.rank, {S: fn(len(S), a) for S, a in self.components.items()})

    def conj(self) -> "Form":
        """Entrywise complex conjugate (matrix not transposed)."""
        return self.map(np.conj)

    def transpose_conj(self) -> "Form":
        """Ordinary adjoint ``β ⊗ a ↦ conj(β) ⊗ a^†`` for the identity metric."""
        return self.map(lambda a: np.conj(np.swapaxes(a, -1, -2)))

    def block(self, rows: slice, cols: slice) -> "Form":
        sub = {S: a[..., rows, cols] for S, a in self.components.items()}
        size = len(range(*rows.indices(self.rank)))
        if size != len(range(*cols.indices(self.rank))):
            raise RankMismatch("only square blocks are forms")
        return Form(self.chart, size, sub)

    # -- arithmetic ----------------------------------------------------------
    def _check(self, other: "Form"):
        if other.chart != self.chart:
            raise ChartMismatch(f"{self.chart} vs {other.chart}")
        if other.rank != self.rank:
            raise RankMismatch(f"rank {self.rank} vs {other.rank}")

    def __add__(self, other: "Form") -> "Form":
        self._check(other)
        out = dict(self.components)
        for S, a in other.components.items():
            out[S] = out[S] + a if S in out else a
        return Form(self.chart, self.rank, out)

    def __neg__(self) -> "Form":
        return self.map(lambda a: -a)

    def __sub__(self, other: "Form") -> "Form":
        return self + (-other)

    def __mul__(self, c) -> "Form":
        if isinstance(c, Form):
            return wedge(self, c)
        return self.map(lambda a: a * c)

    __rmul__ = __mul__

    def __truediv__(self, c) -> "Form":
        return self.map(lambda a: a / c)

    def __xor__(self, other: "Form") -> "Form":
        return wedge(self, other)

    def __repr__(self):
        keys = ", ".join(subset_label(S) for S in sorted(self.components, key=lambda s: (len(s), s)))
        return f"Form(dim={self.chart.dim}, rank={self.rank}, components=[{keys}])"


def _matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[-1] == 1 and a.shape[-2] == 1:
        return a[..., :1, :1] * b
    if b.shape[-1] == 1 and b.shape[-2] == 1:
        return a * b[..., :1, :1]
    return a @ b


def wedge(a: Form, b: Form) -> Form:
    """Wedge product ``(α⊗A)∧(β⊗B) = (α∧β)⊗(AB)`` for ungraded coefficients.

    Rank-1 forms act as scalars on forms of any rank.
    """
    if a.chart != b.chart:
        raise ChartMismatch(f"{a.chart} vs {b.chart}")
    if a.rank != b.rank and 1 not in (a.rank, b.rank):
        raise RankMismatch(f"rank {a.rank} vs {b.rank}")
    rank = max(a.rank, b.rank)
    out: Dict[Subset, np.ndarray] = {}
    for S, x in a.components.items():
        for T, y in b.components.items():
            sign = merge_sign(S, T)
            if sign == 0:
                continue
            U = tuple(sorted(S + T))
            term = _matmul(x, y)
            if sign < 0:
                term = -term
            out[U] = out[U] + term if U in out else term
    return Form(a.chart, rank, out)


def wedge_power(a: Form, n: int) -> Form:
    out = Form.identity(a.chart, a.rank)
    for _ in range(n):
        out = wedge(out, a)
    return out


def form_parity(a: Form) -> Form:
    """Multiply the degree-k part by ``(-1)^k`` (the grading automorphism)."""
    return a.map_degree(lambda k, x: -x if k % 2 else x)


def super_wedge(a: Form, b: Form, split: int) -> Form:
    """Product in the graded tensor product ``Ω ⊗̂ End(E⁺ ⊕ E⁻)``.

    ``(α ⊗̂ A)(β ⊗̂ B) = (-1)^{|A| deg β} (α∧β) ⊗ AB`` where ``|A|`` is 0 on the
    block-diagonal part (``split`` = rank of ``E⁺``) and 1 off the diagonal.
    """
    a_even, a_odd = split_parity(a, split)
    return wedge(a_even, b) + wedge(a_odd, form_parity(b))


def split_parity(a: Form, split: int) -> Tuple[Form, Form]:
    """Split End-valued form into block-diagonal (even) and off-diagonal (odd) parts."""
    if not 0 < split < a.rank:
        raise ValueError(f"split {split} out of range for rank {a.rank}")
    mask = np.zeros((a.rank, a.rank), dtype=bool)
    mask[:split, :split] = True
    mask[split:, split:] = True
    even = a.map(lambda x: np.where(mask, x, 0))
    odd = a.map(lambda x: np.where(mask, 0, x))
    return even, odd


def special_adjoint(a: Form, split: int | None = None) -> Form:
    """Special adjoint ``β⊗A ↦ (-1)^{k(k+1)/2 + k|A|} conj(β) ⊗ A^†`` (identity metric).

    ``k`` is the form degree, ``|A|`` the End parity w.r.t. ``split`` (all even
    when ``split`` is None).  With the product convention of
    :func:`super_wedge` this is the conjugate-linear anti-involution
    (``(XY)^S = Y^S X^S``) that sends a connection coefficient ``A`` to the
    coefficient ``-A^†`` of the adjoint connection and satisfies
    ``φ Tr_s(X^S) = conj(φ Tr_s X)``.
    """
    if split is None:
        even, odd = a, Form.zero(a.chart, a.rank)
    else:
        even, odd = split_parity(a, split)

    def sgn(k, p):
        return -1 if (k * (k + 1) // 2 + k * p) % 2 else 1

    out = even.transpose_conj().map_degree(lambda k, x: sgn(k, 0) * x)
    out = out + odd.transpose_conj().map_degree(lambda k, x: sgn(k, 1) * x)
    return out


def exterior_derivative(a: Form) -> Form:
    """Spectral exterior derivative ``d(f dx_S) = Σ_i ∂_i f dx_i ∧ dx_S``."""
    chart = a.chart
    out: Dict[Subset, np.ndarray] = {}
    for S, f in a.components.items():
        for i in range(chart.dim):
            if i in S:
                continue
            sign = -1 if sum(1 for s in S if s < i) % 2 else 1
            df = spectral_derivative(f, chart, i)
            U = tuple(sorted(S + (i,)))
            term = df if sign > 0 else -df
            out[U] = out[U] + term if U in out else term
    return Form(chart, a.rank, out)


d = exterior_derivative


def trace(a: Form) -> Form:
    return Form(a.chart, 1, {S: np.trace(x, axis1=-2, axis2=-1)[..., None, None] for S, x in a.components.items()})


def supertrace(a: Form, split: int) -> Form:
    """Trace on the top-left ``split`` block minus trace on the rest."""
    if not 0 < split < a.rank:
        raise ValueError(f"split {split} out of range for rank {a.rank}")
    tau = np.ones(a.rank)
    tau[split:] = -1.0
    return Form(
        a.chart,
        1,
        {S: np.einsum("...ii,i->...", x, tau)[..., None, None] for S, x in a.components.items()},
    )


def integrate_top(a: Form):
    """``∫_{T^d} a`` with dx1^..^dxd positive; rectangle rule (spectral for smooth data)."""
    top = tuple(range(a.chart.dim))
    if top not in a.components:
        return 0j if a.rank == 1 else np.zeros((a.rank, a.rank), dtype=complex)
    vol = TWO_PI ** a.chart.dim / a.chart.npoints
    total = a.components[top].reshape(-1, a.rank, a.rank).sum(axis=0) * vol
    return complex(total[0, 0]) if a.rank == 1 else total


def direct_sum(*forms: Form) -> Form:
    """Block-diagonal direct sum of End-valued forms."""
    chart = forms[0].chart
    rank = sum(f.rank for f in forms)
    keys = set().union(*[f.components.keys() for f in forms])
    out = {}
    for S in keys:
        arr = np.zeros(chart.shape + (rank, rank), dtype=complex)
        o = 0
        for f in forms:
            if f.chart != chart:
                raise ChartMismatch("direct sum over different charts")
            if S in f.components:
                arr[..., o : o + f.rank, o : o + f.rank] = f.components[S]
            o += f.rank
        out[S] = arr
    return Form(chart, rank, out)


# ---------------------------------------------------------------------------
# Degree scalings
# ---------------------------------------------------------------------------


def phi_factor(k: int) -> complex:
    """Factor applied by φ to degree-k components: ``(2πi)^{-ceil(k/2)}``."""
    return (2j * np.pi) ** (-((k + 1) // 2))


def phicap_factor(k: int) -> float:
    """Factor applied by Φ to degree-k components: ``ceil(k/2)!``."""
    return float(math.factorial((k + 1) // 2))


def phi_normalize(a: Form) -> Form:
    return a.map_degree(lambda k, x: x * phi_factor(k))


def phi_cap(a: Form) -> Form:
    return a.map_degree(lambda k, x: x * phicap_factor(k))


# ---------------------------------------------------------------------------
# Classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FormClass:
    """Constant-mode representative of a de Rham class (one matrix per subset)."""

    rank: int
    periods: Mapping[Subset, np.ndarray]
    dim: int

    def get(self, S: Subset):
        S = tuple(S)
        v = self.periods.get(S)
        if v is None:
            v = np.zeros((self.rank, self.rank), dtype=complex)
        return complex(v[0, 0]) if self.rank == 1 else v

    def keys(self):
        return sorted(self.periods, key=lambda s: (len(s), s))

    def _combine(self, other: "FormClass", sign: float) -> "FormClass":
        if other.rank != self.rank or other.dim != self.dim:
            raise RankMismatch("incompatible classes")
        out = {S: np.array(v) for S, v in self.periods.items()}
        for S, v in other.periods.items():
            out[S] = out[S] + sign * v if S in out else sign * v
        return FormClass(self.rank, out, self.dim)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return FormClass(self.rank, {S: -v for S, v in self.periods.items()}, self.dim)

    def __mul__(self, c):
        return FormClass(self.rank, {S: c * v for S, v in self.periods.items()}, self.dim)

    __rmul__ = __mul__

    def conj(self) -> "FormClass":
        return FormClass(self.rank, {S: np.conj(v) for S, v in self.periods.items()}, self.dim)

    def degree_part(self, k: int) -> "FormClass":
        return FormClass(self.rank, {S: v for S, v in self.periods.items() if len(S) == k}, self.dim)

    def positive_degree(self) -> "FormClass":
        return FormClass(self.rank, {S: v for S, v in self.periods.items() if len(S) > 0}, self.dim)

    def max_abs(self) -> float:
        return float(max((np.max(np.abs(v)) for v in self.periods.values()), default=0.0))

    def max_real(self) -> float:
        return float(max((np.max(np.abs(v.real)) for v in self.periods.values()), default=0.0))

    def max_imag(self) -> float:
        return float(max((np.max(np.abs(v.imag)) for v in self.periods.values()), default=0.0))

    def map_degree(self, fn) -> "FormClass":
        return FormClass(self.rank, {S: fn(len(S), v) for S, v in self.periods.items()}, self.dim)

    def as_dict(self) -> Dict[str, complex]:
        """Label -> value (scalar classes only), in stable order."""
        return {subset_label(S): self.get(S) for S in self.keys()}

    def __repr__(self):
        if self.rank == 1:
            inner = ", ".join(f"{subset_label(S)}: {self.get(S):.6g}" for S in self.keys())
        else:
            inner = ", ".join(subset_label(S) for S in self.keys())
        return f"FormClass({inner})"


def periods(a: Form) -> FormClass:
    """Grid means of all components (no closedness check).

    For any form this is the harmonic part of its constant Fourier mode; the
    result is unchanged by adding exact forms, so it is a sound "modulo exact"
    reduction even for forms that are only known up to exact terms.
    """
    axes = tuple(range(a.chart.dim))
    return FormClass(a.rank, {S: np.mean(x, axis=axes) for S, x in a.components.items()}, a.chart.dim)


def closedness_residual(a: Form) -> float:
    return exterior_derivative(a).max_abs()


def cohomology_class(a: Form, tol: float = CLOSED_TOL) -> FormClass:
    """Class of a closed form; raises :class:`NotClosed` beyond ``tol·(1+‖a‖∞)``."""
    res = closedness_residual(a)
    bound = tol * (1.0 + a.max_abs())
    if res > bound:
        raise NotClosed(f"||da||_inf = {res:.3e} exceeds {bound:.3e}")
    return periods(a)


def phi_normalize_class(c: FormClass) -> FormClass:
    return c.map_degree(lambda k, v: v * phi_factor(k))


def phi_cap_class(c: FormClass) -> FormClass:
    return c.map_degree(lambda k, v: v * phicap_factor(k))


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def trig_poly(chart: TorusChart, terms: Iterable[Tuple[Tuple[int, ...], complex]]) -> np.ndarray:
    """Evaluate ``Σ c · exp(i k·x)`` on the grid for (multi-index k, c) pairs."""
    X = chart.mesh()
    out = np.zeros(chart.shape, dtype=complex)
    for k, c in terms:
        k = tuple(k) + (0,) * (chart.dim - len(k))
        phase = sum(kk * x for kk, x in zip(k, X))
        out = out + complex(c) * np.exp(1j * phase)
    return out


def random_trig_poly(
    chart: TorusChart, rng: np.random.Generator, band: int = 2, shape=(), scale: float = 1.0
) -> np.ndarray:
    """Random complex band-limited field of trailing ``shape`` (modes |k_i| <= band)."""
    X = chart.mesh()
    out = np.zeros(chart.shape + tuple(shape), dtype=complex)
    for k in itertools.product(range(-band, band + 1), repeat=chart.dim):
        c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * scale
        c = c / (1.0 + sum(abs(kk) for kk in k)) ** 2
        phase = np.exp(1j * sum(kk * x for kk, x in zip(k, X)))
        out = out + phase.reshape(chart.shape + (1,) * len(shape)) * c
    return out


def one_form(chart: TorusChart, coeffs: Mapping[int, np.ndarray]) -> Form:
    """End-valued 1-form ``Σ_i A_i dx_i`` from grid+(r,r) arrays (or matrices)."""
    arrs = {}
    rank = None
    for i, a in coeffs.items():
        a = np.asarray(a, dtype=complex)
        if a.ndim == 2:
            a = np.broadcast_to(a, chart.shape + a.shape)
        elif a.ndim == chart.dim:
            a = a[..., None, None]
        rank = a.shape[-1]
        arrs[(int(i),)] = a
    return Form(chart, rank or 1, arrs)
