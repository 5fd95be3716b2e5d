"""Finite-dimensional link algebra over a torus chart.

A link between ``E − F`` and ``G − H`` is a pointwise invertible matrix field

    ℓ : E ⊕ H ⊕ K  →  F ⊕ G ⊕ K

(blocks in exactly this order).  Links compose, invert and can be produced
from exact sequences and complexes.  Equivalence of links (isotopy after
stabilization) is not decidable here; two links are called *weakly
equivalent* when their computable invariants agree:

* ``chclass`` — constant-mode class of ``ch̃(∇_E⊕∇_H⊕∇_K, ℓ*(∇_F⊕∇_G⊕∇_K))``;
* ``windings`` — winding number of ``det ℓ`` along each coordinate loop
  through the origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .connections import Connection, direct_sum, gauge_transform
from .errors import IllConditioned, NotExact, RankJump, RankMismatch
from .forms import FormClass, TorusChart, periods
from .transgression import ConnectionPath, cs_transgression

RANK_RTOL = 1e-7
COND_MAX = 1e12


def _dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


def _eye_field(chart: TorusChart, n: int) -> np.ndarray:
    return np.broadcast_to(np.eye(n, dtype=complex), chart.shape + (n, n)).copy()


def pointwise_rank(m: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Numerical rank of every matrix in a field (relative threshold on σ_max)."""
    if m.shape[-1] == 0 or m.shape[-2] == 0:
        return np.zeros(m.shape[:-2], dtype=int)
    s = np.linalg.svd(m, compute_uv=False)
    smax = s[..., :1]
    return np.sum(s > rtol * np.maximum(smax, 1e-300), axis=-1) * (smax[..., 0] > 1e-14)


def constant_rank(m: np.ndarray, name: str = "map", rtol: float = RANK_RTOL) -> int:
    r = pointwise_rank(m, rtol)
    if r.size and r.min() != r.max():
        raise RankJump(f"rank of {name} varies over the grid ({r.min()}..{r.max()})")
    return int(r.flat[0]) if r.size else 0


def pinv_field(m: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    if m.shape[-1] == 0 or m.shape[-2] == 0:
        return np.zeros(m.shape[:-2] + (m.shape[-1], m.shape[-2]), dtype=complex)
    # same thresholds as pointwise_rank, so an all-negligible block inverts to zero
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    smax = s[..., :1]
    keep = (s > rtol * np.maximum(smax, 1e-300)) & (smax > 1e-14)
    sinv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return _dagger(vh) @ (sinv[..., :, None] * _dagger(u))


def _check_invertible(m: np.ndarray, what: str = "link"):
    if m.shape[-1] == 0:
        return
    s = np.linalg.svd(m, compute_uv=False)
    cond = float(np.max(s[..., 0] / np.maximum(s[..., -1], 1e-300)))
    if not np.isfinite(cond) or cond > COND_MAX:
        raise IllConditioned(f"{what} matrix field is singular or ill-conditioned (cond {cond:.3e})")


# ---------------------------------------------------------------------------
# Link data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinkDatum:
    """Link between ``E − F`` and ``G − H`` with stabilizer of rank ``k``.

    ``matrix`` maps ``E⊕H⊕K → F⊕G⊕K`` unless ``reversed`` is set, in which
    case the stored matrix maps the other way and :attr:`map` returns its
    inverse.  ``reversed`` implements the role swap ``[−ℓ]`` as metadata.
    """

    chart: TorusChart
    rE: int
    rF: int
    rG: int
    rH: int
    k: int
    matrix: np.ndarray
    reversed: bool = False

    def __post_init__(self):
        n = self.rE + self.rH + self.k
        if n != self.rF + self.rG + self.k:
            raise RankMismatch(f"rE+rH = {self.rE + self.rH} but rF+rG = {self.rF + self.rG}")
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != self.chart.shape + (n, n):
            raise RankMismatch(f"link matrix has shape {m.shape}, expected grid+({n},{n})")
        object.__setattr__(self, "matrix", m)

    @property
    def size(self) -> int:
        return self.rE + self.rH + self.k

    @property
    def ranks(self) -> Tuple[int, int, int, int, int]:
        return (self.rE, self.rF, self.rG, self.rH, self.k)

    @property
    def map(self) -> np.ndarray:
        """Matrix field ``E⊕H⊕K → F⊕G⊕K``."""
        if self.reversed:
            return np.linalg.inv(self.matrix) if self.size else self.matrix
        return self.matrix

    def min_abs_det(self) -> float:
        if self.size == 0:
            return 1.0
        return float(np.min(np.abs(np.linalg.det(self.matrix))))

    def check_invertible(self):
        _check_invertible(self.matrix)
        return self

    @classmethod
    def identity(cls, chart: TorusChart, rE: int, rH: int, k: int = 0) -> "LinkDatum":
        """Identity isomorphism read as a link between ``E − E`` and ``H − H``."""
        return cls(chart, rE, rE, rH, rH, k, _eye_field(chart, rE + rH + k))


def _perm_matrix(blocks_from: Sequence[Tuple[str, int]], order_to: Sequence[str]) -> np.ndarray:
    """Permutation taking a vector laid out as ``blocks_from`` to the layout ``order_to``."""
    offsets = {}
    o = 0
    for name, r in blocks_from:
        offsets[name] = (o, r)
        o += r
    n = o
    P = np.zeros((n, n))
    row = 0
    for name in order_to:
        start, r = offsets[name]
        for j in range(r):
            P[row + j, start + j] = 1.0
        row += r
    return P


def relabel(l: LinkDatum, dom_perm: np.ndarray, cod_perm: np.ndarray, ranks: Tuple[int, int, int, int, int]) -> LinkDatum:
    """New link with matrix ``C · ℓ · D⁻¹`` for permutations ``D`` (domain) and ``C`` (codomain)."""
    m = cod_perm @ l.map @ dom_perm.T
    return LinkDatum(l.chart, *ranks, m)


def negate_link(l: LinkDatum) -> LinkDatum:
    """``[−ℓ]``: the same isomorphism read as a link between ``F − E`` and ``H − G``."""
    return LinkDatum(l.chart, l.rF, l.rE, l.rH, l.rG, l.k, l.matrix, not l.reversed)


def invert_link(l: LinkDatum) -> LinkDatum:
    """``[ℓ]⁻¹``: link between ``G − H`` and ``E − F`` given by ``ℓ⁻¹`` reordered.

    ``ℓ⁻¹ : F⊕G⊕K → E⊕H⊕K`` is rewritten as ``G⊕F⊕K → H⊕E⊕K``.
    """
    _check_invertible(l.matrix)
    inv = np.linalg.inv(l.map) if l.size else l.map
    D = _perm_matrix([("F", l.rF), ("G", l.rG), ("K", l.k)], ["G", "F", "K"])
    C = _perm_matrix([("E", l.rE), ("H", l.rH), ("K", l.k)], ["H", "E", "K"])
    m = C @ inv @ D.T
    return LinkDatum(l.chart, l.rG, l.rH, l.rE, l.rF, l.k, m)


def compose_links(l1: LinkDatum, l2: LinkDatum) -> LinkDatum:
    """``[ℓ₂]∘[ℓ₁]`` for ``ℓ₁`` between E−F and G−H and ``ℓ₂`` between G−H and J−K'.

    Stabilizer ``L ⊕ M ⊕ G ⊕ H`` (ℓ₁'s, ℓ₂'s, then G and H); the block matrix is
    ``ℓ₁ ⊕ ℓ₂`` with domain order ``E,K',L,M,G,H`` and codomain ``F,J,L,M,G,H``.
    """
    if l1.chart != l2.chart:
        raise RankMismatch("links on different charts")
    if (l1.rG, l1.rH) != (l2.rE, l2.rF):
        raise RankMismatch(f"cannot compose: ({l1.rG},{l1.rH}) vs ({l2.rE},{l2.rF})")
    rE, rF, rG, rH, L = l1.rE, l1.rF, l1.rG, l1.rH, l1.k
    rJ, rKp, M = l2.rG, l2.rH, l2.k
    dom = [("E", rE), ("Kp", rKp), ("L", L), ("M", M), ("G", rG), ("H", rH)]
    cod = [("F", rF), ("J", rJ), ("L", L), ("M", M), ("G", rG), ("H", rH)]
    n = sum(r for _, r in dom)

    def idx(layout, names):
        off, out = 0, {}
        for nm, r in layout:
            out[nm] = list(range(off, off + r))
            off += r
        return sum((out[nm] for nm in names), [])

    m = np.zeros(l1.chart.shape + (n, n), dtype=complex)
    c1 = idx(dom, ["E", "H", "L"])
    r1 = idx(cod, ["F", "G", "L"])
    c2 = idx(dom, ["G", "Kp", "M"])
    r2 = idx(cod, ["H", "J", "M"])
    m[..., np.ix_(r1, c1)[0], np.ix_(r1, c1)[1]] = l1.map
    m[..., np.ix_(r2, c2)[0], np.ix_(r2, c2)[1]] = l2.map
    return LinkDatum(l1.chart, rE, rF, rJ, rKp, L + M + rG + rH, m)


def pad_link(l: LinkDatum, rX: int, rY: int) -> LinkDatum:
    """From a link between E−F and G−H, the link between (E⊕X)−(F⊕Y) and (G⊕X)−(H⊕Y).

    Domain ``(E⊕X)⊕(H⊕Y)⊕K``, codomain ``(F⊕Y)⊕(G⊕X)⊕K``; identity on X and Y.
    """
    rE, rF, rG, rH, k = l.ranks
    n = l.size + rX + rY
    dom = [("E", rE), ("X", rX), ("H", rH), ("Y", rY), ("K", k)]
    cod = [("F", rF), ("Y", rY), ("G", rG), ("X", rX), ("K", k)]
    src = [("E", rE), ("H", rH), ("K", k)]
    dst = [("F", rF), ("G", rG), ("K", k)]
    m = np.zeros(l.chart.shape + (n, n), dtype=complex)
    dpos, cpos = _positions(dom), _positions(cod)
    cols = sum((dpos[nm] for nm, _ in src), [])
    rows = sum((cpos[nm] for nm, _ in dst), [])
    m[..., np.ix_(rows, cols)[0], np.ix_(rows, cols)[1]] = l.map
    for nm in ("X", "Y"):
        for a, b in zip(cpos[nm], dpos[nm]):
            m[..., a, b] = 1.0
    return LinkDatum(l.chart, rE + rX, rF + rY, rG + rX, rH + rY, k, m)


def _positions(layout):
    off, out = 0, {}
    for nm, r in layout:
        out[nm] = list(range(off, off + r))
        off += r
    return out


def absorb_common(l: LinkDatum, e_index: Sequence[int], f_index: Sequence[int]) -> LinkDatum:
    """Move a summand ``S`` common to ``E`` and ``F`` into the stabilizer.

    ``e_index``/``f_index`` are the positions (within E resp. F) of the
    summand, listed in matching order.  The result is a link between
    ``E/S − F/S`` and ``G − H`` (same isomorphism, relabeled blocks).
    """
    rE, rF, rG, rH, k = l.ranks
    s = len(e_index)
    if len(f_index) != s:
        raise RankMismatch("common summand has different sizes in E and F")
    e_keep = [i for i in range(rE) if i not in set(e_index)]
    f_keep = [i for i in range(rF) if i not in set(f_index)]
    # domain E⊕H⊕K  -> (E_keep) ⊕ H ⊕ (S ⊕ K)
    dom_order = e_keep + list(range(rE, rE + rH)) + list(e_index) + list(range(rE + rH, rE + rH + k))
    cod_order = f_keep + list(range(rF, rF + rG)) + list(f_index) + list(range(rF + rG, rF + rG + k))
    m = l.map[..., cod_order, :][..., :, dom_order]
    return LinkDatum(l.chart, rE - s, rF - s, rG, rH, k + s, m)


def link_from_isomorphisms(chart: TorusChart, g_plus: np.ndarray, g_minus: np.ndarray) -> LinkDatum:
    """Link between ``X⁺ − X⁻`` and ``Y⁺ − Y⁻`` from isomorphisms ``g^± : X^± → Y^±``.

    ``ℓ(x⁺, y⁻) = ((g⁻)⁻¹ y⁻, g⁺ x⁺)``: domain ``X⁺⊕Y⁻``, codomain ``X⁻⊕Y⁺``.
    """
    g_plus = np.asarray(g_plus, dtype=complex)
    g_minus = np.asarray(g_minus, dtype=complex)
    p, q = g_plus.shape[-1], g_minus.shape[-1]
    if g_plus.shape[-2] != p or g_minus.shape[-2] != q:
        raise RankMismatch("isomorphisms must be square")
    n = p + q
    m = np.zeros(chart.shape + (n, n), dtype=complex)
    if q:
        _check_invertible(g_minus, "isomorphism")
        m[..., :q, p:] = np.linalg.inv(g_minus)
    if p:
        m[..., q:, :p] = g_plus
    return LinkDatum(chart, p, q, p, q, 0, m)


def zero_link(chart: TorusChart, m: np.ndarray, r: int) -> LinkDatum:
    """Link between ``X⁺ − X⁻`` and ``0 − 0`` given by an isomorphism ``X⁺ → X⁻``."""
    return LinkDatum(chart, r, r, 0, 0, 0, np.asarray(m, dtype=complex))


# ---------------------------------------------------------------------------
# Exact sequences and complexes
# ---------------------------------------------------------------------------


def _metric_sqrt(h: Optional[np.ndarray], chart: TorusChart, r: int):
    """Cholesky factor ``L`` (h = L L†) and its inverse, identity if ``h`` is None."""
    if h is None or r == 0:
        I = _eye_field(chart, r)
        return I, I
    L = np.linalg.cholesky(h)
    return L, np.linalg.inv(L)


def metric_pinv(m: np.ndarray, h_src, h_dst, chart: TorusChart) -> np.ndarray:
    """Pseudo-inverse of ``m : A → B`` for metrics ``h_src`` on A, ``h_dst`` on B."""
    ra, rb = m.shape[-1], m.shape[-2]
    La, La_inv = _metric_sqrt(h_src, chart, ra)
    Lb, Lb_inv = _metric_sqrt(h_dst, chart, rb)
    # orthonormal coordinates: a = La^{-†} a', b' = Lb^† b
    mo = _dagger(Lb) @ m @ _dagger(La_inv)
    return _dagger(La_inv) @ pinv_field(mo) @ _dagger(Lb)


def check_exact(maps: Sequence[np.ndarray], dims: Sequence[int], tol: float = 1e-10):
    """Pointwise exactness ``0 → V₀ → V₁ → … → 0`` by composition and rank counts."""
    ranks = []
    for i, m in enumerate(maps):
        ranks.append(constant_rank(m, f"map {i}"))
    for i in range(len(maps) - 1):
        comp = maps[i + 1] @ maps[i]
        if comp.size == 0:
            continue
        scale = 1.0 + np.max(np.abs(maps[i + 1])) * np.max(np.abs(maps[i]))
        if np.max(np.abs(comp)) > tol * scale:
            raise NotExact(f"maps {i} and {i + 1} do not compose to zero")
    for j, dim in enumerate(dims):
        in_rank = ranks[j - 1] if j >= 1 else 0
        out_rank = ranks[j] if j < len(ranks) else 0
        if in_rank + out_rank != dim:
            raise NotExact(f"sequence not exact at term {j} (rank in {in_rank}, out {out_rank}, dim {dim})")


def link_from_exact_sequence(
    maps: Sequence[np.ndarray], chart: TorusChart, metrics: Optional[Sequence[Optional[np.ndarray]]] = None
) -> LinkDatum:
    """Link from ``0 → E →a G →b H →c F → 0`` between ``E − F`` and ``G − H``.

    ``ℓ(e, η) = (c η, a e + b⁺ η)`` where ``b⁺`` is the metric pseudo-inverse
    of ``b`` (orthocomplement splitting).  A single map ``[a]`` is read as
    ``0 → E → G → 0`` (link ``a`` between E − 0 and G − 0).
    """
    maps = [np.asarray(m, dtype=complex) for m in maps]
    if len(maps) == 1:
        a = maps[0]
        check_exact([a], [a.shape[-1], a.shape[-2]])
        return LinkDatum(chart, a.shape[-1], 0, a.shape[-2], 0, 0, a)
    if len(maps) != 3:
        raise ValueError("expected the three maps of 0 → E → G → H → F → 0")
    a, b, c = maps
    rE, rG, rH, rF = a.shape[-1], a.shape[-2], b.shape[-2], c.shape[-2]
    if b.shape[-1] != rG or c.shape[-1] != rH:
        raise RankMismatch("maps do not chain")
    check_exact([a, b, c], [rE, rG, rH, rF])
    metrics = list(metrics) if metrics is not None else [None] * 4
    bplus = metric_pinv(b, metrics[1], metrics[2], chart)
    n = rE + rH
    m = np.zeros(chart.shape + (n, n), dtype=complex)
    m[..., :rF, rE:] = c
    m[..., rF:, :rE] = a
    m[..., rF:, rE:] = bplus
    out = LinkDatum(chart, rE, rF, rG, rH, 0, m)
    _check_invertible(m, "exact-sequence link")
    return out


@dataclass(frozen=True, eq=False)
class BundleComplex:
    """``0 → E^{d₀} → E^{d₀+1} → … → 0`` with ``maps[i] : E^{d₀+i} → E^{d₀+i+1}``.

    ``first_degree`` fixes the parity bookkeeping (default 1: the first stage
    is odd).  Stage metrics default to the identity.
    """

    chart: TorusChart
    ranks: Tuple[int, ...]
    maps: Tuple[np.ndarray, ...]
    metrics: Optional[Tuple[Optional[np.ndarray], ...]] = None
    first_degree: int = 1

    def __post_init__(self):
        ranks = tuple(int(r) for r in self.ranks)
        object.__setattr__(self, "ranks", ranks)
        maps = tuple(np.asarray(m, dtype=complex) for m in self.maps)
        if len(maps) != len(ranks) - 1:
            raise RankMismatch("need len(ranks) - 1 maps")
        for i, m in enumerate(maps):
            if m.shape != self.chart.shape + (ranks[i + 1], ranks[i]):
                raise RankMismatch(f"map {i} has shape {m.shape}")
        for i in range(len(maps) - 1):
            comp = maps[i + 1] @ maps[i]
            if comp.size and np.max(np.abs(comp)) > 1e-10 * (1 + np.max(np.abs(maps[i])) * np.max(np.abs(maps[i + 1]))):
                raise NotExact(f"v_{i + 1} v_{i} != 0")
        object.__setattr__(self, "maps", maps)

    def degree(self, i: int) -> int:
        return self.first_degree + i

    def metric(self, i: int):
        if self.metrics is None:
            return None
        return self.metrics[i]

    def incoming(self, i: int) -> np.ndarray:
        if i == 0:
            return np.zeros(self.chart.shape + (self.ranks[0], 0), dtype=complex)
        return self.maps[i - 1]

    def outgoing(self, i: int) -> np.ndarray:
        if i == len(self.ranks) - 1:
            return np.zeros(self.chart.shape + (0, self.ranks[i]), dtype=complex)
        return self.maps[i]

    def orthonormalizer(self, i: int):
        return _metric_sqrt(self.metric(i), self.chart, self.ranks[i])

    def cohomology_dims(self) -> Tuple[int, ...]:
        out = []
        for i, r in enumerate(self.ranks):
            rin = constant_rank(self.incoming(i), f"v_{i - 1}") if i else 0
            rout = constant_rank(self.outgoing(i), f"v_{i}") if i < len(self.ranks) - 1 else 0
            out.append(r - rin - rout)
        return tuple(out)

    def adjoint(self, i: int) -> np.ndarray:
        """Metric adjoint ``v_i* : E^{i+1} → E^i``."""
        m = self.outgoing(i)
        h_src = self.metric(i)
        h_dst = self.metric(i + 1) if i + 1 < len(self.ranks) else None
        hs = _eye_field(self.chart, m.shape[-1]) if h_src is None else h_src
        hd = _eye_field(self.chart, m.shape[-2]) if h_dst is None else h_dst
        return np.linalg.solve(hs, _dagger(m) @ hd) if m.shape[-1] else np.zeros(self.chart.shape + (0, m.shape[-2]))


def harmonic_bases(cx: BundleComplex) -> List[np.ndarray]:
    """Pointwise bases of ``Ker v_i ∩ (Im v_{i−1})^⊥`` (arbitrary gauge, h-orthonormal)."""
    dims = cx.cohomology_dims()
    out = []
    for i, r in enumerate(cx.ranks):
        L, Linv = cx.orthonormalizer(i)
        # orthonormal coordinates y = L^† x
        vin = cx.incoming(i)
        vout = cx.outgoing(i)
        rows = []
        if vout.shape[-2]:
            Lo, _ = _metric_sqrt(cx.metric(i + 1) if i + 1 < len(cx.ranks) else None, cx.chart, vout.shape[-2])
            rows.append(_dagger(Lo) @ vout @ _dagger(Linv))
        if vin.shape[-1]:
            Li, Linv_i = _metric_sqrt(cx.metric(i - 1), cx.chart, vin.shape[-1])
            vin_o = _dagger(L) @ vin @ _dagger(Linv_i)
            rows.append(_dagger(vin_o))
        if rows:
            stacked = np.concatenate(rows, axis=-2)
            _, _, vh = np.linalg.svd(stacked)
            basis = _dagger(vh)[..., :, r - dims[i] :] if dims[i] else np.zeros(cx.chart.shape + (r, 0), dtype=complex)
        else:
            basis = _eye_field(cx.chart, r)
        # back to original coordinates: x = L^{-†} y
        out.append(_dagger(Linv) @ basis)
    return out


def cohomology_frames(cx: BundleComplex, smooth: bool = True) -> List[np.ndarray]:
    """Frames ``h_i : H^i → E^i`` of the harmonic representatives, smoothed over the chart."""
    from .frames import smooth_frames

    bases = harmonic_bases(cx)
    if not smooth:
        return bases
    out = []
    for i, B in enumerate(bases):
        L, Linv = cx.orthonormalizer(i)
        Bo = _dagger(L) @ B  # orthonormal coordinates
        W = smooth_frames(cx.chart, Bo) if B.shape[-1] else Bo
        out.append(_dagger(Linv) @ W)
    return out


def _parity_layout(cx: BundleComplex, sizes: Sequence[int]):
    """Offsets of each stage inside the ``+``/``−`` direct sums."""
    plus, minus = [], []
    offp = offm = 0
    where = {}
    for i, r in enumerate(sizes):
        if cx.degree(i) % 2 == 0:
            where[i] = ("+", offp)
            offp += r
        else:
            where[i] = ("-", offm)
            offm += r
    return where, offp, offm


def link_from_complex(cx: BundleComplex, h_frames: Optional[Sequence[np.ndarray]] = None) -> Tuple[LinkDatum, List[np.ndarray]]:
    """Link ``v⁺ + w⁺ + p⁺ + h⁻ : E⁺ ⊕ H⁻ → E⁻ ⊕ H⁺`` between ``E⁺ − E⁻`` and ``H⁺ − H⁻``.

    ``w_i`` is the metric pseudo-inverse of ``v_{i−1}``; ``h_i`` are the given
    (or smoothed harmonic) frames and ``p_i`` the matching projections that kill
    ``Im v_{i−1}``.  Returns the link and the frames used.
    """
    chart = cx.chart
    n_st = len(cx.ranks)
    frames = list(h_frames) if h_frames is not None else cohomology_frames(cx)
    hdims = [f.shape[-1] for f in frames]
    if tuple(hdims) != cx.cohomology_dims():
        raise RankJump(f"frames of dims {hdims} do not match cohomology {cx.cohomology_dims()}")
    ewhere, rEp, rEm = _parity_layout(cx, cx.ranks)
    hwhere, rHp, rHm = _parity_layout(cx, hdims)
    harm = harmonic_bases(cx)
    # domain E⁺ ⊕ H⁻ ; codomain E⁻ ⊕ H⁺
    n = rEp + rHm
    if n != rEm + rHp:
        raise RankMismatch("Euler characteristics of E and H differ")
    m = np.zeros(chart.shape + (n, n), dtype=complex)

    def dom_E(i):
        return slice(ewhere[i][1], ewhere[i][1] + cx.ranks[i])

    def dom_H(i):
        return slice(rEp + hwhere[i][1], rEp + hwhere[i][1] + hdims[i])

    def cod_E(i):
        return slice(ewhere[i][1], ewhere[i][1] + cx.ranks[i])

    def cod_H(i):
        return slice(rEm + hwhere[i][1], rEm + hwhere[i][1] + hdims[i])

    for i in range(n_st):
        even = cx.degree(i) % 2 == 0
        if even:
            if i + 1 < n_st:  # v_i : E^i -> E^{i+1} (odd)
                m[..., cod_E(i + 1), dom_E(i)] += cx.maps[i]
            if i >= 1:  # w_i : E^i -> E^{i-1} (odd)
                w = metric_pinv(cx.maps[i - 1], cx.metric(i - 1), cx.metric(i), chart)
                m[..., cod_E(i - 1), dom_E(i)] += w
            if hdims[i]:  # p_i : E^i -> H^i
                m[..., cod_H(i), dom_E(i)] += _projection(frames[i], harm[i], cx, i)
        else:
            if hdims[i]:  # h_i : H^i -> E^i
                m[..., cod_E(i), dom_H(i)] += frames[i]
    link = LinkDatum(chart, rEp, rEm, rHp, rHm, 0, m)
    _check_invertible(m, "complex link")
    return link, frames


def _projection(h: np.ndarray, harm: np.ndarray, cx: BundleComplex, i: int) -> np.ndarray:
    """``p_i = (W† h_i)⁻¹ W†`` in metric terms, with W a basis of the harmonic space."""
    hm = cx.metric(i)
    hm = _eye_field(cx.chart, cx.ranks[i]) if hm is None else hm
    Wt = _dagger(harm) @ hm
    return np.linalg.solve(Wt @ h, Wt)


def link_from_hodge_sequence(cx: BundleComplex, h_frames: Sequence[np.ndarray]) -> LinkDatum:
    """Link between ``H⁺ − H⁻`` and ``E⁺ − E⁻`` from ``0 → H⁺ → E⁺ → E⁻ → H⁻ → 0``.

    The middle map is ``v⁺ + (v⁻)*``; ``h⁺`` and ``p⁻`` are the Hodge
    inclusion/projection.  The frames must be harmonic (metric-orthonormal).
    """
    chart = cx.chart
    hdims = [f.shape[-1] for f in h_frames]
    ewhere, rEp, rEm = _parity_layout(cx, cx.ranks)
    hwhere, rHp, rHm = _parity_layout(cx, hdims)
    hplus = np.zeros(chart.shape + (rEp, rHp), dtype=complex)
    D = np.zeros(chart.shape + (rEm, rEp), dtype=complex)
    pminus = np.zeros(chart.shape + (rHm, rEm), dtype=complex)
    n_st = len(cx.ranks)
    for i in range(n_st):
        so, sr = ewhere[i][1], cx.ranks[i]
        ho, hr = hwhere[i][1], hdims[i]
        if cx.degree(i) % 2 == 0:
            hplus[..., so : so + sr, ho : ho + hr] = h_frames[i]
            if i + 1 < n_st:
                to = ewhere[i + 1][1]
                D[..., to : to + cx.ranks[i + 1], so : so + sr] += cx.maps[i]
            if i >= 1:
                to = ewhere[i - 1][1]
                D[..., to : to + cx.ranks[i - 1], so : so + sr] += cx.adjoint(i - 1)
        else:
            hm = cx.metric(i)
            hm = _eye_field(chart, sr) if hm is None else hm
            pminus[..., ho : ho + hr, so : so + sr] = _dagger(h_frames[i]) @ hm
    return link_from_exact_sequence([hplus, D, pminus], chart, metrics=None)


# ---------------------------------------------------------------------------
# Invariants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkInvariants:
    chclass: FormClass
    windings: Tuple[int, ...]

    def distance(self, other: "LinkInvariants") -> Tuple[float, int]:
        dc = (self.chclass - other.chclass).max_abs()
        dw = int(max((abs(a - b) for a, b in zip(self.windings, other.windings)), default=0))
        return dc, dw


def _sum_connection(chart: TorusChart, parts: Sequence[Optional[Connection]], ranks: Sequence[int]) -> Optional[Connection]:
    conns = []
    for c, r in zip(parts, ranks):
        if r == 0:
            continue
        if c is None:
            c = Connection.trivial(chart, r)
        if c.rank != r:
            raise RankMismatch(f"connection rank {c.rank} does not match bundle rank {r}")
        conns.append(Connection(chart, c.rank, c.coeff))
    if not conns:
        return None
    return direct_sum(*conns)


def winding_numbers(m: np.ndarray, chart: TorusChart) -> Tuple[int, ...]:
    """Winding of ``det m`` along each coordinate loop through the grid origin."""
    if m.shape[-1] == 0:
        return (0,) * chart.dim
    det = np.linalg.det(m)
    out = []
    for ax in range(chart.dim):
        idx = [0] * chart.dim
        idx[ax] = slice(None)
        line = det[tuple(idx)]
        ratio = np.roll(line, -1) / line
        w = np.sum(np.angle(ratio)) / (2 * np.pi)
        out.append(int(np.rint(w)))
    return tuple(out)


def link_transgression(l: LinkDatum, connections: Mapping[str, Optional[Connection]], order: int = 8):
    """``ch̃(∇_E⊕∇_H⊕∇_K, ℓ*(∇_F⊕∇_G⊕∇_K))`` as a form (None for the empty link)."""
    rE, rF, rG, rH, k = l.ranks
    K = connections.get("K")
    dom = _sum_connection(l.chart, [connections.get("E"), connections.get("H"), K], [rE, rH, k])
    cod = _sum_connection(l.chart, [connections.get("F"), connections.get("G"), K], [rF, rG, k])
    if dom is None:
        return None
    pulled = gauge_transform(cod, l.map)
    return cs_transgression(ConnectionPath.linear(dom, pulled, order))


def link_invariants(l: LinkDatum, connections: Mapping[str, Optional[Connection]] | None = None, order: int = 8) -> LinkInvariants:
    """Computable invariants (chclass, windings) of a link.

    ``connections`` maps ``'E','F','G','H'`` (and optionally ``'K'``) to
    connections on those bundles; missing entries default to the trivial
    connection.
    """
    connections = connections or {}
    form = link_transgression(l, connections, order)
    if form is None:
        cls = FormClass(1, {}, l.chart.dim)
    else:
        cls = periods(form)
    return LinkInvariants(cls, winding_numbers(l.map, l.chart))


def weakly_equivalent(l1: LinkDatum, l2: LinkDatum, connections, tol: float = 1e-8) -> bool:
    a = link_invariants(l1, connections)
    b = link_invariants(l2, connections)
    dc, dw = a.distance(b)
    return dc < tol and dw == 0
