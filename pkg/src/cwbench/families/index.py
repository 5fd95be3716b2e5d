"""Canonical links, the relative direct image and the odd-fiber map ``π_←``.

All constructions work per base grid point on the truncated vertical complex.
For the even/odd parity blocks we use *parity coordinates*: a vector of
``E⁺ ⊕ η⁺`` is given by its even entries of the truncated space followed by
``η⁺``; likewise for ``E⁻ ⊕ η⁻``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..connections import Connection, adjoint_connection, direct_sum, gauge_transform
from ..errors import AugmentationFailed, DimensionJump, RankMismatch
from ..frames import polar_unitary
from ..kclasses import RelKGenerator
from ..links import (
    LinkDatum,
    absorb_common,
    compose_links,
    invert_link,
    link_from_exact_sequence,
    link_from_isomorphisms,
    pad_link,
    zero_link,
)
from .kernels import (
    KERNEL_TOL,
    FramePair,
    choose_cutoff,
    compressed_connection,
    dirac_abs_spectrum,
    harmonic_kernels,
    smooth_pair,
    spectral_bases,
)
from .vertical import (
    TorusFibration,
    VerticalComplex,
    adjoint_vertical_complex,
    build_vertical_complex,
    convolution_matrices,
)

PATH_STEPS = 32
AUGMENT_SV = 1e-6
AUGMENT_RETRIES = 8
AUGMENT_WINDOW = 0.5  # singular values below this count as low-lying cokernel directions


def _dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


# ---------------------------------------------------------------------------
# Suitable data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SuitableData:
    """Finite-rank perturbation ``(η⁺, η⁻, ψ)`` of the fibral Dirac operator.

    ``psi`` has shape ``(nbase, M⁻ + η⁻, M⁺ + η⁺)`` in parity coordinates and
    is added to ``D⁺ ⊕ 0``.  ``η^±`` carry trivial connections and identity
    metrics.
    """

    eta_plus: int = 0
    eta_minus: int = 0
    psi: Optional[np.ndarray] = None

    def matrix(self, vc: VerticalComplex) -> np.ndarray:
        nb = vc.fib.nbase
        Mp, Mm = len(vc.space.even), len(vc.space.odd)
        shape = (nb, Mm + self.eta_minus, Mp + self.eta_plus)
        if self.psi is None:
            return np.zeros(shape, dtype=complex)
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape != shape:
            raise RankMismatch(f"psi has shape {psi.shape}, expected {shape}")
        return psi


def perturbed_operator(vc: VerticalComplex, s: SuitableData, dirac_plus: np.ndarray | None = None) -> np.ndarray:
    """``𝒟⁺_ψ = D⁺ ⊕ 0 + ψ : E⁺⊕η⁺ → E⁻⊕η⁻`` in parity coordinates."""
    Dp = vc.dirac_plus if dirac_plus is None else dirac_plus
    out = s.matrix(vc).copy()
    out[:, : Dp.shape[1], : Dp.shape[2]] += Dp
    return out


def _kernel_cokernel(op: np.ndarray, tol: float = KERNEL_TOL) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pointwise bases of ``Ker op`` and ``Ker op†`` and the singular values."""
    u, s, vh = np.linalg.svd(op, full_matrices=True)
    nb, m, n = op.shape
    full = np.zeros((nb, min(m, n)))
    full[:, : s.shape[1]] = s
    small = full < tol * (1.0 + full[:, :1])
    rank = min(m, n) - small.sum(axis=1)
    if rank.min() != rank.max():
        raise DimensionJump(f"rank of the perturbed operator varies ({rank.min()}..{rank.max()})")
    rk = int(rank[0])
    return _dagger(vh)[:, :, rk:], u[:, :, rk:], full


def is_suitable(vc: VerticalComplex, s: SuitableData, tol: float = KERNEL_TOL) -> bool:
    try:
        _kernel_cokernel(perturbed_operator(vc, s), tol)
    except DimensionJump:
        return False
    return True


def suitable_kernel_frames(vc: VerticalComplex, s: SuitableData, tol: float = KERNEL_TOL) -> FramePair:
    """Smooth frames of ``Ker 𝒟⁺_ψ ⊂ E⁺⊕η⁺`` and ``Ker (𝒟⁺_ψ)† ⊂ E⁻⊕η⁻`` (parity coordinates)."""
    kp, km, _ = _kernel_cokernel(perturbed_operator(vc, s), tol)
    return smooth_pair(vc.fib.base, FramePair(kp, km))


def parity_coordinates(vc: VerticalComplex, frames: FramePair) -> FramePair:
    """Restrict embedded frames to their even (resp. odd) rows."""
    return FramePair(frames.plus[:, vc.space.even, :], frames.minus[:, vc.space.odd, :])


def embedded_frames(vc: VerticalComplex, frames: FramePair) -> FramePair:
    """Inverse of :func:`parity_coordinates` for frames without an η part."""
    sp = vc.space
    nb = vc.fib.nbase
    out = []
    for rows, W in ((sp.even, frames.plus), (sp.odd, frames.minus)):
        full = np.zeros((nb, sp.dim, W.shape[-1]), dtype=complex)
        full[:, rows, :] = W[:, : len(rows), :]
        out.append(full)
    return FramePair(*out)


# ---------------------------------------------------------------------------
# Canonical link along the straight path between two vertical complexes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CanonicalLink:
    """Link between ``(K₀⁺⊕η₀⁻) − (K₀⁻⊕η₀⁺)`` and ``(K₁⁺⊕η₁⁻) − (K₁⁻⊕η₁⁺)``."""

    link: LinkDatum
    frames0: FramePair
    frames1: FramePair
    augmentation_rank: int


def _extend_psi(vc, s: SuitableData, ep0: int, em0: int, ep1: int, em1: int, end: int) -> np.ndarray:
    """ψ of one end, extended by zero to ``E⁺⊕η₀⁺⊕η₁⁺ → E⁻⊕η₀⁻⊕η₁⁻``."""
    Mp, Mm = len(vc.space.even), len(vc.space.odd)
    nb = vc.fib.nbase
    out = np.zeros((nb, Mm + em0 + em1, Mp + ep0 + ep1), dtype=complex)
    psi = s.matrix(vc)
    rows = list(range(Mm)) + (list(range(Mm, Mm + em0)) if end == 0 else list(range(Mm + em0, Mm + em0 + em1)))
    cols = list(range(Mp)) + (list(range(Mp, Mp + ep0)) if end == 0 else list(range(Mp + ep0, Mp + ep0 + ep1)))
    out[:, np.ix_(rows, cols)[0], np.ix_(rows, cols)[1]] = psi
    return out


def _extend_frames(W: np.ndarray, M: int, e0: int, e1: int, end: int) -> np.ndarray:
    """Frames in ``E⊕η_end`` embedded in ``E⊕η₀⊕η₁``, followed by the other η's unit vectors."""
    nb, _, h = W.shape
    other = e1 if end == 0 else e0
    out = np.zeros((nb, M + e0 + e1, h + other), dtype=complex)
    if end == 0:
        out[:, : M + e0, :h] = W
        for j in range(e1):
            out[:, M + e0 + j, h + j] = 1.0
    else:
        out[:, :M, :h] = W[:, :M, :]
        out[:, M + e0 : M + e0 + e1, :h] = W[:, M:, :]
        for j in range(e0):
            out[:, M + j, h + j] = 1.0
    return out


def _augmented_kernel(op: np.ndarray, phi: np.ndarray) -> Tuple[np.ndarray, float]:
    """Pointwise basis of ``Ker [op | φ]`` and the smallest singular value."""
    nb = op.shape[0]
    aug = np.concatenate([op, np.broadcast_to(phi, (nb,) + phi.shape)], axis=2)
    u, s, vh = np.linalg.svd(aug, full_matrices=True)
    m = aug.shape[1]
    return _dagger(vh)[:, :, m:], float(np.min(s[:, -1]))


def canonical_link(
    vc0: VerticalComplex,
    vc1: VerticalComplex,
    s0: SuitableData | None = None,
    s1: SuitableData | None = None,
    frames0: FramePair | None = None,
    frames1: FramePair | None = None,
    steps: int = PATH_STEPS,
    seed: int = 0,
) -> CanonicalLink:
    """Canonical link along ``t ↦ (1−t)d₀ + t d₁`` with suitable data at both ends.

    ``frames0``/``frames1`` are smooth kernel frames of the perturbed operators
    in parity coordinates (computed when omitted).  A constant random map
    ``φ : C^L → E⁻⊕η⁻`` makes ``[𝒟̃⁺_t | φ]`` surjective along the path; its
    kernel ``G_t`` is framed at ``t = 0`` and transported to ``t = 1``.
    """
    s0 = s0 or SuitableData()
    s1 = s1 or SuitableData()
    if frames0 is None:
        frames0 = suitable_kernel_frames(vc0, s0)
    if frames1 is None:
        frames1 = suitable_kernel_frames(vc1, s1)
    base = vc0.fib.base
    nb = vc0.fib.nbase
    sp = vc0.space
    Mp, Mm = len(sp.even), len(sp.odd)
    ep0, em0, ep1, em1 = s0.eta_plus, s0.eta_minus, s1.eta_plus, s1.eta_minus
    ep, em = ep0 + ep1, em0 + em1
    psi0 = _extend_psi(vc0, s0, ep0, em0, ep1, em1, 0)
    psi1 = _extend_psi(vc1, s1, ep0, em0, ep1, em1, 1)
    D0, D1 = vc0.dirac_plus, vc1.dirac_plus

    def op(t: float) -> np.ndarray:
        out = (1 - t) * psi0 + t * psi1
        out[:, :Mm, :Mp] += (1 - t) * D0 + t * D1
        return out

    ts = np.linspace(0.0, 1.0, steps + 1)
    ops = [op(t) for t in ts]
    # the augmentation lives in the span of the low-lying cokernel directions
    # met along the sampled path; its rank starts at the largest cokernel
    L, low = 0, []
    for o in ops:
        u, s, _ = np.linalg.svd(o, full_matrices=True)
        full = np.zeros((nb, o.shape[1]))
        full[:, : s.shape[1]] = s
        L = max(L, int(np.max(np.sum(full < AUGMENT_SV * 10, axis=1))))
        sel = full < AUGMENT_WINDOW
        for j in range(nb):
            low.append(u[j][:, sel[j]])
    stacked = np.concatenate(low, axis=1) if low else np.zeros((Mm + em, 0))
    if stacked.shape[1]:
        q, sq, _ = np.linalg.svd(stacked, full_matrices=False)
        Q = q[:, sq > 1e-8 * sq[0]]
    else:
        Q = np.eye(Mm + em, dtype=complex)
    rng = np.random.default_rng(seed)
    for _attempt in range(AUGMENT_RETRIES):
        if L > Q.shape[1]:
            Q = np.eye(Mm + em, dtype=complex)
        z = rng.standard_normal((Q.shape[1], L)) + 1j * rng.standard_normal((Q.shape[1], L))
        phi = Q @ z / np.sqrt(2 * max(Q.shape[1], 1))
        bases, smin = [], np.inf
        for o in ops:
            B, sm = _augmented_kernel(o, phi)
            bases.append(B)
            smin = min(smin, sm)
        if smin > AUGMENT_SV:
            break
        L += 1
    else:
        raise AugmentationFailed(f"no surjective augmentation found up to rank {L}")
    # frame G_0 smoothly over the base, transport along t
    G0 = smooth_pair(base, FramePair(bases[0], np.zeros((nb, bases[0].shape[1], 0)))).plus
    W = G0
    for B in bases[1:]:
        W = B @ polar_unitary(_dagger(B) @ W)
    G1 = W

    def end_link(G, frames: FramePair, end: int) -> LinkDatum:
        e_p = _extend_frames(frames.plus, Mp, ep0, ep1, end)
        e_m = _extend_frames(frames.minus, Mm, em0, em1, end)
        n_top = Mp + ep
        a = _dagger(G[:, :n_top, :]) @ e_p
        b = G[:, n_top:, :]
        c = _dagger(e_m) @ phi
        l = link_from_exact_sequence([a, b, c], base)
        # pad with X = η⁻ = η₀⁻⊕η₁⁻ and Y = η⁺ = η₀⁺⊕η₁⁺, then absorb the other end's η
        l = pad_link(l, em, ep)
        kp, km = frames.plus.shape[-1], frames.minus.shape[-1]
        if end == 0:
            e_idx = list(range(kp, kp + ep1)) + list(range(kp + ep1 + em0, kp + ep1 + em))
            f_idx = list(range(km + em1 + ep0, km + em1 + ep)) + list(range(km, km + em1))
        else:
            e_idx = list(range(kp, kp + ep0)) + list(range(kp + ep0, kp + ep0 + em0))
            f_idx = list(range(km + em0, km + em0 + ep0)) + list(range(km, km + em0))
        return absorb_common(l, e_idx, f_idx)

    L0 = end_link(G0, frames0, 0)
    L1 = end_link(G1, frames1, 1)
    return CanonicalLink(compose_links(L0, invert_link(L1)), frames0, frames1, L)


# ---------------------------------------------------------------------------
# Relative direct image
# ---------------------------------------------------------------------------


def multiplication_operator(vc: VerticalComplex, f: np.ndarray) -> np.ndarray:
    """Truncated operator of pointwise multiplication by an endomorphism field on the total space."""
    fib, sp = vc.fib, vc.space
    Mf = convolution_matrices(f, fib, sp, check="isomorphism field")
    nsub = len(sp.subsets)
    nb = fib.nbase
    return np.einsum("pq,bij->bpiqj", np.eye(nsub), Mf).reshape(nb, sp.dim, sp.dim)


@dataclass(frozen=True, eq=False)
class RelativeDirectImage:
    """Relative generator on the base together with the data it was built from."""

    generator: RelKGenerator
    link: LinkDatum
    gm_E: Tuple[Connection, Connection]
    gm_F: Tuple[Connection, Connection]


def _gm(vc: VerticalComplex, frames: FramePair) -> Tuple[Optional[Connection], Optional[Connection]]:
    return tuple(compressed_connection(vc, W) if W.shape[-1] else None for W in (frames.plus, frames.minus))


def _block_connection(base, parts: Sequence[Tuple[Optional[Connection], int]]) -> Connection:
    conns = []
    for c, r in parts:
        if r == 0:
            continue
        conns.append(Connection.trivial(base, r) if c is None else Connection(base, c.rank, c.coeff))
    if not conns:
        raise DimensionJump("direct image has rank zero")
    return direct_sum(*conns)


def generator_from_link(link: LinkDatum, conn: dict, sign: int = 1) -> RelKGenerator:
    """``(E⊕H⊕K, F⊕G⊕K, ℓ)`` with the given connections (trivial on ``K``)."""
    base = link.chart
    rE, rF, rG, rH, k = link.ranks
    Eo = _block_connection(base, [(conn.get("E"), rE), (conn.get("H"), rH), (None, k)])
    Fo = _block_connection(base, [(conn.get("F"), rF), (conn.get("G"), rG), (None, k)])
    return RelKGenerator(Eo, Fo, link.map, sign)


def direct_image_rel(
    fib: TorusFibration, g: RelKGenerator, K: int = 8, steps: int = PATH_STEPS, seed: int = 0
) -> RelativeDirectImage:
    """Direct image of ``(E, ∇_E, F, ∇_F, f)`` as a relative generator on the base.

    The link ``H(∇_E) → H(f*∇_F)`` comes from the canonical link along the
    straight path; ``H(f*∇_F) ≅ H(∇_F)`` is induced by ``σ ↦ P(fσ)``.
    """
    vcE = build_vertical_complex(fib, g.E, K)
    pulled = gauge_transform(Connection(g.F.chart, g.F.rank, g.F.coeff), g.f)
    vcP = build_vertical_complex(fib, pulled, K)
    vcF = build_vertical_complex(fib, g.F, K)
    hE, hP, hF = harmonic_kernels(vcE), harmonic_kernels(vcP), harmonic_kernels(vcF)
    cl = canonical_link(vcE, vcP, frames0=parity_coordinates(vcE, hE), frames1=parity_coordinates(vcP, hP), steps=steps, seed=seed)
    mult = multiplication_operator(vcF, g.f)
    g_plus = _dagger(hF.plus) @ (mult @ hP.plus)
    g_minus = _dagger(hF.minus) @ (mult @ hP.minus)
    iso = link_from_isomorphisms(fib.base, g_plus, g_minus)
    link = compose_links(cl.link, iso)
    gmE, gmF = _gm(vcE, hE), _gm(vcF, hF)
    conn = {"E": gmE[0], "F": gmE[1], "G": gmF[0], "H": gmF[1]}
    gen = generator_from_link(link, conn, g.sign)
    return RelativeDirectImage(gen, link, gmE, gmF)


# ---------------------------------------------------------------------------
# Odd fibers: the map π_←
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LeftImage:
    generator: RelKGenerator
    link: LinkDatum
    iota: np.ndarray
    cutoff: float
    gm: Tuple[Connection, Connection]


def _metric_connection(c: Connection) -> Connection:
    return c if c.metric is not None else c.with_metric(c.metric_or_identity())


def pi_left(
    fib: TorusFibration, conn: Connection, K: int = 8, steps: int = PATH_STEPS, cutoff: float | None = None
) -> LeftImage:
    """``π_←(E, ∇) = (π_!⁻E, π_!⁺E, f)`` for odd-dimensional fibers.

    ``f`` inverts the isomorphism ``H⁺ ⊕ K → H⁻ ⊕ K`` obtained from the
    exact-sequence link ``H → F`` of a spectral subbundle ``F`` and the map
    ``F⁺₀ → F⁻₀`` given by ``*_Z`` followed by transport from ``∇*`` back to ``∇``.
    """
    if fib.n % 2 == 0:
        raise ValueError("pi_left needs odd-dimensional fibers")
    vc0 = build_vertical_complex(fib, conn, K)
    vc1 = adjoint_vertical_complex(vc0)
    base, sp, nb = fib.base, vc0.space, fib.nbase
    ts = np.linspace(0.0, 1.0, steps + 1)
    diracs = [(1 - t) * vc0.dirac + t * vc1.dirac for t in ts]
    if cutoff is None:
        cutoff = choose_cutoff([dirac_abs_spectrum(D) for D in diracs])
    spaces = [spectral_bases(D, sp, cutoff) for D in diracs]
    F0 = smooth_pair(base, spaces[0])
    H = harmonic_kernels(vc0)
    if H.dims[0] != H.dims[1]:
        raise DimensionJump("odd fibers must have rank H⁺ = rank H⁻")
    # ι : F⁺₀ → F⁻₀, star then transport t = 1 → 0 through F⁻_t
    S = sp.star[None] @ F0.plus
    for fr in spaces[-2::-1]:
        B = fr.minus
        S = B @ polar_unitary(_dagger(B) @ S)
    iota = _dagger(F0.minus) @ S
    # exact sequence 0 → H⁺ → F⁺ → F⁻ → H⁻ → 0
    a = _dagger(F0.plus) @ H.plus
    b = _dagger(F0.minus) @ (vc0.dirac @ F0.plus)
    c = _dagger(H.minus) @ F0.minus
    lH = link_from_exact_sequence([a, b, c], base)
    lz = zero_link(base, iota, F0.dims[0])
    l0 = compose_links(lH, lz)
    gm = _gm(vc0, H)
    k = l0.k
    m = l0.map  # H⁺ ⊕ K → H⁻ ⊕ K
    Eo = _block_connection(base, [(gm[1], H.dims[1]), (None, k)])
    Fo = _block_connection(base, [(gm[0], H.dims[0]), (None, k)])
    gen = RelKGenerator(Eo, Fo, np.linalg.inv(m))
    return LeftImage(gen, l0, iota, cutoff, gm)


def conjugate_connection(conn: Connection) -> Connection:
    """``∇*`` for the identity metric (unless one is attached), without metric."""
    star = adjoint_connection(_metric_connection(conn))
    return Connection(star.chart, star.rank, star.coeff)
