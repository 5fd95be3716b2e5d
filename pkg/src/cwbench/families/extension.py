"""Two links for the direct image of a flat extension ``0 → E′ → E → E″ → 0``.

``E_θ`` has connection ``[[∇′, θω], [0, ∇″]]``; for ``θ ≠ 0`` it is gauge
equivalent to ``E = E₁`` while ``E₀ = E′ ⊕ E″``.  Fibral cohomology may jump
at ``θ = 0``.  Both links go from ``H(E)`` to ``H(E′) ⊕ H(E″)``:

* the *spectral* link transports ``H(E)`` down to a small ``θ``, embeds it in
  the spectral subbundle ``F_θ`` of small eigenvalues with the exact-sequence
  link, and identifies ``F_θ`` with ``F₀ = H(E′) ⊕ H(E″)`` by transport;
* the *flat* link uses the complex ``(F₀, d₁)`` with ``d₁`` the operator
  induced by ``ω∧`` on ``F₀`` and the isomorphism of ``H(E)`` with its
  cohomology.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..connections import Connection
from ..frames import polar_unitary
from ..links import (
    BundleComplex,
    LinkDatum,
    LinkInvariants,
    compose_links,
    invert_link,
    link_from_complex,
    link_from_exact_sequence,
    link_from_isomorphisms,
    link_invariants,
)
from .index import PATH_STEPS
from .kernels import FramePair, compressed_connection, harmonic_kernels, kernel_bases, smooth_pair, spectral_bases
from .vertical import TorusFibration, VerticalComplex, build_vertical_complex

SPECTRAL_CUTOFF = 0.5


def _dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


@dataclass(frozen=True, eq=False)
class FlatExtension:
    """Family ``θ ↦ E_θ`` of upper-triangular flat connections on a fibration."""

    fib: TorusFibration
    sub: Connection
    quotient: Connection
    omega: np.ndarray  # {axis: (total grid) + (r', r'')} stacked as (dim, ..., r', r'')

    def connection(self, theta: float) -> Connection:
        tot = self.fib.total
        r1, r2 = self.sub.rank, self.quotient.rank
        coeffs = {}
        for i in range(tot.dim):
            A = np.zeros(tot.shape + (r1 + r2, r1 + r2), dtype=complex)
            A[..., :r1, :r1] = self.sub.A(i)
            A[..., r1:, r1:] = self.quotient.A(i)
            A[..., :r1, r1:] = theta * self.omega[i]
            coeffs[i] = A
        return Connection.from_arrays(tot, coeffs, rank=r1 + r2)


def line_extension(fib: TorusFibration, a_sub: float, a_quot: float, c0: complex) -> FlatExtension:
    """Line bundles ``d + i a dx₁`` with ``ω = i c(x) dy₁``, ``c = c₀ e^{−i(a′−a″)x₁}``.

    Flatness of the extension forces ``a′ − a″ ∈ ℤ`` for ``c`` to be periodic.
    """
    tot = fib.total
    if abs((a_sub - a_quot) - round(a_sub - a_quot)) > 1e-12:
        raise ValueError("a_sub - a_quot must be an integer")
    mesh = tot.mesh()
    x = mesh[0]
    sub = Connection.from_arrays(tot, {0: 1j * a_sub * np.ones(tot.shape)}, rank=1)
    quot = Connection.from_arrays(tot, {0: 1j * a_quot * np.ones(tot.shape)}, rank=1)
    omega = np.zeros((tot.dim,) + tot.shape + (1, 1), dtype=complex)
    omega[fib.m, ..., 0, 0] = 1j * c0 * np.exp(-1j * (a_sub - a_quot) * x)
    return FlatExtension(fib, sub, quot, omega)


@dataclass(frozen=True, eq=False)
class ExtensionLinks:
    """Shared data: complexes at ``θ = 0, 1``, frames and Gauss–Manin connections."""

    ext: FlatExtension
    vc0: VerticalComplex
    vc1: VerticalComplex
    H1: FramePair
    F0: FramePair
    K: int

    @property
    def connections(self) -> dict:
        """Gauss–Manin connections on ``H(E)`` (E, F slots) and ``H(E′)⊕H(E″)`` (G, H slots)."""
        return {
            "E": compressed_connection(self.vc1, self.H1.plus),
            "F": compressed_connection(self.vc1, self.H1.minus),
            "G": compressed_connection(self.vc0, self.F0.plus),
            "H": compressed_connection(self.vc0, self.F0.minus),
        }

    def dirac(self, theta: float) -> np.ndarray:
        return (1 - theta) * self.vc0.dirac + theta * self.vc1.dirac

    def dirac_plus(self, theta: float) -> np.ndarray:
        sp = self.vc0.space
        return self.dirac(theta)[:, sp.odd[:, None], sp.even[None, :]]


def prepare(ext: FlatExtension, K: int = 8) -> ExtensionLinks:
    vc0 = build_vertical_complex(ext.fib, ext.connection(0.0), K)
    vc1 = build_vertical_complex(ext.fib, ext.connection(1.0), K)
    return ExtensionLinks(ext, vc0, vc1, harmonic_kernels(vc1), harmonic_kernels(vc0), K)


def _transport_pair(start: FramePair, bases) -> FramePair:
    out = []
    for sign in ("+", "-"):
        W = start.part(sign)
        for B in bases:
            Bs = B.part(sign)
            W = Bs @ polar_unitary(_dagger(Bs) @ W)
        out.append(W)
    return FramePair(*out)


def transported_harmonic(data: ExtensionLinks, theta: float, steps: int = PATH_STEPS) -> FramePair:
    """Frames of ``H(E_θ)`` obtained by transporting those of ``H(E₁)`` from 1 down to θ."""
    sp = data.vc0.space
    ss = np.linspace(1.0, theta, steps + 1)[1:]
    return _transport_pair(data.H1, [kernel_bases(data.dirac_plus(s), sp) for s in ss])


def transported_spectral(data: ExtensionLinks, theta: float, steps: int = PATH_STEPS, cutoff: float = SPECTRAL_CUTOFF) -> FramePair:
    """Frames of ``F_θ = {|λ| < cutoff}`` obtained by transporting ``F₀`` from 0 to θ."""
    sp = data.vc0.space
    ss = np.linspace(0.0, theta, steps + 1)[1:]
    return _transport_pair(data.F0, [spectral_bases(data.dirac(s), sp, cutoff) for s in ss])


def spectral_link(data: ExtensionLinks, theta: float, steps: int = PATH_STEPS) -> LinkDatum:
    """Link ``H(E) → H(E′)⊕H(E″)`` through the spectral subbundle at parameter ``θ``."""
    Wh = transported_harmonic(data, theta, steps)
    Wf = transported_spectral(data, theta, steps)
    D = data.dirac(theta)
    a = _dagger(Wf.plus) @ Wh.plus
    b = _dagger(Wf.minus) @ (D @ Wf.plus)
    c = _dagger(Wh.minus) @ Wf.minus
    return link_from_exact_sequence([a, b, c], data.ext.fib.base)


def d1_complex(data: ExtensionLinks) -> BundleComplex:
    """``F₀⁺ → F₀⁻`` induced by ``ω∧`` (the first differential of the spectral sequence)."""
    v = _dagger(data.F0.minus) @ ((data.vc1.d - data.vc0.d) @ data.F0.plus)
    hp, hm = data.F0.dims
    return BundleComplex(data.ext.fib.base, (hp, hm), (v,), first_degree=0)


def flat_link(data: ExtensionLinks, theta_min: float = 1e-3, steps: int = PATH_STEPS) -> LinkDatum:
    """Link ``H(E) → H(E′)⊕H(E″)`` through the cohomology of the ``d₁`` complex."""
    base = data.ext.fib.base
    cx = d1_complex(data)
    l_cx, h_frames = link_from_complex(cx)
    Wh = transported_harmonic(data, theta_min, steps)
    # identify H(E) with the d₁-cohomology: project onto its harmonic representatives in F₀
    J = []
    for W, F, h in ((Wh.plus, data.F0.plus, h_frames[0]), (Wh.minus, data.F0.minus, h_frames[1])):
        J.append(polar_unitary(_dagger(F @ h) @ W))
    iso = link_from_isomorphisms(base, J[0], J[1])
    return compose_links(iso, invert_link(l_cx))


def extension_link_invariants(data: ExtensionLinks, link: LinkDatum) -> LinkInvariants:
    return link_invariants(link, data.connections)
