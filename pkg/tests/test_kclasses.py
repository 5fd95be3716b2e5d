import numpy as np
import pytest
from hypothesis import given, strategies as st

from cwbench.connections import Connection
from cwbench.errors import MissingMetric, NotFlat, RankMismatch, WrongDegree
from cwbench.forms import Form, TorusChart, closedness_residual, cohomology_class, periods, random_trig_poly
from cwbench.kclasses import (
    FreeMultGenerator,
    RelKGenerator,
    borel_class,
    chern_hat,
    conjugate_freemult,
    conjugate_relk,
    from_flat,
    is_mk0,
    mk0_residual,
    normalize_change_connection,
    phi_integrality_report,
    relk_nadel_class,
)
from cwbench.transgression import conjugation_class

seeds = st.integers(0, 2**32 - 1)
CH = TorusChart.uniform(2, 16)


def random_connection(rng, rank=2, chart=CH):
    return Connection.from_arrays(chart, {i: random_trig_poly(chart, rng, 1, shape=(rank, rank), scale=0.3) for i in range(chart.dim)}, rank=rank)


def odd_alpha(rng, chart=CH):
    return Form(chart, 1, {S: random_trig_poly(chart, rng, 1, shape=(1, 1)) for S in chart.subsets(1)})


def line(a, chart=CH, metric=None):
    return Connection.from_arrays(chart, {0: a * np.ones(chart.shape)}, rank=1, metric=metric)


def test_generator_validation():
    triv = Connection.trivial(CH, 1)
    with pytest.raises(WrongDegree):
        FreeMultGenerator(triv, Form.scalar(CH, {(): 1.0}))
    with pytest.raises(RankMismatch):
        FreeMultGenerator(triv, Form.zero(CH, 2) + Form(CH, 2, {(0,): np.eye(2)}))
    with pytest.raises(ValueError):
        FreeMultGenerator.from_connection(triv, sign=2)
    with pytest.raises(RankMismatch):
        RelKGenerator(triv, Connection.trivial(CH, 2), np.ones(CH.shape + (1, 1)))
    with pytest.raises(RankMismatch):
        RelKGenerator(triv, triv, np.ones((3, 1, 1)))


@given(seeds)
def test_chern_hat_closed_and_invariant_under_connection_change(seed):
    rng = np.random.default_rng(seed)
    g = FreeMultGenerator(random_connection(rng), odd_alpha(rng))
    assert closedness_residual(chern_hat(g)) < 1e-10
    h = normalize_change_connection(g, random_connection(rng))
    # same class of ĉh (here even pointwise up to exact terms of the alpha shift)
    assert (periods(chern_hat(h)) - periods(chern_hat(g))).max_abs() < 1e-10
    back = normalize_change_connection(h, g.E)
    assert (periods(back.alpha) - periods(g.alpha)).max_abs() < 1e-10


def test_flat_change_shifts_alpha_by_nadel_class():
    theta = 0.8
    g = from_flat(Connection.trivial(CH, 1))
    h = normalize_change_connection(g, line(1j * theta))
    assert periods(h.alpha).get((0,)) == pytest.approx(-theta / (2 * np.pi))


def test_flat_bundles_land_in_multiplicative_subgroup():
    assert is_mk0(from_flat(line(0.3 + 0.2j)))
    rng = np.random.default_rng(0)
    curved = random_connection(rng)
    assert mk0_residual(FreeMultGenerator.from_connection(curved)) > 1e-3
    with pytest.raises(NotFlat):
        from_flat(curved)


@given(seeds)
def test_borel_class_is_imaginary(seed):
    rng = np.random.default_rng(seed)
    a = complex(rng.standard_normal() + 1j * rng.standard_normal())
    u = 0.2 * random_trig_poly(CH, rng, 1).real
    g = FreeMultGenerator(line(a, metric=np.exp(2 * u)[..., None, None]), odd_alpha(rng))
    assert borel_class(g).max_real() < 1e-10
    # the α-part contributes ᾱ − α, the rest is the conjugation class
    expected = conjugation_class(g.E) - periods(g.alpha) + periods(g.alpha).conj()
    assert (borel_class(g) - expected).max_abs() < 1e-12


def test_borel_class_linear_over_formal_sums():
    rng = np.random.default_rng(5)
    g1 = FreeMultGenerator(line(0.4 + 0.1j), odd_alpha(rng))
    g2 = FreeMultGenerator(line(-0.2 + 0.3j), odd_alpha(rng))
    total = borel_class([g1, g2.negated()])
    assert (total - (borel_class(g1) - borel_class(g2))).max_abs() < 1e-12
    with pytest.raises(ValueError):
        borel_class([])


def test_conjugation_involutions():
    rng = np.random.default_rng(6)
    g = FreeMultGenerator(random_connection(rng), odd_alpha(rng))
    gg = conjugate_freemult(conjugate_freemult(g))
    assert (gg.E.coeff - g.E.coeff).max_abs() < 1e-12
    assert (gg.alpha - g.alpha).max_abs() == 0
    # Borel class flips sign under the conjugation
    assert (borel_class(conjugate_freemult(g)) + borel_class(g)).max_abs() < 1e-10


def test_conjugate_relk_line_example():
    theta = 0.6 + 0.3j
    E = line(0.0, metric=np.ones(CH.shape + (1, 1)))
    F = line(1j * theta, metric=np.ones(CH.shape + (1, 1)))
    g = RelKGenerator(E, F, np.ones(CH.shape + (1, 1)))
    c = relk_nadel_class(conjugate_relk(g))
    # ∇* = d − conj(iθ) dx = d + i conj(θ) dx, i.e. θ ↦ conj(θ)
    assert c.get((0,)) == pytest.approx(-np.conj(theta) / (2 * np.pi))
    assert (relk_nadel_class(conjugate_relk(conjugate_relk(g))) - relk_nadel_class(g)).max_abs() < 1e-12
    with pytest.raises(MissingMetric):
        conjugate_relk(RelKGenerator(line(0.0), line(0.0), np.ones(CH.shape + (1, 1))))


def test_unitary_pair_is_fixed_by_conjugation():
    one = np.ones(CH.shape + (1, 1))
    g = RelKGenerator(line(0.3j, metric=one), line(-1.2j, metric=one), one)
    assert (relk_nadel_class(conjugate_relk(g)) - relk_nadel_class(g)).max_abs() < 1e-12


@pytest.mark.parametrize("theta,nearest,distance", [(np.pi, 0, 0.5), (2 * np.pi, -1, 0.0)])
def test_integrality_report(theta, nearest, distance):
    ch = TorusChart((8,))
    g = RelKGenerator(Connection.trivial(ch, 1), line(1j * theta, chart=ch), np.ones((8, 1, 1)))
    (entry,) = phi_integrality_report(relk_nadel_class(g))
    assert entry.label == "dx1" and entry.degree == 1
    assert entry.value == pytest.approx(-theta / (2 * np.pi))
    assert entry.distance == pytest.approx(distance, abs=1e-12)
    if distance == 0:
        assert entry.nearest == nearest
