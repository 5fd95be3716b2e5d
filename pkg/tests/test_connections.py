import numpy as np
import pytest
from hypothesis import given, strategies as st

from cwbench.connections import (
    Connection,
    RealBundleConnection,
    Superconnection,
    adjoint_connection,
    adjoint_superconnection,
    chern_character,
    chern_character_super,
    covariant_derivative,
    curvature,
    direct_sum,
    euler_form,
    flatness_residual,
    gauge_transform,
    graded_exponential,
    holonomy,
    is_flat,
    metric_compatibility_residual,
    pair_metric,
    pfaffian_form,
    superconnection_from_connections,
    unitary_part,
)
from cwbench.errors import MissingMetric, NotAntisymmetric
from cwbench.forms import Form, TorusChart, closedness_residual, exterior_derivative, periods, random_trig_poly, spectral_derivative, wedge

seeds = st.integers(0, 2**32 - 1)


def random_connection(chart, rng, rank=2, scale=0.3, metric=None):
    coeffs = {i: random_trig_poly(chart, rng, 1, shape=(rank, rank), scale=scale) for i in range(chart.dim)}
    return Connection.from_arrays(chart, coeffs, rank=rank, metric=metric)


def random_metric(chart, rng, rank=2):
    B = random_trig_poly(chart, rng, 1, shape=(rank, rank), scale=0.3)
    return np.eye(rank) + B @ np.conj(np.swapaxes(B, -1, -2))


def test_constant_commuting_connection_is_flat():
    ch = TorusChart.uniform(2, 8)
    c = Connection.from_arrays(ch, {0: np.diag([1j, 2.0]), 1: np.diag([0.5, -1j])})
    assert flatness_residual(c) == 0
    assert is_flat(c)
    # non-commuting constants are not
    N = np.array([[0, 1], [0, 0]])
    assert not is_flat(Connection.from_arrays(ch, {0: N, 1: N.T}))


@given(seeds)
def test_bianchi_and_closed_chern_character(seed):
    ch = TorusChart.uniform(3, 8)
    c = random_connection(ch, np.random.default_rng(seed))
    F = curvature(c)
    bianchi = exterior_derivative(F) + wedge(c.coeff, F) - wedge(F, c.coeff)
    assert bianchi.max_abs() < 1e-10
    assert closedness_residual(chern_character(c)) < 1e-10


@given(seeds)
def test_chern_character_gauge_invariant(seed):
    ch = TorusChart.uniform(2, 32)
    rng = np.random.default_rng(seed)
    c = random_connection(ch, rng)
    g = np.eye(2) * 2 + random_trig_poly(ch, rng, 1, shape=(2, 2), scale=0.2)
    # pointwise invariance holds up to aliasing of g⁻¹ on the grid
    assert (chern_character(gauge_transform(c, g)) - chern_character(c)).max_abs() < 1e-8


def test_gauge_transform_makes_map_parallel():
    ch = TorusChart((32,))
    rng = np.random.default_rng(1)
    c = random_connection(ch, rng)
    g = np.eye(2) * 2 + random_trig_poly(ch, rng, 1, shape=(2, 2), scale=0.2)
    p = gauge_transform(c, g)
    sigma = random_trig_poly(ch, rng, 1, shape=(2,))
    lhs = covariant_derivative(c, np.einsum("...ij,...j->...i", g, sigma), 0)
    rhs = np.einsum("...ij,...j->...i", g, covariant_derivative(p, sigma, 0))
    assert np.max(np.abs(lhs - rhs)) < 1e-9


@given(seeds)
def test_adjoint_defining_identity(seed):
    """``d h(σ,θ) = h(∇*σ, θ) + h(σ, ∇θ)`` pointwise."""
    ch = TorusChart((32,))
    rng = np.random.default_rng(seed)
    h = random_metric(ch, rng)
    c = random_connection(ch, rng, metric=h)
    star = adjoint_connection(c)
    s, t = (random_trig_poly(ch, rng, 1, shape=(2,)) for _ in range(2))
    lhs = spectral_derivative(pair_metric(h, s, t), ch, 0)
    rhs = pair_metric(h, covariant_derivative(star, s, 0), t) + pair_metric(h, s, covariant_derivative(c, t, 0))
    assert np.max(np.abs(lhs - rhs)) < 1e-8


@given(seeds)
def test_adjoint_is_involution_and_unitary_part_compatible(seed):
    ch = TorusChart((32,))
    rng = np.random.default_rng(seed)
    c = random_connection(ch, rng, metric=random_metric(ch, rng))
    assert (adjoint_connection(adjoint_connection(c)).coeff - c.coeff).max_abs() < 1e-8
    assert metric_compatibility_residual(unitary_part(c)) < 1e-8
    assert metric_compatibility_residual(c) > 1e-3


def test_adjoint_needs_metric():
    with pytest.raises(MissingMetric):
        adjoint_connection(Connection.trivial(TorusChart((8,)), 2))


def test_metric_validation():
    ch = TorusChart((8,))
    with pytest.raises(ValueError):
        Connection.trivial(ch, 2, metric=np.array([[1, 1j], [0, 1]]))
    with pytest.raises(ValueError):
        Connection.trivial(ch, 2, metric=-np.eye(2))


def test_holonomy_of_flat_line_bundle():
    ch = TorusChart((16,))
    theta = 0.7
    c = Connection.from_arrays(ch, {0: 1j * theta * np.ones(16)}, rank=1)
    assert holonomy(c, 0)[0, 0] == pytest.approx(np.exp(-2j * np.pi * theta))


def test_holonomy_conjugates_under_gauge():
    ch = TorusChart((64,))
    x = ch.axis(0)
    c = Connection.from_arrays(ch, {0: np.diag([0.3j, -0.2])})
    g = np.stack([np.array([[1, 0.3 * np.sin(t)], [0, 1]]) for t in x])
    p = gauge_transform(c, g)
    H, Hp = holonomy(c, 0), holonomy(p, 0)
    assert np.allclose(np.linalg.eigvals(H), np.linalg.eigvals(Hp), atol=1e-4)


def test_euler_form_of_so2_connection():
    ch = TorusChart.uniform(2, 16)
    x, y = ch.mesh()
    J = np.array([[0, -1], [1, 0]])
    a = np.sin(x) * np.cos(y)
    c = RealBundleConnection.from_connection(Connection.from_arrays(ch, {1: a[..., None, None] * J}))
    e = euler_form(c)
    # F = ∂ₓa dx∧dy ⊗ J, Pf picks the (0,1) entry -∂ₓa
    assert np.allclose(e.scalar_component((0, 1)), -np.cos(x) * np.cos(y) / (2 * np.pi))
    with pytest.raises(NotAntisymmetric):
        euler_form(Connection.from_arrays(ch, {0: np.ones_like(x)[..., None, None] * np.eye(2), 1: a[..., None, None] * J}) + Form(ch, 2, {(0,): np.sin(y)[..., None, None] * np.eye(2)}))


def test_pfaffian_rank_four_of_block_matrix():
    ch = TorusChart.uniform(4, 4)
    F = np.zeros((4, 4))
    F[0, 1], F[1, 0] = 1, -1
    G = np.zeros((4, 4))
    G[2, 3], G[3, 2] = 1, -1
    form = Form(ch, 4, {(0, 1): F, (2, 3): G})
    # Pf = F01 ∧ F23 = dx1^dx2^dx3^dx4
    pf = pfaffian_form(form)
    assert np.allclose(pf.scalar_component((0, 1, 2, 3)), 1.0)
    assert pf.degrees() == {4}
    assert pfaffian_form(Form(ch, 3, {(0, 1): np.ones((3, 3))})).max_abs() == 0
    with pytest.raises(ValueError):
        pfaffian_form(Form.zero(ch, 6))


def test_real_bundle_rejects_complex():
    ch = TorusChart((8,))
    with pytest.raises(ValueError):
        RealBundleConnection(ch, 1, Form(ch, 1, {(0,): 1j}))


def test_direct_sum_block_structure():
    ch = TorusChart((8,))
    a = Connection.from_arrays(ch, {0: [[1j]]})
    b = Connection.from_arrays(ch, {0: np.diag([2.0, 3.0])}, metric=np.eye(2) * 2)
    s = direct_sum(a, b)
    assert s.rank == 3
    assert np.allclose(s.A(0)[0], np.diag([1j, 2, 3]))
    assert np.allclose(s.metric[0], np.diag([1, 2, 2]))


def test_graded_exponential_of_degree_zero_scalar():
    ch = TorusChart((8,))
    X = Form(ch, 2, {(): np.diag([0.5, 0.0])})
    E = graded_exponential(X, 1)
    assert np.allclose(E.component(())[0], np.diag([np.exp(-0.5), 1.0]))


def test_superconnection_validation():
    ch = TorusChart.uniform(2, 8)
    c = Connection.trivial(ch, 2)
    with pytest.raises(ValueError):  # block-diagonal degree-0 part is even
        Superconnection((1, 1), c, Form(ch, 2, {(): np.eye(2)}))
    with pytest.raises(ValueError):
        Superconnection((1, 1), Connection.from_arrays(ch, {0: np.ones((2, 2))}), Form.zero(ch, 2))


def test_superconnection_without_odd_part_is_difference_of_characters():
    ch = TorusChart.uniform(2, 16)
    rng = np.random.default_rng(3)
    cp, cm = random_connection(ch, rng), random_connection(ch, rng)
    A = superconnection_from_connections(cp, cm)
    assert (chern_character_super(A) - (chern_character(cp) - chern_character(cm))).max_abs() < 1e-12


def test_superconnection_adjoint_of_connection_part():
    ch = TorusChart.uniform(2, 16)
    rng = np.random.default_rng(4)
    A = superconnection_from_connections(random_connection(ch, rng), random_connection(ch, rng))
    AS = adjoint_superconnection(A)
    star = adjoint_connection(A.even_part.with_metric(np.eye(4)))
    assert (AS.even_part.coeff - star.coeff).max_abs() < 1e-14
    with pytest.raises(ValueError):
        adjoint_superconnection(Superconnection(A.split, A.even_part.with_metric(2 * np.eye(4)), A.odd_form))
