import numpy as np
import pytest
from hypothesis import given, strategies as st

from cwbench.connections import Connection, RealBundleConnection, gauge_transform, unitary_part
from cwbench.errors import NotAntisymmetric, NotFlat, NotInvertible, RankMismatch, WrongDegree
from cwbench.forms import Form, TorusChart, one_form, periods, random_trig_poly
from cwbench.kclasses import RelKGenerator, relk_from_automorphism, relk_nadel_class
from cwbench.transgression import (
    ConnectionPath,
    chern_simons,
    conjugation_class,
    cs_transgression,
    euler_transgression,
    gauss_legendre_unit,
    nadel_class,
    nadel_flat_closed_form,
    transgression_residual,
    wedge_identity_sides,
)

seeds = st.integers(0, 2**32 - 1)
J = np.array([[0.0, -1.0], [1.0, 0.0]])


def random_connection(chart, rng, rank=2, scale=0.3):
    coeffs = {i: random_trig_poly(chart, rng, 1, shape=(rank, rank), scale=scale) for i in range(chart.dim)}
    return Connection.from_arrays(chart, coeffs, rank=rank)


def line(chart, a):
    return Connection.from_arrays(chart, {0: a * np.ones(chart.shape)}, rank=1)


def test_gauss_legendre_unit_integrates_polynomials():
    x, w = gauss_legendre_unit(8)
    assert np.sum(w) == pytest.approx(1.0)
    assert np.sum(w * x**15) == pytest.approx(1 / 16)


@pytest.mark.parametrize("theta", [0.3, -1.1, np.pi, 2 * np.pi, 5.0])
def test_nadel_period_of_twisted_line(theta):
    ch = TorusChart((8,))
    g = RelKGenerator(Connection.trivial(ch, 1), line(ch, 1j * theta), np.ones((8, 1, 1)))
    assert nadel_class(g).get((0,)) == pytest.approx(-theta / (2 * np.pi), abs=1e-12)


def test_nadel_of_winding_loop():
    # (C, d, C, d, e^{ix}) pulls d back to d + i dx: same period as θ = 1
    ch = TorusChart((16,))
    g = relk_from_automorphism(np.exp(1j * ch.axis(0))[:, None, None], ch)
    assert relk_nadel_class(g).get((0,)) == pytest.approx(-1 / (2 * np.pi), abs=1e-12)
    assert relk_nadel_class(g.negated()).get((0,)) == pytest.approx(1 / (2 * np.pi), abs=1e-12)


@given(seeds)
def test_transgression_identity_random(seed):
    ch = TorusChart.uniform(2, 12)
    rng = np.random.default_rng(seed)
    assert transgression_residual(ConnectionPath.linear(random_connection(ch, rng), random_connection(ch, rng))) < 1e-10


@given(seeds)
def test_reversal_and_ordering(seed):
    ch = TorusChart.uniform(2, 12)
    rng = np.random.default_rng(seed)
    a, b = random_connection(ch, rng), random_connection(ch, rng)
    path = ConnectionPath.linear(a, b)
    assert (periods(cs_transgression(path.reversed()) + cs_transgression(path))).max_abs() < 1e-12
    assert (periods(cs_transgression(path, "right") - cs_transgression(path))).max_abs() < 1e-12


@given(seeds)
def test_gauge_covariance_of_transgression(seed):
    ch = TorusChart.uniform(2, 32)
    rng = np.random.default_rng(seed)
    a, b = random_connection(ch, rng), random_connection(ch, rng)
    g = 1.5 * np.eye(2) + random_trig_poly(ch, rng, 1, shape=(2, 2), scale=0.2)
    gauged = chern_simons(gauge_transform(a, g), gauge_transform(b, g))
    assert (periods(gauged) - periods(chern_simons(a, b))).max_abs() < 1e-10


def test_curved_path_with_and_without_derivative():
    ch = TorusChart.uniform(2, 12)
    rng = np.random.default_rng(7)
    a, b = random_connection(ch, rng), random_connection(ch, rng)
    X = one_form(ch, {0: random_trig_poly(ch, rng, 1, shape=(2, 2), scale=0.3)})
    func = lambda t: Connection(ch, 2, a.coeff * (1 - t) + b.coeff * t + X * (t * t - t))  # noqa: E731
    deriv = lambda t: b.coeff - a.coeff + X * (2 * t - 1)  # noqa: E731
    fd = cs_transgression(ConnectionPath.curve(func))
    exact = cs_transgression(ConnectionPath.curve(func, deriv))
    assert (fd - exact).max_abs() < 1e-9
    assert transgression_residual(ConnectionPath.curve(func, deriv)) < 1e-10
    assert (periods(exact) - periods(chern_simons(a, b))).max_abs() < 1e-10
    rev = ConnectionPath.curve(func, deriv).reversed()
    assert (periods(cs_transgression(rev)) + periods(exact)).max_abs() < 1e-10


def test_path_validation():
    ch = TorusChart((8,))
    with pytest.raises(RankMismatch):
        ConnectionPath.linear(Connection.trivial(ch, 1), Connection.trivial(ch, 2))
    with pytest.raises(ValueError):
        ConnectionPath.linear(Connection.trivial(ch, 1), Connection.trivial(ch, 1), order=2)


def test_nadel_rejects_bad_data():
    ch = TorusChart.uniform(2, 8)
    N = np.array([[0, 1], [0, 0]])
    curved = Connection.from_arrays(ch, {0: N, 1: N.T})
    with pytest.raises(NotFlat):
        RelKGenerator(curved, curved, np.broadcast_to(np.eye(2), ch.shape + (2, 2)))
    triv = Connection.trivial(ch, 2)
    with pytest.raises(NotInvertible):
        RelKGenerator(triv, triv, np.zeros(ch.shape + (2, 2)))


def test_closed_form_degree_three_by_hand():
    ch = TorusChart.uniform(3, 4)
    rng = np.random.default_rng(2)
    X, Y, Z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(3))
    omega = one_form(ch, {0: X, 1: Y, 2: Z})
    form = nadel_flat_closed_form(omega)
    tr3 = np.trace(X @ Y @ Z - X @ Z @ Y - Y @ X @ Z + Y @ Z @ X + Z @ X @ Y - Z @ Y @ X)
    expect3 = -((2j * np.pi) ** -2) / 6 * tr3
    assert form.scalar_component((0, 1, 2))[0, 0, 0] == pytest.approx(expect3)
    assert form.scalar_component((0,))[0, 0, 0] == pytest.approx(-np.trace(X) / (2j * np.pi))
    with pytest.raises(WrongDegree):
        nadel_flat_closed_form(Form.identity(ch, 2))


def test_conjugation_class_of_flat_line_with_metric():
    """``ω = ∇ − ∇* = (2 Re a − 2u′) dx`` gives period ``−2 Re a / 2πi``."""
    ch = TorusChart((32,))
    x = ch.axis(0)
    u = 0.3 * np.cos(x) + 0.1 * np.sin(2 * x)
    a = 0.2 + 0.7j
    c = line(ch, a).with_metric(np.exp(2 * u)[:, None, None])
    k = conjugation_class(c).get((0,))
    assert k == pytest.approx(-2 * a.real / (2j * np.pi), abs=1e-12)
    # shared oracle: twice the imaginary part of the transgression from the unitary part
    half = periods(chern_simons(unitary_part(c), c)).get((0,))
    assert k == pytest.approx(2j * half.imag, abs=1e-12)


@given(seeds)
def test_conjugation_class_metric_independent_for_flat(seed):
    ch = TorusChart((32,))
    rng = np.random.default_rng(seed)
    c = Connection.from_arrays(ch, {0: np.diag(rng.standard_normal(2) + 1j * rng.standard_normal(2))})
    k = []
    for _ in range(2):
        B = random_trig_poly(ch, rng, 1, shape=(2, 2), scale=0.3)
        k.append(conjugation_class(c.with_metric(np.eye(2) + B @ np.conj(np.swapaxes(B, -1, -2)))))
    assert (k[0] - k[1]).max_abs() < 1e-9
    assert k[0].max_real() < 1e-12


def so2_path(ch, rng):
    a0, a1 = (random_trig_poly(ch, rng, 1, shape=(ch.dim,)).real for _ in range(2))
    c0 = RealBundleConnection.from_connection(Connection.from_arrays(ch, {i: a0[..., i, None, None] * J for i in range(ch.dim)}))
    c1 = RealBundleConnection.from_connection(Connection.from_arrays(ch, {i: a1[..., i, None, None] * J for i in range(ch.dim)}))
    return ConnectionPath.linear(c0, c1)


def test_euler_transgression_identity():
    from cwbench.connections import euler_form
    from cwbench.forms import exterior_derivative

    ch = TorusChart.uniform(2, 16)
    path = so2_path(ch, np.random.default_rng(5))
    et = euler_transgression(path)
    assert et.degrees() <= {1}
    assert (exterior_derivative(et) - euler_form(path.end) + euler_form(path.start)).max_abs() < 1e-12
    assert euler_transgression(ConnectionPath.linear(Connection.trivial(ch, 3), Connection.trivial(ch, 3))).max_abs() == 0


def test_euler_transgression_rejects_non_orthogonal_path():
    ch = TorusChart.uniform(2, 8)
    rng = np.random.default_rng(0)
    with pytest.raises(NotAntisymmetric):
        euler_transgression(ConnectionPath.linear(random_connection(ch, rng), random_connection(ch, rng)))


def test_wedge_identity_sides_agree_mod_exact():
    ch = TorusChart.uniform(3, 10)
    rng = np.random.default_rng(9)
    real = so2_path(ch, rng)
    cplx = ConnectionPath.linear(random_connection(ch, rng, rank=1), random_connection(ch, rng, rank=1))
    lhs, rhs0, rhs1 = wedge_identity_sides(real, cplx)
    assert (periods(lhs) - periods(rhs0)).max_abs() < 1e-8
    assert (periods(lhs) - periods(rhs1)).max_abs() < 1e-8
