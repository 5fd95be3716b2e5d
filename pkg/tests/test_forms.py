import numpy as np
import pytest
from hypothesis import given, strategies as st

from cwbench.errors import ChartMismatch, NotClosed, RankMismatch
from cwbench.forms import (
    Form,
    TorusChart,
    cohomology_class,
    direct_sum,
    exterior_derivative,
    form_parity,
    integrate_top,
    merge_sign,
    periods,
    phi_cap,
    phi_factor,
    phicap_factor,
    random_trig_poly,
    special_adjoint,
    spectral_derivative,
    subset_label,
    super_wedge,
    supertrace,
    trace,
    trig_poly,
    wedge,
    wedge_power,
)

from conftest import random_form

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 3)


def chart_for(dim):
    return TorusChart.uniform(dim, 8)


def test_chart_validation():
    with pytest.raises(ValueError):
        TorusChart(())
    with pytest.raises(ValueError):
        TorusChart((8, 8, 8, 8, 8))
    with pytest.raises(ValueError):
        TorusChart((2,))
    assert TorusChart.uniform(2, 8).scaled(2).grid == (16, 16)
    assert list(TorusChart.uniform(3, 4).subsets(2)) == [(0, 1), (0, 2), (1, 2)]


def test_labels_and_merge_signs():
    assert subset_label(()) == "1"
    assert subset_label((0, 2)) == "dx1^dx3"
    assert merge_sign((0,), (1,)) == 1
    assert merge_sign((1,), (0,)) == -1
    assert merge_sign((0, 2), (1,)) == -1
    assert merge_sign((0,), (0, 1)) == 0


def test_spectral_derivative_exact_on_band_limited():
    ch = TorusChart((16, 12))
    x, y = ch.mesh()
    f = np.sin(3 * x) * np.cos(2 * y) + np.exp(1j * (x - 4 * y))
    fx = 3 * np.cos(3 * x) * np.cos(2 * y) + 1j * np.exp(1j * (x - 4 * y))
    assert np.max(np.abs(spectral_derivative(f, ch, 0) - fx)) < 1e-12


def test_trig_poly_matches_direct_evaluation():
    ch = TorusChart((8, 8))
    x, y = ch.mesh()
    v = trig_poly(ch, [((1, -2), 0.5), ((0,), 2.0j)])
    assert np.allclose(v, 0.5 * np.exp(1j * (x - 2 * y)) + 2.0j)


@given(seeds, dims)
def test_d_squared_vanishes(seed, dim):
    ch = chart_for(dim)
    a = random_form(ch, np.random.default_rng(seed), rank=2)
    assert exterior_derivative(exterior_derivative(a)).max_abs() < 1e-11


@given(seeds, dims)
def test_leibniz_rule(seed, dim):
    ch = chart_for(dim)
    rng = np.random.default_rng(seed)
    a = random_form(ch, rng, rank=2)
    b = random_form(ch, rng, rank=2)
    lhs = exterior_derivative(wedge(a, b))
    rhs = wedge(exterior_derivative(a), b) + wedge(form_parity(a), exterior_derivative(b))
    # products of band-1 forms stay band-2, well inside the 8-point grid
    assert (lhs - rhs).max_abs() < 1e-10


@given(seeds, dims)
def test_wedge_associative(seed, dim):
    ch = chart_for(dim)
    rng = np.random.default_rng(seed)
    a, b, c = (random_form(ch, rng, rank=2) for _ in range(3))
    assert (wedge(wedge(a, b), c) - wedge(a, wedge(b, c))).max_abs() < 1e-10


@given(seeds)
def test_scalar_wedge_graded_commutative(seed):
    ch = chart_for(3)
    rng = np.random.default_rng(seed)
    a = random_form(ch, rng, degrees={1})
    b = random_form(ch, rng, degrees={2})
    c = random_form(ch, rng, degrees={1})
    assert (wedge(a, b) - wedge(b, a)).max_abs() < 1e-12
    assert (wedge(a, c) + wedge(c, a)).max_abs() < 1e-12
    assert wedge(a, a).max_abs() < 1e-12


@given(seeds)
def test_trace_of_graded_commutator_vanishes(seed):
    ch = chart_for(2)
    rng = np.random.default_rng(seed)
    a = random_form(ch, rng, rank=3, degrees={1})
    b = random_form(ch, rng, rank=3, degrees={1})
    # Tr(a∧b) = -Tr(b∧a) for End-valued 1-forms
    assert (trace(wedge(a, b)) + trace(wedge(b, a))).max_abs() < 1e-12


@given(seeds)
def test_periods_kill_exact_forms(seed):
    ch = chart_for(2)
    a = random_form(ch, np.random.default_rng(seed))
    assert periods(exterior_derivative(a)).max_abs() < 1e-12


def test_cohomology_class_requires_closed():
    ch = chart_for(2)
    x, _ = ch.mesh()
    not_closed = Form.scalar(ch, {(1,): np.cos(x)})
    with pytest.raises(NotClosed):
        cohomology_class(not_closed)
    closed = Form.scalar(ch, {(1,): 2.0 + 0 * x, (0,): 0.5})
    c = cohomology_class(closed)
    assert c.get((1,)) == pytest.approx(2.0)
    assert c.get((0,)) == pytest.approx(0.5)
    assert c.as_dict() == {"dx1": pytest.approx(0.5), "dx2": pytest.approx(2.0)}


def test_integrate_top_volume():
    ch = TorusChart((8, 8))
    vol = Form.scalar(ch, {(0, 1): 1.0})
    assert integrate_top(vol) == pytest.approx((2 * np.pi) ** 2)
    assert integrate_top(Form.scalar(ch, {(0,): 1.0})) == 0


def test_phi_factors():
    assert phi_factor(0) == 1
    assert phi_factor(1) == pytest.approx(1 / (2j * np.pi))
    assert phi_factor(2) == pytest.approx(1 / (2j * np.pi))
    assert phi_factor(3) == pytest.approx((2j * np.pi) ** -2)
    assert [phicap_factor(k) for k in range(5)] == [1, 1, 1, 2, 2]
    ch = chart_for(3)
    f = phi_cap(Form.scalar(ch, {(0, 1, 2): 1.0}))
    assert np.allclose(f.scalar_component((0, 1, 2)), 2.0)


def test_wedge_power_of_nilpotent_one_form():
    ch = chart_for(2)
    a = Form.scalar(ch, {(0,): 1.0, (1,): 1.0})
    assert wedge_power(a, 3).max_abs() == 0
    assert wedge_power(a, 0).max_abs() == 1


def test_rank_and_chart_mismatch():
    a = Form.identity(TorusChart((8,)), 2)
    with pytest.raises(RankMismatch):
        a + Form.identity(TorusChart((8,)), 3)
    with pytest.raises(ChartMismatch):
        a + Form.identity(TorusChart((16,)), 2)
    with pytest.raises(ValueError):
        Form(TorusChart((8,)), 1, {(1,): 1.0})


def test_direct_sum_and_blocks():
    ch = chart_for(1)
    a, b = Form.constant(ch, [[1.0]]), Form.constant(ch, np.eye(2) * 2)
    s = direct_sum(a, b)
    assert s.rank == 3
    assert np.allclose(s.component(())[0], np.diag([1, 2, 2]))
    assert np.allclose(s.block(slice(1, 3), slice(1, 3)).component(())[0], 2 * np.eye(2))


@given(seeds)
def test_special_adjoint_is_involutive_antihomomorphism(seed):
    ch = chart_for(2)
    rng = np.random.default_rng(seed)
    a = random_form(ch, rng, rank=4)
    b = random_form(ch, rng, rank=4)
    split = 2
    assert (special_adjoint(special_adjoint(a, split), split) - a).max_abs() < 1e-12
    lhs = special_adjoint(super_wedge(a, b, split), split)
    rhs = super_wedge(special_adjoint(b, split), special_adjoint(a, split), split)
    assert (lhs - rhs).max_abs() < 1e-10


@given(seeds)
def test_phi_supertrace_commutes_with_special_adjoint(seed):
    from cwbench.forms import phi_normalize

    ch = chart_for(3)
    a = random_form(ch, np.random.default_rng(seed), rank=4)
    lhs = phi_normalize(supertrace(special_adjoint(a, 2), 2))
    rhs = phi_normalize(supertrace(a, 2)).conj()
    assert (lhs - rhs).max_abs() < 1e-12


def test_random_trig_poly_is_band_limited():
    ch = TorusChart((16,))
    v = random_trig_poly(ch, np.random.default_rng(0), band=2)
    spec = np.abs(np.fft.fft(v)) / 16
    assert np.all(spec[3:14] < 1e-12)
    assert spec[:3].max() > 1e-3
