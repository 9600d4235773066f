import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cartan import group
from cartan.forms import (Domain, DomainError, FunctionForm, GFunction, GMap, constant_form,
                          evaluate, exact_form, exterior_derivative, is_flat, leibniz_check,
                          linearized_mc_residual, mc_residual, pullback_form, wedge_bracket,
                          zero_form)
from cartan.lie_core import LieError
from cartan.presets import expxy_map, form_from_preset, random_algebra, random_polynomial_function

D2 = Domain.box(2)
SO3 = group("so3")


def L(i):
    return SO3.basis[i - 1]


def test_domain_validation():
    with pytest.raises(DomainError):
        Domain((1.0, -1.0))
    with pytest.raises(DomainError):
        Domain((1.0,) * 4)
    with pytest.raises(DomainError):
        D2.check([1.5, 0.0])
    assert D2.grid(3).shape == (9, 2)
    assert np.all(np.abs(D2.interior_grid(3)) < 1)


def test_evaluate():
    xi = form_from_preset("pullback-expxy:L1,0.7*L2+L3", SO3, D2)
    x = np.array([0.3, -0.2])
    u, v = np.array([1.0, 2.0]), np.array([-0.5, 0.25])
    assert evaluate(xi, x, np.zeros(2)).norm() == 0
    lin = evaluate(xi, x, u + v) - evaluate(xi, x, u) - evaluate(xi, x, v)
    assert lin.norm() < 1e-14
    A = constant_form(SO3, D2, [L(1), L(2)])
    assert np.array_equal(evaluate(A, [0.4, 0.9], [1, 0]).matrix, L(1))
    with pytest.raises(DomainError):
        evaluate(xi, [2.0, 0.0], u)


def test_exterior_derivative_examples():
    assert exterior_derivative(constant_form(SO3, D2, [L(1), L(2)]), [0.1, 0.2], 0, 1).norm() == 0
    # xi = x2 A dx1  ->  d xi(e1, e2) = -A ; checked with and without analytic partials
    A = L(3)

    def func(x):
        out = np.zeros(x.shape[:-1] + (2, 3, 3))
        out[..., 0, :, :] = x[..., 1, None, None] * A
        return out
    for form in (FunctionForm(SO3, D2, func),):
        val = exterior_derivative(form, [0.3, 0.4], 0, 1).matrix
        assert np.allclose(val, -A, atol=1e-9)
    h = random_polynomial_function(SO3, D2, np.random.default_rng(0), degree=3)
    dh = exact_form(h)
    assert exterior_derivative(dh, [0.2, -0.5], 0, 1).norm() < 1e-9
    dh_fd = exact_form(GFunction(SO3, D2, h.value))
    assert exterior_derivative(dh_fd, [0.2, -0.5], 0, 1).norm() < 1e-5
    with pytest.raises(DomainError):
        exterior_derivative(dh, [1.0, 0.0], 0, 1)
    with pytest.raises(LieError):
        exterior_derivative(dh, [0.0, 0.0], 0, 0)


def test_wedge_bracket():
    A, B = constant_form(SO3, D2, [L(1), L(2)]), constant_form(SO3, D2, [L(3), L(1)])
    x = [0.1, 0.1]
    e1, e2 = np.array([1.0, 0]), np.array([0, 1.0])
    val = wedge_bracket(A, A, x, e1, e2).matrix
    assert np.allclose(val, 2 * (L(1) @ L(2) - L(2) @ L(1)))
    one = constant_form(SO3, D2, [L(1), np.zeros((3, 3))])
    two = constant_form(SO3, D2, [np.zeros((3, 3)), L(2)])
    assert np.allclose(wedge_bracket(one, two, x, e1, e2).matrix, L(3))
    assert wedge_bracket(A, A, x, e1, e1).norm() == 0
    u, v = np.array([0.3, -1.2]), np.array([0.7, 0.4])
    assert (wedge_bracket(A, B, x, u, v) - wedge_bracket(B, A, x, u, v)).norm() < 1e-14


def test_mc_residual_examples():
    x = [0.2, 0.3]
    assert mc_residual(zero_form(SO3, D2), x, 0, 1).norm() == 0
    C = constant_form(SO3, D2, [L(1), L(2)])
    assert np.allclose(mc_residual(C, x, 0, 1).matrix, -L(3))
    xi = form_from_preset("pullback-expxy:L1,0.7*L2+L3", SO3, D2)
    assert mc_residual(xi, x, 0, 1).norm() < 1e-6


def test_is_flat_examples():
    rep = is_flat(zero_form(SO3, D2))
    assert rep.flat and rep.max_residual == 0
    assert is_flat(constant_form(SO3, D2, [L(1), 2 * L(1)])).flat
    rep = is_flat(constant_form(SO3, D2, [L(1), L(2)]))
    assert not rep.flat
    assert abs(rep.max_residual - np.sqrt(2)) < 1e-12
    with pytest.raises(LieError):
        is_flat(zero_form(SO3, D2), 5, 0.0)


@pytest.mark.parametrize("preset,gname", [
    ("pullback-expxy:L1,0.7*L2+L3", "so3"),
    ("pullback-expxy:L1+P2,0.5*L3-P1", "se3"),
    ("pullback-expxy:H+E,0.5*F-0.3*H", "sl2"),
    ("su2-zcc:1.0,0.8", "so3"),
    ("su2-zcc:0.6,0.9", "sl2"),
    ("polynomial:L2,0.5,1,-2", "so3"),
    ("pullback-expxy:P+Z,Q", "heisenberg3"),
])
def test_presets_are_flat(preset, gname):
    assert is_flat(form_from_preset(preset, group(gname), D2), 7, 1e-4).flat


def test_linearized_residual_fd_consistency():
    rng = np.random.default_rng(1)
    xi = form_from_preset("pullback-expxy:L1,0.7*L2+L3", SO3, D2)
    h = random_polynomial_function(SO3, D2, rng)
    eta = exact_form(h)   # generic, not tangent
    x = np.array([0.3, -0.4])
    assert linearized_mc_residual(xi, zero_form(SO3, D2), x, 0, 1).norm() == 0
    s = 1e-6
    fd = (mc_residual(xi + s * eta, x, 0, 1).matrix - mc_residual(xi, x, 0, 1).matrix) / s
    assert np.linalg.norm(fd - linearized_mc_residual(xi, eta, x, 0, 1).matrix) < 1e-5


def test_pullback_examples():
    g0 = SO3.exp(L(1) + 0.3 * L(2))
    const = GMap(SO3, D2, lambda x: np.broadcast_to(g0, x.shape[:-1] + (3, 3)))
    assert np.abs(pullback_form(const)(D2.grid(3))).max() < 1e-10
    R = group("rplus")
    D1 = Domain.box(1)
    F = GMap(R, D1, lambda x: np.exp(x[..., :1, None] ** 2))
    xs = np.linspace(-0.9, 0.9, 7)[:, None]
    assert np.allclose(pullback_form(F)(xs)[:, 0, 0, 0], 2 * xs[:, 0], atol=1e-9)
    A, B = L(1) + 0.2 * L(3), L(2) - L(1)
    for analytic in (True, False):
        xi = pullback_form(expxy_map(SO3, D2, [A, B], analytic))
        x = np.array([0.4, -0.7])
        c = xi(x)
        assert np.allclose(c[0], A, atol=1e-9)
        E = SO3.exp(x[0] * A)
        assert np.allclose(c[1], E @ B @ E.T, atol=1e-9)


def test_pullback_rejects_non_group_maps():
    bad = GMap(SO3, D2, lambda x: np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3))
               * (1 + x[..., :1, None]))
    with pytest.raises(LieError):
        pullback_form(bad)(np.array([0.1, 0.2]))


def test_leibniz_examples():
    rng = np.random.default_rng(2)
    F = expxy_map(SO3, D2, [random_algebra(SO3, rng), random_algebra(SO3, rng)], analytic=False)
    e = GMap(SO3, D2, lambda x: np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3)))
    pts = D2.interior_grid(4)
    assert leibniz_check(F, e, pts) < 1e-9
    assert leibniz_check(F.inverse(), F, pts) < 1e-9
    assert np.abs(pullback_form(F.inverse() * F)(pts)).max() < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from(["so3", "se3", "sl2"]))
def test_leibniz_random_pairs(seed, gname):
    G = group(gname)
    rng = np.random.default_rng(seed)
    F1, F2 = (expxy_map(G, D2, [random_algebra(G, rng), random_algebra(G, rng)], analytic=False)
              for _ in range(2))
    assert leibniz_check(F1, F2, D2.interior_grid(3) * 0.9) <= 1e-6


def test_pullback_naturality_affine():
    rng = np.random.default_rng(3)
    M = np.array([[0.5, -0.2], [0.1, 0.4]])
    c = np.array([0.1, -0.2])
    for analytic, tol in ((True, 1e-8), (False, 1e-5)):
        F = expxy_map(SO3, D2, [random_algebra(SO3, rng), random_algebra(SO3, rng)], analytic)
        Fh = GMap(SO3, D2, lambda y: F(y @ M.T + c))
        ys = D2.interior_grid(4)
        lhs = pullback_form(Fh)(ys)
        rhs = np.einsum("ij,...ikl->...jkl", M, pullback_form(F)(ys @ M.T + c))
        assert np.abs(lhs - rhs).max() < tol


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_d_squared_vanishes(seed):
    h = random_polynomial_function(SO3, D2, np.random.default_rng(seed), degree=3)
    dh = exact_form(GFunction(SO3, D2, h.value))
    for x in D2.interior_grid(3):
        assert exterior_derivative(dh, x, 0, 1).norm() < 1e-5
