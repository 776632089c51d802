"""Uniform B-spline bases against a naive Cox-de Boor oracle."""

import numpy as np
import pytest

from audioinr.bspline import (
    SplineGrid,
    basis,
    basis_grad,
    make_grid,
    spline_bases,
    spline_eval,
)
from audioinr.tensor import ContractError, Tensor, backward


def naive_bases(grid: SplineGrid, x: np.ndarray) -> np.ndarray:
    """Textbook Cox-de Boor recursion, one basis at a time."""
    t = grid.knots
    k = grid.order
    nb = grid.grid_size + k
    top = grid.grid_size + k  # index of the knot equal to hi
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    at_top = x == t[top]
    deg0 = np.zeros((x.size, t.size - 1))
    for i in range(t.size - 1):
        # half-open spans, except x == hi lands in the last in-domain span
        inside = (t[i] <= x) & (x < t[i + 1]) & ~at_top
        if i == top - 1:
            inside = inside | at_top
        deg0[:, i] = inside.astype(np.float64)
    cur = deg0
    for r in range(1, k + 1):
        nxt = np.zeros((x.size, cur.shape[1] - 1))
        for i in range(nxt.shape[1]):
            left = (x - t[i]) / (t[i + r] - t[i]) * cur[:, i]
            right = (t[i + r + 1] - x) / (t[i + r + 1] - t[i + 1]) * cur[:, i + 1]
            nxt[:, i] = left + right
        cur = nxt
    return cur[:, :nb]


@pytest.mark.parametrize("grid_size", [1, 2, 3, 5, 8])
@pytest.mark.parametrize("order", [0, 1, 2, 3, 5])
def test_matches_naive_recursion(grid_size, order, rng):
    g = make_grid(grid_size, order, -1.0, 1.0)
    x = np.concatenate([rng.uniform(-1.0, 1.0, 200), [-1.0, 1.0]])
    got = basis(g, x)
    want = naive_bases(g, x)
    assert got.shape == (x.size, grid_size + order)
    np.testing.assert_allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("grid_size,order", [(1, 0), (4, 2), (10, 3), (7, 6)])
def test_partition_of_unity(grid_size, order, rng):
    g = make_grid(grid_size, order)
    x = np.concatenate([rng.uniform(-1.0, 1.0, 500), [-1.0, 1.0]])
    sums = basis(g, x).sum(axis=1)
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)


def test_support_width(rng):
    g = make_grid(10, 3)
    x = rng.uniform(-1.0, 1.0, 300)
    counts = (basis(g, x) != 0.0).sum(axis=1)
    assert counts.max() <= g.order + 1


def test_nonnegative(rng):
    g = make_grid(6, 4)
    x = rng.uniform(-1.0, 1.0, 300)
    assert basis(g, x).min() >= 0.0


def test_out_of_domain_clamps():
    g = make_grid(5, 2)
    hi = basis(g, np.array([1.0]))
    lo = basis(g, np.array([-1.0]))
    np.testing.assert_array_equal(basis(g, np.array([3.7])), hi)
    np.testing.assert_array_equal(basis(g, np.array([-2.5])), lo)


def test_custom_interval(rng):
    g = make_grid(4, 2, 0.0, 10.0)
    x = rng.uniform(0.0, 10.0, 100)
    np.testing.assert_allclose(basis(g, x), naive_bases(g, x), atol=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_grad_matches_finite_differences(order, rng):
    g = make_grid(6, order)
    # stay away from knots so finite differences do not straddle a kink
    x = rng.uniform(-0.95, 0.95, 120)
    step = (g.hi - g.lo) / g.grid_size
    dist = np.abs(x[:, None] - g.knots[None, :]).min(axis=1)
    x = x[dist > 1e-3 * step]
    h = 1e-6
    fd = (basis(g, x + h) - basis(g, x - h)) / (2.0 * h)
    np.testing.assert_allclose(basis_grad(g, x), fd, atol=1e-5)


def test_grad_order_zero_is_zero(rng):
    g = make_grid(4, 0)
    x = rng.uniform(-1.0, 1.0, 50)
    np.testing.assert_array_equal(basis_grad(g, x), 0.0)


def test_grad_sums_to_zero(rng):
    # derivative of the partition of unity
    g = make_grid(8, 3)
    x = rng.uniform(-1.0, 1.0, 200)
    np.testing.assert_allclose(basis_grad(g, x).sum(axis=1), 0.0, atol=1e-10)


def test_spline_eval_is_dot_product(rng):
    g = make_grid(7, 2)
    coeffs = rng.standard_normal(g.grid_size + g.order)
    x = rng.uniform(-1.0, 1.0, 64)
    want = basis(g, x) @ coeffs
    np.testing.assert_allclose(spline_eval(g, coeffs, x), want, atol=1e-14)


def test_spline_eval_constant(rng):
    g = make_grid(5, 3)
    x = rng.uniform(-1.0, 1.0, 64)
    ones = np.ones(g.grid_size + g.order)
    np.testing.assert_allclose(spline_eval(g, ones, x), 1.0, atol=1e-12)


def test_make_grid_validation():
    with pytest.raises(ContractError):
        make_grid(0, 2)
    with pytest.raises(ContractError):
        make_grid(5, -1)
    with pytest.raises(ContractError):
        make_grid(5, 2, 1.0, -1.0)


def test_tape_op_forward_matches(rng):
    g = make_grid(6, 2)
    xs = rng.uniform(-1.0, 1.0, (5, 8))
    t = Tensor(xs)
    np.testing.assert_array_equal(spline_bases(t, g).data,
                                  basis(g, xs.reshape(-1)).reshape(5, 8, -1))


def test_tape_op_gradient(rng):
    g = make_grid(6, 3)
    xs = rng.uniform(-0.9, 0.9, 40)
    t = Tensor(xs, requires_grad=True)
    w = rng.standard_normal((40, g.grid_size + g.order))
    loss = (spline_bases(t, g) * Tensor(w)).sum()
    backward(loss)
    want = (w * basis_grad(g, xs)).sum(axis=1)
    np.testing.assert_allclose(t.grad, want, atol=1e-12)


def test_tape_op_constant_input(rng):
    g = make_grid(4, 2)
    t = Tensor(rng.uniform(-1.0, 1.0, 10))
    out = spline_bases(t, g)
    assert not out.requires_grad
