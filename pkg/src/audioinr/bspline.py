"""Uniform B-spline bases on a bounded interval.

A grid of ``grid_size`` cells over [lo, hi] is extended by ``order``
knot steps on each side, giving ``grid_size + order`` basis functions
of degree ``order``.  Bases are evaluated with the iterative Cox-de
Boor recursion, seeded from a one-hot order-0 row, so any point in
range touches at most ``order + 1`` functions and the full set sums to
one.  Inputs are clamped to the domain before evaluation.

``spline_bases`` exposes the basis matrix to the autodiff engine, with
the derivative recurrence as its backward rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, ContractError, _node, _accum, _as_tensor


@dataclass(frozen=True)
class SplineGrid:
    """Uniform extended knot grid; build with make_grid."""
    grid_size: int
    order: int
    lo: float
    hi: float
    knots: np.ndarray = field(repr=False)

    @property
    def n_bases(self) -> int:
        return self.grid_size + self.order

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / self.grid_size


def make_grid(grid_size: int, order: int, lo: float = -1.0, hi: float = 1.0) -> SplineGrid:
    """Grid with grid_size + 2*order + 1 uniform knots over an extended [lo, hi]."""
    if grid_size < 1:
        raise ContractError(f"grid_size must be >= 1, got {grid_size}")
    if order < 0:
        raise ContractError(f"order must be >= 0, got {order}")
    if not hi > lo:
        raise ContractError(f"interval [{lo}, {hi}] is empty")
    h = (hi - lo) / grid_size
    knots = lo + h * np.arange(-order, grid_size + order + 1, dtype=np.float64)
    return SplineGrid(grid_size, order, float(lo), float(hi), knots)


def basis(grid: SplineGrid, x) -> np.ndarray:
    """Basis values B_i(x), shape x.shape + (n_bases,)."""
    b, _ = _bases_impl(np.asarray(x, dtype=np.float64), grid, want_deriv=False)
    return b


def basis_grad(grid: SplineGrid, x) -> np.ndarray:
    """Derivatives dB_i/dx, shape x.shape + (n_bases,)."""
    _, d = _bases_impl(np.asarray(x, dtype=np.float64), grid, want_deriv=True)
    return d


def _banded_impl(xf: np.ndarray, grid: SplineGrid, want_deriv: bool):
    """Band evaluation over flat points: only the k+1 bases covering a
    point are nonzero, so the recursion carries k+1 columns, each a
    contiguous 1-D vector.

    Returns (cell, band, dband): basis cell + p is the (cell + p)-th of
    the n_bases functions and takes value band[p], p = 0..k; dband is
    None unless requested.
    """
    G, k = grid.grid_size, grid.order
    h = grid.step
    # x == hi lands in the last cell, so the right endpoint stays covered
    cell = np.clip(np.floor((xf - grid.lo) / h).astype(np.int64), 0, G - 1)
    u = (xf - grid.lo) / h - cell          # position inside the cell, in [0, 1]

    band = [np.ones_like(xf)]
    prev = band
    for r in range(1, k + 1):
        if r == k:
            prev = band
        # B_{i,r} = (u + r - p)/r * B_{i,r-1} + (p + 1 - u)/r * B_{i+1,r-1}
        # in band coordinates p, with i = cell + p - r
        nxt = []
        for p in range(r + 1):
            acc = None
            if p >= 1:
                acc = (u + (r - p)) * band[p - 1]
            if p <= r - 1:
                t = ((p + 1) - u) * band[p]
                acc = t if acc is None else acc + t
            nxt.append(acc / r if r > 1 else acc)
        band = nxt

    if not want_deriv:
        return cell, band, None
    if k == 0:
        dband = [np.zeros_like(xf)]
    else:
        # uniform knots collapse the derivative recurrence to a
        # difference quotient of the order k-1 values
        dband = [-prev[0] / h]
        for p in range(1, k):
            dband.append((prev[p - 1] - prev[p]) / h)
        dband.append(prev[k - 1] / h)
    return cell, band, dband


def _scatter(cell: np.ndarray, band, grid: SplineGrid) -> np.ndarray:
    nb = grid.n_bases
    full = np.zeros(cell.size * nb)
    idx = np.arange(cell.size) * nb + cell
    for p, col in enumerate(band):
        full[idx + p] = col
    return full.reshape(cell.size, nb)


def _bases_impl(x: np.ndarray, grid: SplineGrid, want_deriv: bool):
    x = np.clip(x, grid.lo, grid.hi)
    shp = x.shape
    cell, band, dband = _banded_impl(x.reshape(-1), grid, want_deriv)
    bases = _scatter(cell, band, grid).reshape(shp + (grid.n_bases,))
    if not want_deriv:
        return bases, None
    return bases, _scatter(cell, dband, grid).reshape(shp + (grid.n_bases,))


def spline_eval(grid: SplineGrid, coeffs, x) -> np.ndarray:
    """Evaluate sum_i coeffs[i] * B_i(x) over a batch of points."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape[-1] != grid.n_bases:
        raise ContractError(f"need {grid.n_bases} coefficients, got {coeffs.shape[-1]}")
    return basis(grid, x) @ coeffs


def spline_bases(x: Tensor, grid: SplineGrid) -> Tensor:
    """Tape op: x (...,) -> basis matrix x.shape + (n_bases,).

    The backward rule contracts the output gradient with the analytic
    basis derivatives.  Points clamped at the boundary get the one-sided
    interior derivative; put a clamp op upstream when gradients must
    vanish out of range.
    """
    x = _as_tensor(x)
    xc = np.clip(x.data.astype(np.float64, copy=False), grid.lo, grid.hi)
    shp = xc.shape
    cell, band, dband = _banded_impl(xc.reshape(-1), grid, want_deriv=x.requires_grad)
    bases = _scatter(cell, band, grid).reshape(shp + (grid.n_bases,))
    bases = bases.astype(x.data.dtype, copy=False)
    idx = np.arange(cell.size) * grid.n_bases + cell

    def bwd(g):
        if x.requires_grad:
            gflat = g.reshape(-1)
            acc = gflat[idx] * dband[0]
            for p in range(1, grid.order + 1):
                acc += gflat[idx + p] * dband[p]
            _accum(x, acc.reshape(shp))

    return _node(bases, (x,), bwd)
